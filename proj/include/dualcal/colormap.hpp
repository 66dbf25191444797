#pragma once

#include "dualcal/colormap/lut.hpp"
#include "dualcal/colormap/lut3d.hpp"
