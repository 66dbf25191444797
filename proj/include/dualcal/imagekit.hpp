#pragma once

#include "dualcal/imagekit/filter.hpp"
#include "dualcal/imagekit/image.hpp"
#include "dualcal/imagekit/png_io.hpp"
#include "dualcal/imagekit/resample.hpp"
