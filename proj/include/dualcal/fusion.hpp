#pragma once

#include "dualcal/fusion/fusion.hpp"
