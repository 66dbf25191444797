#pragma once

#include "dualcal/registration/homography.hpp"
#include "dualcal/registration/match.hpp"
#include "dualcal/registration/scale_align.hpp"
#include "dualcal/registration/sift.hpp"
#include "dualcal/registration/warp.hpp"
