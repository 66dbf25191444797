#pragma once

#include "dualcal/pipeline/calibrate.hpp"
#include "dualcal/pipeline/config.hpp"
#include "dualcal/pipeline/manifest.hpp"
#include "dualcal/pipeline/protocol.hpp"
#include "dualcal/pipeline/stats.hpp"
#include "dualcal/pipeline/workspace.hpp"
