#pragma once

#include "dualcal/quality/metrics.hpp"
