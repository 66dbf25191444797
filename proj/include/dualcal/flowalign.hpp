#pragma once

#include "dualcal/flowalign/flow.hpp"
