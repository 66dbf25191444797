#pragma once

#include "dualcal/annosvc/annotation.hpp"
#include "dualcal/annosvc/service.hpp"
