#pragma once

#include "ccprisk/calibration.hpp"
#include "ccprisk/commands.hpp"
#include "ccprisk/core_model.hpp"
#include "ccprisk/errors.hpp"
#include "ccprisk/factor_quadrature.hpp"
#include "ccprisk/io.hpp"
#include "ccprisk/normal.hpp"
#include "ccprisk/scenario_engine.hpp"
