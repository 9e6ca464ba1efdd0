#pragma once

#include "dualcbf/codegen.hpp"
#include "dualcbf/cost.hpp"
#include "dualcbf/dual.hpp"
#include "dualcbf/dynamics.hpp"
#include "dualcbf/error.hpp"
#include "dualcbf/filter.hpp"
#include "dualcbf/fixtures.hpp"
#include "dualcbf/lie.hpp"
#include "dualcbf/model_io.hpp"
#include "dualcbf/network.hpp"
#include "dualcbf/reverse.hpp"
#include "dualcbf/simulator.hpp"
#include "dualcbf/ulp.hpp"
