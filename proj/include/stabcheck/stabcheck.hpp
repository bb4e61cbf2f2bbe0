#pragma once

#include "stabcheck/error.hpp"
#include "stabcheck/matrix.hpp"
#include "stabcheck/fixed_point.hpp"
#include "stabcheck/diagram.hpp"
#include "stabcheck/sim.hpp"
#include "stabcheck/lyapunov.hpp"
#include "stabcheck/mtl.hpp"
#include "stabcheck/falsify.hpp"
#include "stabcheck/bmc.hpp"
#include "stabcheck/bench.hpp"
#include "stabcheck/report.hpp"
