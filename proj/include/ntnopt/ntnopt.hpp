#pragma once

// Umbrella header: the whole mission-planning library in one include.

#include "ntnopt/bcd.hpp"
#include "ntnopt/common.hpp"
#include "ntnopt/conic/expr.hpp"
#include "ntnopt/conic/program.hpp"
#include "ntnopt/conic/solver.hpp"
#include "ntnopt/energy.hpp"
#include "ntnopt/evaluation.hpp"
#include "ntnopt/linkmodel.hpp"
#include "ntnopt/propulsion.hpp"
#include "ntnopt/rng.hpp"
#include "ntnopt/robustify.hpp"
#include "ntnopt/scenario.hpp"
#include "ntnopt/solvers.hpp"
