#pragma once

#include "artifacts.hpp"
#include "balance_solver.hpp"
#include "config.hpp"
#include "csv.hpp"
#include "data_model.hpp"
#include "diagnostics.hpp"
#include "distributions.hpp"
#include "errors.hpp"
#include "estimator.hpp"
#include "gibbs.hpp"
#include "linear_model.hpp"
#include "parallel.hpp"
#include "pooling.hpp"
#include "projection.hpp"
#include "simulator.hpp"
