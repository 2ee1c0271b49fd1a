#pragma once

// Umbrella header.

#include "e2b/adam.hpp"
#include "e2b/config.hpp"
#include "e2b/data_model.hpp"
#include "e2b/eb_solver.hpp"
#include "e2b/error.hpp"
#include "e2b/experiment.hpp"
#include "e2b/implicit_grad.hpp"
#include "e2b/inference.hpp"
#include "e2b/ipw.hpp"
#include "e2b/lbw_net.hpp"
#include "e2b/regressors.hpp"
#include "e2b/rng.hpp"
#include "e2b/synthgen.hpp"
#include "e2b/train.hpp"
