#pragma once

// Constant-lag neural delay differential equations: fixed-step DDE solving
// with dense output, adjoint gradients for weights and delays, delay-bounded
// models, the training loop, dataset generators, and delayed mutual
// information diagnostics.

#include "ddekit/adjoint.hpp"
#include "ddekit/data.hpp"
#include "ddekit/errors.hpp"
#include "ddekit/finite_diff.hpp"
#include "ddekit/gradcheck.hpp"
#include "ddekit/history.hpp"
#include "ddekit/io.hpp"
#include "ddekit/loss.hpp"
#include "ddekit/mi.hpp"
#include "ddekit/mlp.hpp"
#include "ddekit/model.hpp"
#include "ddekit/optim.hpp"
#include "ddekit/rng.hpp"
#include "ddekit/solver.hpp"
#include "ddekit/trajectory.hpp"
#include "ddekit/train.hpp"
