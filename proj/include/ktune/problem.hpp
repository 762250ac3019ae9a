#pragma once

#include "ktune/dynamics.hpp"
#include "ktune/ensemble.hpp"

namespace ktune {

// The fixed pieces every training method works against. Non-owning.
struct Problem {
  const Model& model;
  const Ensemble& ensemble;
  const Readout& readout;
};

// Backtracking on the sufficient-decrease condition
//   J(u - a d) <= J(u) - slope * a * <g, d>.
struct ArmijoConfig {
  bool enabled = true;
  double contraction = 0.5;
  double slope = 1e-4;
  int max_backtracks = 40;
};

}  // namespace ktune
