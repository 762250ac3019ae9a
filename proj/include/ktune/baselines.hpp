#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <vector>

#include "ktune/problem.hpp"
#include "ktune/tuner.hpp"

namespace ktune {

// The q-folded system: q copies of the dynamics on R^{nbar q} driven by one
// shared control, read out through diag(C, ..., C).
struct QFoldedProblem {
  Vector X0;      // stacked uplifted inputs, nbar q
  Vector Y;       // stacked targets, n_o q
  Matrix Lambda;  // block-diagonal readout, n_o q x nbar q
  Index copies = 0;
};

QFoldedProblem make_qfolded(const Problem& problem, std::span<const Index> indices);

// Euler flow of the stacked system; (N+1) x (nbar q). For the two-layer model
// the stacked system is run as one network on R^{nbar q} whose weights are the
// lifts diag(W, ..., W), stored densely.
RowMatrix stacked_flow(const Model& model, const ControlSignal& u, const QFoldedProblem& qf);

// 0.5 ||Lambda X_N - Y||^2 + coefficient * h * sum_l ||u[l] - anchor[l]||^2.
// With anchor = 0 this is the q-folded Bolza cost, with anchor = u0 the
// penalty-method cost.
struct JointObjective {
  double coefficient = 0.0;
  std::optional<ControlSignal> anchor;  // zero when empty
};

struct JointEvaluation {
  double cost = 0.0;
  double residual_norm = 0.0;  // ||Lambda X_N - Y||
  Vector gradient;
};

// Cost and gradient of the stacked system by a forward pass and a backward
// adjoint pass. Both work on the nbar q-dimensional state with dense lifted
// matrices, O((nbar q)^2 N) per iteration.
JointEvaluation evaluate_joint(const Model& model, const ControlSignal& u,
                               const QFoldedProblem& qf, const JointObjective& objective,
                               bool with_gradient = true);

struct QFoldedConfig {
  double step_size = 1.0;
  ArmijoConfig armijo;
  double regularization = 1e-3;      // coefficient of h sum ||u[l]||^2
  double residual_tolerance = 1e-2;  // stop once ||Lambda X_N - Y|| falls below
  int max_iterations = 20000;
  double init_scale = 0.1;  // initial entries ~ N(0, (init_scale / sqrt(nbar))^2)
  Index steps = 10;
  double horizon = 1.0;
};

struct TrainingCurvePoint {
  int iteration = 0;
  double cost = 0.0;
  double residual_norm = 0.0;
  double step = 0.0;
};

struct TrainResult {
  ControlSignal u;
  int iterations = 0;
  bool converged = false;
  double final_cost = 0.0;
  double final_residual_norm = 0.0;
  std::vector<TrainingCurvePoint> curve;
};

ControlSignal initial_control(const Model& model, Index steps, double horizon, double init_scale,
                              std::uint64_t seed);

// Gradient descent on the stacked cost from a given start.
TrainResult joint_descent(const Problem& problem, std::span<const Index> indices,
                          ControlSignal start, const JointObjective& objective, double step_size,
                          const ArmijoConfig& armijo, int max_iterations,
                          double residual_tolerance);

// q-folded training of the samples in `indices` from a seeded Gaussian start.
TrainResult qfolded_train(const Problem& problem, std::span<const Index> indices,
                          const QFoldedConfig& config, std::uint64_t seed);

struct PenaltyConfig {
  double lambda = 1.0;
  double step_size = 1.0;
  ArmijoConfig armijo;
  int iterations_per_round = 200;
  int rounds = 2;
};

struct PenaltyResult {
  ControlSignal u;
  TuningReport report;
};

// Descent on sum_i ||C phi(u, x^i) - y^i||^2 / 2 + lambda h sum ||u - u0||^2
// over the whole ensemble. Reports E on X^j, X^q_j, X^q after each round;
// round 0 is u0.
PenaltyResult penalty_tune(const Problem& problem, const ControlSignal& u0, Index j,
                           const PenaltyConfig& config);

struct ScalingRow {
  Index n = 0;
  Index q = 0;
  Index N = 0;
  double seconds_per_iteration = 0.0;
};

struct ScalingOptions {
  int min_iterations = 5;
  double min_seconds = 0.05;  // per measurement
  int repeats = 5;            // median over repeats
  std::uint64_t seed = 7;
};

// Times one q-folded gradient iteration (stacked flow + dense adjoint) for
// every (n, q) pair with nbar = n and n_o = 1.
std::vector<ScalingRow> qfolded_iteration_cost_probe(std::span<const Index> n_list,
                                                     std::span<const Index> q_list, Index N,
                                                     const ScalingOptions& options = {});

// Least-squares slope of log(y) against log(x).
double loglog_slope(std::span<const double> x, std::span<const double> y);

// CSV with header `n,q,N,seconds_per_iteration`.
void write_scaling_csv(std::ostream& os, std::span<const ScalingRow> rows);

}  // namespace ktune
