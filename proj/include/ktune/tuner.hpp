#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "ktune/endpoint_jacobian.hpp"
#include "ktune/kernel_projection.hpp"
#include "ktune/problem.hpp"

namespace ktune {

struct TunerConfig {
  double step_size = 0.1;  // Phase I and Phase III
  ArmijoConfig armijo;
  double convergence_cost_threshold = 1e-4;
  int max_inner_iterations = 2000;
  // Phase I refreshes the memorized blocks every k-th inner iteration.
  int recompute_every = 1;

  double regularization_step = 0.01;  // Phase II
  double regularization_target_tolerance = 1e-4;
  int max_regularization_iterations = 50;
  // A memorized sample may not exceed max(factor * its pre-phase cost, threshold)
  // during Phase II.
  double drift_budget_factor = 2.0;

  int refinement_passes = 5;  // P, Phase III sweeps per round
  int rounds = 2;             // R, refinement rounds
  double rank_tolerance = kDefaultRankTolerance;

  void validate() const;
};

struct PhaseRecord {
  std::uint64_t step = 0;  // strictly increasing within a state
  int round = 0;
  std::string phase;
  int iterations = 0;
  double u_norm_sq = 0.0;
  double memorized_cost_sum = 0.0;
  bool rolled_back = false;
  std::vector<Index> unconverged;  // Phase I samples that hit the budget
};

struct TuningState {
  ControlSignal u;
  std::vector<Index> memorized;  // index order of insertion
  StackedConstraints stacked;
  TunerConfig config;
  std::vector<PhaseRecord> history;
  int round = 0;  // refinement rounds started so far

  TuningState(ControlSignal u0, Index q_total, Index n_out, TunerConfig config);
};

// Gradient of J^i at u and its projection onto the kernel of the stacked
// Jacobians of `constraints`.
struct ProjectedGradient {
  Vector gradient;
  Vector direction;
  PerSampleCost cost;
  Index rank = 0;
};

// Refreshes the Jacobian blocks of `indices` at `state.u`.
void refresh_blocks(const Problem& problem, TuningState& state, const std::vector<Index>& indices);

ProjectedGradient projected_gradient(const Problem& problem, const ControlSignal& u,
                                     const StackedConstraints& constraints, Index sample_index,
                                     double rank_tolerance);

// Kernel-projected gradient descent over the new samples, one at a time.
void phase1(const Problem& problem, TuningState& state, const std::vector<Index>& new_indices);
// Projected descent on ||u||^2 inside the kernel of all memorized samples.
void phase2(const Problem& problem, TuningState& state);
// P round-robin sweeps; sample i steps in the kernel of all the others.
void phase3(const Problem& problem, TuningState& state);
// R x (phase2; phase3).
void refinement_rounds(const Problem& problem, TuningState& state, int rounds);

struct ReportRow {
  int round = 0;
  std::string phase;
  std::string set;  // memorized | new | all
  std::string metric;  // avg_error | cost_sum | u_norm_sq | iterations
  double value = 0.0;
};

struct TuningReport {
  std::vector<ReportRow> rows;
  std::vector<std::string> warnings;
  std::vector<Index> unconverged;

  // Value of (round, phase, set, metric); throws when absent.
  double value(int round, const std::string& phase, const std::string& set,
               const std::string& metric) const;
  bool has(int round, const std::string& phase, const std::string& set,
           const std::string& metric) const;
};

// Appends avg_error/cost_sum for X^j, X^q_j, X^q (empty sets skipped) and
// u_norm_sq/iterations on "all".
void append_metrics(const Problem& problem, const ControlSignal& u, Index j, int round,
                    const std::string& phase, int iterations, TuningReport& report);

// CSV with header `round,phase,set,metric,value`.
void write_report_csv(std::ostream& os, const TuningReport& report);

struct TuneResult {
  ControlSignal u;
  TuningReport report;
  std::vector<PhaseRecord> history;
};

// Seeds memorized = X^j from u0, runs Phase I on j+1..q and then R refinement
// rounds. Round 0 rows ("initial") are the metrics of u0.
TuneResult tune_without_forgetting(const Problem& problem, const ControlSignal& u0, Index j,
                                   const TunerConfig& config);

}  // namespace ktune
