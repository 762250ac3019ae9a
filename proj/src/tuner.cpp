#include "ktune/tuner.hpp"

#include <algorithm>
#include <ostream>

#include "ktune/batch.hpp"
#include "ktune/error.hpp"
#include "ktune/text_format.hpp"

namespace ktune {

void TunerConfig::validate() const {
  if (!(step_size > 0.0)) throw InvalidArgument("tuner step size must be positive");
  if (!(regularization_step > 0.0)) throw InvalidArgument("regularization step must be positive");
  if (!(convergence_cost_threshold > 0.0)) throw InvalidArgument("cost threshold must be positive");
  if (!(regularization_target_tolerance > 0.0))
    throw InvalidArgument("regularization tolerance must be positive");
  if (!(rank_tolerance > 0.0)) throw InvalidArgument("rank tolerance must be positive");
  if (max_inner_iterations < 1 || max_regularization_iterations < 0)
    throw InvalidArgument("iteration budgets must be positive");
  if (recompute_every < 1) throw InvalidArgument("recompute_every must be at least 1");
  if (refinement_passes < 0 || rounds < 0) throw InvalidArgument("passes and rounds must be >= 0");
  if (!(drift_budget_factor >= 1.0)) throw InvalidArgument("drift budget factor must be >= 1");
  if (armijo.enabled && (!(armijo.contraction > 0.0 && armijo.contraction < 1.0) ||
                         !(armijo.slope > 0.0 && armijo.slope < 1.0)))
    throw InvalidArgument("Armijo contraction and slope must lie in (0, 1)");
}

TuningState::TuningState(ControlSignal u0, Index q_total, Index n_out, TunerConfig cfg)
    : u(std::move(u0)), stacked(q_total, n_out, u.size()), config(std::move(cfg)) {
  config.validate();
}

namespace {

struct LineSearch {
  bool accepted = false;
  double alpha = 0.0;
};

// Backtracking on J^i along -d. Without Armijo the first step is taken as is.
LineSearch line_search(const Problem& problem, const ControlSignal& u, Index sample_index,
                       const Vector& direction, double slope_term, double cost0, double alpha0,
                       const ArmijoConfig& armijo) {
  if (!armijo.enabled) return {true, alpha0};
  if (!(slope_term > 0.0)) return {};
  double alpha = alpha0;
  for (int k = 0; k <= armijo.max_backtracks; ++k) {
    ControlSignal trial = u;
    trial.axpy(-alpha, direction);
    try {
      const auto c = per_sample_cost(problem.model, trial, problem.ensemble[sample_index],
                                     problem.readout);
      if (c.value <= cost0 - armijo.slope * alpha * slope_term) return {true, alpha};
    } catch (const NumericalError&) {
      // blow-up counts as insufficient decrease
    }
    alpha *= armijo.contraction;
  }
  return {};
}

double memorized_cost_sum(const Problem& problem, const ControlSignal& u,
                          const std::vector<Index>& memorized) {
  double sum = 0.0;
  for (const auto& c : parallel::sample_costs(problem.model, u, problem.ensemble, memorized,
                                              problem.readout))
    sum += c.value;
  return sum;
}

void push_record(const Problem& problem, TuningState& state, PhaseRecord record) {
  record.step = state.history.empty() ? 1 : state.history.back().step + 1;
  record.u_norm_sq = state.u.norm_squared();
  record.memorized_cost_sum = memorized_cost_sum(problem, state.u, state.memorized);
  state.history.push_back(std::move(record));
}

std::vector<Index> sorted(std::vector<Index> v) {
  std::sort(v.begin(), v.end());
  return v;
}

}  // namespace

void refresh_blocks(const Problem& problem, TuningState& state, const std::vector<Index>& indices) {
  const auto lins = parallel::linearize_samples(problem.model, state.u, problem.ensemble, indices,
                                                problem.readout);
  for (const auto& lin : lins) state.stacked.update_block(lin.jacobian.sample_index, lin.jacobian);
}

ProjectedGradient projected_gradient(const Problem& problem, const ControlSignal& u,
                                     const StackedConstraints& constraints, Index sample_index,
                                     double rank_tolerance) {
  const auto lin = linearize(problem.model, u, problem.ensemble[sample_index], problem.readout);
  ProjectedGradient out;
  out.gradient = cost_gradient(lin.jacobian, lin.cost, u);
  const auto& P = constraints.projector(rank_tolerance);
  out.direction = P.project(out.gradient);
  out.rank = P.rank();
  out.cost = lin.cost;
  return out;
}

void phase1(const Problem& problem, TuningState& state, const std::vector<Index>& new_indices) {
  const auto& cfg = state.config;
  PhaseRecord record;
  record.round = 0;
  record.phase = "phase1";
  for (const Index i : new_indices) {
    if (std::find(state.memorized.begin(), state.memorized.end(), i) != state.memorized.end())
      throw InvalidArgument("sample " + std::to_string(i) + " is already memorized");
    bool converged = false;
    for (int it = 0;; ++it) {
      if (it % cfg.recompute_every == 0) refresh_blocks(problem, state, state.memorized);
      const auto pg = projected_gradient(problem, state.u, state.stacked, i, cfg.rank_tolerance);
      if (pg.cost.value <= cfg.convergence_cost_threshold) {
        converged = true;
        break;
      }
      if (it >= cfg.max_inner_iterations) break;
      const double slope_term = pg.gradient.dot(pg.direction);
      const auto ls = line_search(problem, state.u, i, pg.direction, slope_term, pg.cost.value,
                                  cfg.step_size, cfg.armijo);
      if (!ls.accepted) break;  // projected gradient vanished or no decrease found
      state.u.axpy(-ls.alpha, pg.direction);
      ++record.iterations;
    }
    if (!converged) record.unconverged.push_back(i);
    state.memorized.push_back(i);
    refresh_blocks(problem, state, {i});
  }
  // Leave every memorized block current for the next phase.
  refresh_blocks(problem, state, state.memorized);
  push_record(problem, state, std::move(record));
}

void phase2(const Problem& problem, TuningState& state) {
  const auto& cfg = state.config;
  PhaseRecord record;
  record.round = ++state.round;  // a refinement round opens with Phase II
  record.phase = "phase2";

  const auto memorized = sorted(state.memorized);
  std::vector<double> budget;
  for (const auto& c : parallel::sample_costs(problem.model, state.u, problem.ensemble, memorized,
                                              problem.readout))
    budget.push_back(std::max(cfg.drift_budget_factor * c.value, cfg.convergence_cost_threshold));

  for (int it = 0; it < cfg.max_regularization_iterations; ++it) {
    refresh_blocks(problem, state, memorized);
    const Vector d = state.stacked.projector(cfg.rank_tolerance).project(state.u.flat());
    const double before = state.u.norm_squared();
    if (d.squaredNorm() == 0.0 || before == 0.0) break;

    ControlSignal trial = state.u;
    trial.axpy(-cfg.regularization_step, d);
    bool within_budget = true;
    try {
      const auto costs = parallel::sample_costs(problem.model, trial, problem.ensemble, memorized,
                                                problem.readout);
      for (std::size_t k = 0; k < costs.size(); ++k)
        if (costs[k].value > budget[k]) within_budget = false;
    } catch (const NumericalError&) {
      within_budget = false;
    }
    if (!within_budget) {
      record.rolled_back = true;
      break;
    }
    state.u = std::move(trial);
    ++record.iterations;
    const double after = state.u.norm_squared();
    if ((before - after) / before < cfg.regularization_target_tolerance) break;
  }
  refresh_blocks(problem, state, memorized);
  push_record(problem, state, std::move(record));
}

void phase3(const Problem& problem, TuningState& state) {
  const auto& cfg = state.config;
  PhaseRecord record;
  record.round = std::max(1, state.round);
  record.phase = "phase3";

  const auto memorized = sorted(state.memorized);
  for (int pass = 0; pass < cfg.refinement_passes; ++pass) {
    for (const Index i : memorized) {
      std::vector<Index> others;
      for (const Index l : memorized)
        if (l != i) others.push_back(l);
      refresh_blocks(problem, state, others);
      state.stacked.deactivate(i);
      const auto pg = projected_gradient(problem, state.u, state.stacked, i, cfg.rank_tolerance);
      const double slope_term = pg.gradient.dot(pg.direction);
      const auto ls = line_search(problem, state.u, i, pg.direction, slope_term, pg.cost.value,
                                  cfg.step_size, cfg.armijo);
      if (ls.accepted) {
        state.u.axpy(-ls.alpha, pg.direction);
        ++record.iterations;
      }
    }
  }
  refresh_blocks(problem, state, memorized);
  push_record(problem, state, std::move(record));
}

void refinement_rounds(const Problem& problem, TuningState& state, int rounds) {
  if (rounds < 0) throw InvalidArgument("number of refinement rounds must be >= 0");
  for (int r = 0; r < rounds; ++r) {
    phase2(problem, state);
    phase3(problem, state);
  }
}

// --- reporting -------------------------------------------------------------

double TuningReport::value(int round, const std::string& phase, const std::string& set,
                           const std::string& metric) const {
  for (const auto& r : rows)
    if (r.round == round && r.phase == phase && r.set == set && r.metric == metric) return r.value;
  throw InvalidArgument("no report row for round " + std::to_string(round) + " " + phase + " " +
                        set + " " + metric);
}

bool TuningReport::has(int round, const std::string& phase, const std::string& set,
                       const std::string& metric) const {
  for (const auto& r : rows)
    if (r.round == round && r.phase == phase && r.set == set && r.metric == metric) return true;
  return false;
}

void append_metrics(const Problem& problem, const ControlSignal& u, Index j, int round,
                    const std::string& phase, int iterations, TuningReport& report) {
  const Index q = problem.ensemble.size();
  const std::pair<const char*, SubEnsembleView> sets[] = {
      {"memorized", SubEnsembleView::prefix(problem.ensemble, j)},
      {"new", SubEnsembleView::range(problem.ensemble, j, q)},
      {"all", SubEnsembleView::all(problem.ensemble)}};
  for (const auto& [name, view] : sets) {
    if (view.empty()) continue;
    const auto indices = view.indices();
    const auto costs = parallel::sample_costs(problem.model, u, problem.ensemble, indices,
                                              problem.readout);
    double err = 0.0, cost = 0.0;
    for (const auto& c : costs) {
      err += c.residual.norm();
      cost += c.value;
    }
    report.rows.push_back({round, phase, name, "avg_error", err / static_cast<double>(costs.size())});
    report.rows.push_back({round, phase, name, "cost_sum", cost});
  }
  report.rows.push_back({round, phase, "all", "u_norm_sq", u.norm_squared()});
  report.rows.push_back({round, phase, "all", "iterations", static_cast<double>(iterations)});
}

void write_report_csv(std::ostream& os, const TuningReport& report) {
  os << "round,phase,set,metric,value\n";
  for (const auto& r : report.rows)
    os << r.round << ',' << r.phase << ',' << r.set << ',' << r.metric << ','
       << text::format_double(r.value) << '\n';
}

TuneResult tune_without_forgetting(const Problem& problem, const ControlSignal& u0, Index j,
                                   const TunerConfig& config) {
  const Index q = problem.ensemble.size();
  if (j < 0 || j > q) throw InvalidArgument("cutoff j outside 0..q");
  if (u0.p() != problem.model.p()) throw InvalidArgument("control does not match the model");

  TuningState state(u0, q, problem.readout.outputs(), config);
  TuneResult result{u0, {}, {}};
  append_metrics(problem, state.u, j, 0, "initial", 0, result.report);

  std::vector<Index> prefix;
  for (Index i = 1; i <= j; ++i) prefix.push_back(i);
  for (const auto& c : parallel::sample_costs(problem.model, state.u, problem.ensemble, prefix,
                                              problem.readout))
    if (c.value > config.convergence_cost_threshold)
      result.report.warnings.push_back("u0 does not memorize sample " +
                                       std::to_string(c.sample_index) + " (cost " +
                                       text::format_double(c.value) + ")");
  state.memorized = prefix;

  std::vector<Index> fresh;
  for (Index i = j + 1; i <= q; ++i) fresh.push_back(i);
  phase1(problem, state, fresh);
  const auto& p1 = state.history.back();
  result.report.unconverged = p1.unconverged;
  for (const Index i : p1.unconverged)
    result.report.warnings.push_back("Phase I did not converge for sample " + std::to_string(i));
  append_metrics(problem, state.u, j, 0, "phase1", p1.iterations, result.report);

  for (int r = 1; r <= config.rounds; ++r) {
    phase2(problem, state);
    append_metrics(problem, state.u, j, r, "phase2", state.history.back().iterations,
                   result.report);
    phase3(problem, state);
    append_metrics(problem, state.u, j, r, "phase3", state.history.back().iterations,
                   result.report);
  }
  result.u = state.u;
  result.history = state.history;
  return result;
}

}  // namespace ktune
