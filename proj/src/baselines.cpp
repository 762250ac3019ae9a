#include "ktune/baselines.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <ostream>
#include <random>

#include "ktune/error.hpp"
#include "ktune/text_format.hpp"

namespace ktune {

QFoldedProblem make_qfolded(const Problem& problem, std::span<const Index> indices) {
  if (indices.empty()) throw InvalidArgument("q-folded problem needs at least one sample");
  const Index n = problem.model.nbar();
  const Index no = problem.readout.outputs();
  const auto q = static_cast<Index>(indices.size());
  QFoldedProblem qf{Vector(n * q), Vector(no * q), Matrix::Zero(no * q, n * q), q};
  for (Index c = 0; c < q; ++c) {
    const auto& s = problem.ensemble[indices[c]];
    qf.X0.segment(c * n, n) = uplift(s.x, n);
    qf.Y.segment(c * no, no) = s.y;
    qf.Lambda.block(c * no, c * n, no, n) = problem.readout.matrix();
  }
  return qf;
}

namespace {

using RowMap = Eigen::Map<const RowMatrix>;

// Weights of one Euler step of the two-layer model lifted to the stacked
// state: diag(W, ..., W) materialized as dense (nbar q) x (nbar q) matrices.
struct LiftedStep {
  Matrix W1, W2;
  Vector b1, b2;
};

void lift_step(const double* u, Index n, Index copies, LiftedStep& out) {
  const Index M = n * copies;
  const RowMap W1(u, n, n);
  const Eigen::Map<const Vector> b1(u + n * n, n);
  const RowMap W2(u + n * n + n, n, n);
  const Eigen::Map<const Vector> b2(u + 2 * n * n + n, n);
  out.W1.setZero(M, M);
  out.W2.setZero(M, M);
  out.b1.resize(M);
  out.b2.resize(M);
  for (Index c = 0; c < copies; ++c) {
    out.W1.block(c * n, c * n, n, n) = W1;
    out.W2.block(c * n, c * n, n, n) = W2;
    out.b1.segment(c * n, n) = b1;
    out.b2.segment(c * n, n) = b2;
  }
}

void check_stacked(const Model& model, const ControlSignal& u, const QFoldedProblem& qf) {
  if (u.p() != model.p()) throw InvalidArgument("control does not match the model");
  if (qf.X0.size() != model.nbar() * qf.copies)
    throw InvalidArgument("stacked state does not match nbar");
}

// Forward pass of the lifted two-layer system; keeps tanh activations per step.
RowMatrix lifted_flow(const Model& model, const ControlSignal& u, const QFoldedProblem& qf,
                      RowMatrix* activations) {
  const Index n = model.nbar();
  const Index M = qf.X0.size();
  const Index N = u.steps();
  const double h = u.step_size();
  RowMatrix states(N + 1, M);
  if (activations) activations->resize(N, M);
  states.row(0) = qf.X0.transpose();
  LiftedStep lifted;
  Vector s(M), x(M);
  for (Index l = 0; l < N; ++l) {
    lift_step(u.at(l).data(), n, qf.copies, lifted);
    x = states.row(l).transpose();
    s.noalias() = lifted.W1 * x;
    s = (s + lifted.b1).array().tanh().matrix();
    x.noalias() += h * (lifted.W2 * s);
    x += h * lifted.b2;
    if (!x.allFinite())
      throw NumericalError("non-finite stacked state at Euler step " + std::to_string(l), l);
    states.row(l + 1) = x.transpose();
    if (activations) activations->row(l) = s.transpose();
  }
  return states;
}

RowMatrix blockwise_flow(const Model& model, const ControlSignal& u, const QFoldedProblem& qf) {
  const Index n = model.nbar();
  const Index N = u.steps();
  const double h = u.step_size();
  RowMatrix states(N + 1, qf.X0.size());
  states.row(0) = qf.X0.transpose();
  for (Index l = 0; l < N; ++l) {
    const auto ul = u.at(l);
    for (Index c = 0; c < qf.copies; ++c) {
      const Vector x = states.row(l).segment(c * n, n).transpose();
      const Vector next = x + h * eval_rhs(model, ul, x);
      if (!next.allFinite())
        throw NumericalError("non-finite stacked state at Euler step " + std::to_string(l), l);
      states.row(l + 1).segment(c * n, n) = next.transpose();
    }
  }
  return states;
}

// Adjoint pass for the lifted two-layer system. `adjoint` enters as
// Lambda^T r and the transposed step factor I + h df/dX is applied with dense
// lifted products.
void lifted_gradient(const Model& model, const ControlSignal& u, const QFoldedProblem& qf,
                     const RowMatrix& states, const RowMatrix& activations, Vector adjoint,
                     Vector& gradient) {
  const Index n = model.nbar();
  const Index M = qf.X0.size();
  const Index N = u.steps();
  const Index p = model.p();
  const double h = u.step_size();
  LiftedStep lifted;
  Vector mu(M), nu(M);
  for (Index l = N - 1; l >= 0; --l) {
    lift_step(u.at(l).data(), n, qf.copies, lifted);
    const auto s = activations.row(l).transpose();
    mu.noalias() = lifted.W2.transpose() * adjoint;
    nu = (1.0 - s.array().square()).matrix().cwiseProduct(mu);

    auto g = gradient.segment(l * p, p);
    g.setZero();
    Eigen::Map<RowMatrix> gW1(g.data(), n, n);
    auto gb1 = g.segment(n * n, n);
    Eigen::Map<RowMatrix> gW2(g.data() + n * n + n, n, n);
    auto gb2 = g.segment(2 * n * n + n, n);
    for (Index c = 0; c < qf.copies; ++c) {
      const auto nu_c = nu.segment(c * n, n);
      const auto lam_c = adjoint.segment(c * n, n);
      gW1.noalias() += nu_c * states.row(l).segment(c * n, n);
      gb1 += nu_c;
      gW2.noalias() += lam_c * activations.row(l).segment(c * n, n);
      gb2 += lam_c;
    }
    g *= h;

    adjoint.noalias() += h * (lifted.W1.transpose() * nu);
  }
}

void blockwise_gradient(const Model& model, const ControlSignal& u, const QFoldedProblem& qf,
                        const RowMatrix& states, Vector adjoint, Vector& gradient) {
  const Index n = model.nbar();
  const Index M = qf.X0.size();
  const Index N = u.steps();
  const Index p = model.p();
  const double h = u.step_size();
  Matrix A(M, M);
  Matrix B(M, p);
  Vector next(M);
  for (Index l = N - 1; l >= 0; --l) {
    const auto ul = u.at(l);
    A.setZero();
    for (Index c = 0; c < qf.copies; ++c) {
      const Vector x = states.row(l).segment(c * n, n).transpose();
      A.block(c * n, c * n, n, n) = jac_state(model, ul, x);
      B.middleRows(c * n, n) = jac_control(model, ul, x);
    }
    gradient.segment(l * p, p).noalias() = h * (B.transpose() * adjoint);
    A *= h;
    A.diagonal().array() += 1.0;
    next.noalias() = A.transpose() * adjoint;
    adjoint.swap(next);
  }
}

}  // namespace

RowMatrix stacked_flow(const Model& model, const ControlSignal& u, const QFoldedProblem& qf) {
  check_stacked(model, u, qf);
  if (model.kind() == ModelKind::TwoLayerTanh) return lifted_flow(model, u, qf, nullptr);
  return blockwise_flow(model, u, qf);
}

JointEvaluation evaluate_joint(const Model& model, const ControlSignal& u,
                               const QFoldedProblem& qf, const JointObjective& objective,
                               bool with_gradient) {
  check_stacked(model, u, qf);
  if (objective.anchor && objective.anchor->size() != u.size())
    throw InvalidArgument("anchor control has the wrong shape");
  const Index N = u.steps();
  const double h = u.step_size();
  const bool lifted = model.kind() == ModelKind::TwoLayerTanh;

  RowMatrix activations;
  const RowMatrix states = lifted ? lifted_flow(model, u, qf, &activations)
                                  : blockwise_flow(model, u, qf);
  const Vector r = qf.Lambda * states.row(N).transpose() - qf.Y;

  Vector offset = u.flat();
  if (objective.anchor) offset -= objective.anchor->flat();

  JointEvaluation out;
  out.residual_norm = r.norm();
  out.cost = 0.5 * r.squaredNorm() + objective.coefficient * h * offset.squaredNorm();
  if (!with_gradient) return out;

  out.gradient.resize(u.size());
  Vector adjoint = qf.Lambda.transpose() * r;
  if (lifted)
    lifted_gradient(model, u, qf, states, activations, std::move(adjoint), out.gradient);
  else
    blockwise_gradient(model, u, qf, states, std::move(adjoint), out.gradient);
  out.gradient += (2.0 * objective.coefficient * h) * offset;
  if (!out.gradient.allFinite()) throw NumericalError("stacked gradient is not finite");
  return out;
}

ControlSignal initial_control(const Model& model, Index steps, double horizon, double init_scale,
                              std::uint64_t seed) {
  const double stddev = init_scale / std::sqrt(static_cast<double>(model.nbar()));
  return ControlSignal::gaussian(steps, model.p(), stddev, seed, horizon);
}

TrainResult joint_descent(const Problem& problem, std::span<const Index> indices,
                          ControlSignal start, const JointObjective& objective, double step_size,
                          const ArmijoConfig& armijo, int max_iterations,
                          double residual_tolerance) {
  if (!(step_size > 0.0)) throw InvalidArgument("step size must be positive");
  const auto qf = make_qfolded(problem, indices);
  TrainResult result{std::move(start), 0, false, 0.0, 0.0, {}};
  auto& u = result.u;

  auto eval = evaluate_joint(problem.model, u, qf, objective);
  result.curve.push_back({0, eval.cost, eval.residual_norm, 0.0});
  for (int it = 0; it < max_iterations; ++it) {
    if (eval.residual_norm <= residual_tolerance) break;
    const double slope_term = eval.gradient.squaredNorm();
    if (slope_term == 0.0) break;

    double alpha = step_size;
    bool accepted = !armijo.enabled;
    if (armijo.enabled) {
      for (int k = 0; k <= armijo.max_backtracks; ++k) {
        ControlSignal trial = u;
        trial.axpy(-alpha, eval.gradient);
        try {
          const auto c = evaluate_joint(problem.model, trial, qf, objective, false);
          if (c.cost <= eval.cost - armijo.slope * alpha * slope_term) {
            accepted = true;
            break;
          }
        } catch (const NumericalError&) {
        }
        alpha *= armijo.contraction;
      }
    }
    if (!accepted) break;
    u.axpy(-alpha, eval.gradient);
    ++result.iterations;
    eval = evaluate_joint(problem.model, u, qf, objective);
    result.curve.push_back({result.iterations, eval.cost, eval.residual_norm, alpha});
  }
  result.final_cost = eval.cost;
  result.final_residual_norm = eval.residual_norm;
  result.converged = eval.residual_norm <= residual_tolerance;
  return result;
}

TrainResult qfolded_train(const Problem& problem, std::span<const Index> indices,
                          const QFoldedConfig& config, std::uint64_t seed) {
  if (indices.empty()) throw InvalidArgument("q-folded training needs a nonempty ensemble");
  if (config.regularization < 0.0) throw InvalidArgument("regularization must be >= 0");
  auto u = initial_control(problem.model, config.steps, config.horizon, config.init_scale, seed);
  return joint_descent(problem, indices, std::move(u), JointObjective{config.regularization, {}},
                       config.step_size, config.armijo, config.max_iterations,
                       config.residual_tolerance);
}

PenaltyResult penalty_tune(const Problem& problem, const ControlSignal& u0, Index j,
                           const PenaltyConfig& config) {
  if (config.lambda < 0.0) throw InvalidArgument("penalty lambda must be >= 0");
  if (config.rounds < 0 || config.iterations_per_round < 0)
    throw InvalidArgument("penalty rounds and iterations must be >= 0");
  if (u0.p() != problem.model.p()) throw InvalidArgument("control does not match the model");
  const auto all = SubEnsembleView::all(problem.ensemble).indices();

  PenaltyResult result{u0, {}};
  append_metrics(problem, u0, j, 0, "initial", 0, result.report);
  const JointObjective objective{config.lambda, u0};
  for (int r = 1; r <= config.rounds; ++r) {
    auto step = joint_descent(problem, all, result.u, objective, config.step_size, config.armijo,
                              config.iterations_per_round, 0.0);
    result.u = std::move(step.u);
    append_metrics(problem, result.u, j, r, "penalty", step.iterations, result.report);
  }
  return result;
}

// --- scaling probe ---------------------------------------------------------

std::vector<ScalingRow> qfolded_iteration_cost_probe(std::span<const Index> n_list,
                                                     std::span<const Index> q_list, Index N,
                                                     const ScalingOptions& options) {
  using clock = std::chrono::steady_clock;
  std::vector<ScalingRow> rows;
  for (const Index n : n_list) {
    const auto model = Model::two_layer_tanh(n);
    const auto readout = Readout::canonical(1, n);
    for (const Index q : q_list) {
      std::mt19937_64 rng(options.seed + static_cast<std::uint64_t>(1000 * n + q));
      std::normal_distribution<double> normal(0.0, 1.0);
      std::vector<Sample> samples;
      for (Index i = 1; i <= q; ++i) {
        Vector x(n), y(1);
        for (Index k = 0; k < n; ++k) x[k] = normal(rng);
        y[0] = x.norm() <= 1.0 ? -1.0 : 1.0;
        samples.push_back({x, y, i});
      }
      const Ensemble ensemble(n, 1, std::move(samples));
      const Problem problem{model, ensemble, readout};
      const auto indices = SubEnsembleView::all(ensemble).indices();
      const auto qf = make_qfolded(problem, indices);
      const auto u = initial_control(model, N, 1.0, 0.1, options.seed);
      const JointObjective objective{1e-3, {}};

      std::vector<double> samples_s;
      for (int rep = 0; rep < options.repeats; ++rep) {
        int iters = 0;
        const auto start = clock::now();
        double elapsed = 0.0;
        double sink = 0.0;
        while (iters < options.min_iterations || elapsed < options.min_seconds) {
          sink += evaluate_joint(model, u, qf, objective).gradient[0];
          ++iters;
          elapsed = std::chrono::duration<double>(clock::now() - start).count();
        }
        if (!std::isfinite(sink)) throw NumericalError("scaling probe produced non-finite values");
        samples_s.push_back(elapsed / iters);
      }
      std::nth_element(samples_s.begin(), samples_s.begin() + samples_s.size() / 2, samples_s.end());
      rows.push_back({n, q, N, samples_s[samples_s.size() / 2]});
    }
  }
  return rows;
}

double loglog_slope(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size() || x.size() < 2) throw InvalidArgument("slope fit needs >= 2 points");
  const auto m = static_cast<double>(x.size());
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (std::size_t k = 0; k < x.size(); ++k) {
    if (!(x[k] > 0.0) || !(y[k] > 0.0)) throw InvalidArgument("log-log fit needs positive data");
    const double lx = std::log(x[k]), ly = std::log(y[k]);
    sx += lx;
    sy += ly;
    sxx += lx * lx;
    sxy += lx * ly;
  }
  const double denom = m * sxx - sx * sx;
  if (denom == 0.0) throw InvalidArgument("slope fit needs distinct x values");
  return (m * sxy - sx * sy) / denom;
}

void write_scaling_csv(std::ostream& os, std::span<const ScalingRow> rows) {
  os << "n,q,N,seconds_per_iteration\n";
  for (const auto& r : rows)
    os << r.n << ',' << r.q << ',' << r.N << ',' << text::format_double(r.seconds_per_iteration)
       << '\n';
}

}  // namespace ktune
