#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <sstream>

#include "ktune/baselines.hpp"
#include "ktune/error.hpp"
#include "test_support.hpp"

using namespace ktune;
using namespace ktune::testing;

namespace {

struct RandomSetup {
  Model model;
  Readout readout;
  Ensemble ensemble;
  RandomSetup(Index nbar, Index q, std::uint64_t seed)
      : model(Model::two_layer_tanh(nbar)),
        readout(Readout::canonical(1, nbar)),
        ensemble([&] {
          std::mt19937_64 rng(seed);
          return random_ensemble(q, 2, 1, rng);
        }()) {}
  Problem problem() const { return {model, ensemble, readout}; }
  std::vector<Index> all() const { return SubEnsembleView::all(ensemble).indices(); }
};

}  // namespace

TEST(QFolded, StackedLayout) {
  RandomSetup s(4, 3, 1);
  const auto idx = s.all();
  const auto qf = make_qfolded(s.problem(), idx);
  EXPECT_EQ(qf.copies, 3);
  EXPECT_EQ(qf.X0.size(), 12);
  EXPECT_EQ(qf.Y.size(), 3);
  EXPECT_EQ(qf.Lambda.rows(), 3);
  EXPECT_EQ(qf.Lambda.cols(), 12);
  EXPECT_EQ(qf.X0.segment(4, 4), uplift(s.ensemble[2].x, 4));
  EXPECT_EQ(qf.Lambda.block(1, 4, 1, 4), s.readout.matrix());
  EXPECT_TRUE(qf.Lambda.block(0, 4, 1, 4).isZero(0.0));
}

TEST(QFolded, StackedFlowEqualsConcatenatedFlows) {
  for (Index q = 1; q <= 8; ++q) {
    RandomSetup s(3, q, 10 + q);
    const auto idx = s.all();
    const auto qf = make_qfolded(s.problem(), idx);
    const auto u = ControlSignal::gaussian(6, s.model.p(), 0.5, 20 + q);
    const auto stacked = stacked_flow(s.model, u, qf);
    for (Index i = 1; i <= q; ++i) {
      const auto traj = flow(s.model, u, uplift(s.ensemble[i].x, 3));
      EXPECT_LE((stacked.middleCols((i - 1) * 3, 3) - traj.states).cwiseAbs().maxCoeff(), 1e-12);
    }
  }
}

TEST(QFolded, ControlAffineStackedFlow) {
  const auto model = scalar_linear_model();
  const auto R = Readout::canonical(1, 1);
  const Ensemble e(1, 1, {{Vector::Constant(1, 1.0), Vector::Zero(1), 1},
                          {Vector::Constant(1, 2.0), Vector::Zero(1), 2}});
  const std::vector<Index> idx{1, 2};
  const auto qf = make_qfolded({model, e, R}, idx);
  const auto st = stacked_flow(model, ControlSignal(RowMatrix::Ones(10, 1), 1.0), qf);
  EXPECT_NEAR(st(10, 0), std::pow(1.1, 10), 1e-12);
  EXPECT_NEAR(st(10, 1), 2 * std::pow(1.1, 10), 1e-12);
}

TEST(QFolded, GradientMatchesPerSampleSumAndFiniteDifferences) {
  RandomSetup s(3, 4, 2);
  const auto idx = s.all();
  const auto qf = make_qfolded(s.problem(), idx);
  const auto u = ControlSignal::gaussian(5, s.model.p(), 0.5, 3);
  const JointObjective obj{0.3, {}};
  const auto ev = evaluate_joint(s.model, u, qf, obj);

  Vector expected = 2.0 * 0.3 * u.step_size() * u.flat();
  for (const Index i : idx) {
    const auto lin = linearize(s.model, u, s.ensemble[i], s.readout);
    expected += cost_gradient(lin.jacobian, lin.cost);
  }
  EXPECT_LE(rel_error(ev.gradient, expected), 1e-12);

  std::mt19937_64 rng(4);
  for (int k = 0; k < 5; ++k) {
    Vector d = random_vector(u.size(), rng);
    d.normalize();
    const double eps = 1e-5;
    ControlSignal up = u, um = u;
    up.axpy(eps, d);
    um.axpy(-eps, d);
    const double fd = (evaluate_joint(s.model, up, qf, obj, false).cost -
                       evaluate_joint(s.model, um, qf, obj, false).cost) /
                      (2 * eps);
    EXPECT_LE(std::abs(fd - ev.gradient.dot(d)), 1e-5 * std::max(std::abs(fd), ev.gradient.norm()));
  }
}

TEST(QFolded, ControlAffineGradientMatchesPerSampleSum) {
  const auto model = scalar_linear_model();
  const auto R = Readout::canonical(1, 1);
  const Ensemble e(1, 1, {{Vector::Constant(1, 1.0), Vector::Constant(1, 2.0), 1},
                          {Vector::Constant(1, -0.5), Vector::Constant(1, 0.1), 2}});
  const std::vector<Index> idx{1, 2};
  const auto qf = make_qfolded({model, e, R}, idx);
  const auto u = ControlSignal::gaussian(7, 1, 0.5, 5);
  const auto ev = evaluate_joint(model, u, qf, JointObjective{});
  Vector expected = Vector::Zero(u.size());
  for (const Index i : idx) {
    const auto lin = linearize(model, u, e[i], R);
    expected += cost_gradient(lin.jacobian, lin.cost);
  }
  EXPECT_LE(rel_error(ev.gradient, expected), 1e-13);
}

TEST(QFolded, SingleCopyMatchesPlainGradientDescent) {
  RandomSetup s(3, 1, 6);
  const auto idx = s.all();
  QFoldedConfig cfg;
  cfg.armijo.enabled = false;
  cfg.regularization = 0.0;
  cfg.step_size = 0.5;
  cfg.max_iterations = 5;
  cfg.residual_tolerance = 0.0;
  cfg.steps = 5;
  const auto tr = qfolded_train(s.problem(), idx, cfg, 9);
  ControlSignal u = initial_control(s.model, 5, 1.0, cfg.init_scale, 9);
  for (int k = 0; k < 5; ++k) {
    const auto lin = linearize(s.model, u, s.ensemble[1], s.readout);
    u.axpy(-cfg.step_size, cost_gradient(lin.jacobian, lin.cost));
  }
  EXPECT_EQ(tr.iterations, 5);
  EXPECT_LE((tr.u.flat() - u.flat()).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(QFolded, TrainsDeskScaleEnsemble) {
  const auto e = generate_ball_dataset({8, 1, 0.1, 2.0});
  const auto model = Model::two_layer_tanh(8);
  const auto R = Readout::canonical(1, 8);
  const auto idx = SubEnsembleView::all(e).indices();
  const auto tr = qfolded_train({model, e, R}, idx, QFoldedConfig{}, 3);
  EXPECT_TRUE(tr.converged);
  EXPECT_LE(average_error(model, tr.u, SubEnsembleView::all(e), R), 0.05);
  for (std::size_t k = 1; k < tr.curve.size(); ++k)
    EXPECT_LE(tr.curve[k].cost, tr.curve[k - 1].cost);
  EXPECT_THROW(qfolded_train({model, e, R}, std::vector<Index>{}, QFoldedConfig{}, 3),
               InvalidArgument);
}

TEST(Penalty, ZeroLambdaEqualsUnregularizedQFolded) {
  RandomSetup s(3, 4, 7);
  const auto u0 = ControlSignal::gaussian(5, s.model.p(), 0.3, 8);
  PenaltyConfig pc;
  pc.lambda = 0.0;
  pc.armijo.enabled = false;
  pc.step_size = 0.2;
  pc.iterations_per_round = 7;
  pc.rounds = 1;
  const auto pen = penalty_tune(s.problem(), u0, 2, pc);
  const auto idx = s.all();
  const auto plain = joint_descent(s.problem(), idx, u0, JointObjective{0.0, {}}, 0.2, pc.armijo,
                                   7, 0.0);
  EXPECT_LE((pen.u.flat() - plain.u.flat()).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(Penalty, HugeLambdaPinsControl) {
  RandomSetup s(3, 4, 9);
  const auto u0 = ControlSignal::gaussian(5, s.model.p(), 0.3, 10);
  PenaltyConfig pc;
  pc.lambda = 1e8;
  pc.iterations_per_round = 50;
  const auto pen = penalty_tune(s.problem(), u0, 2, pc);
  EXPECT_LE((pen.u.flat() - u0.flat()).norm(), 1e-3 * u0.flat().norm());
  const auto& rep = pen.report;
  EXPECT_EQ(rep.value(0, "initial", "all", "avg_error"),
            average_error(s.model, u0, SubEnsembleView::all(s.ensemble), s.readout));
  EXPECT_NEAR(rep.value(2, "penalty", "all", "avg_error"),
              rep.value(0, "initial", "all", "avg_error"), 1e-3);
  pc.lambda = -1.0;
  EXPECT_THROW(penalty_tune(s.problem(), u0, 2, pc), InvalidArgument);
}

TEST(Scaling, ProbeAndFit) {
  const std::vector<Index> ns{2};
  const std::vector<Index> qs{1, 2, 4};
  ScalingOptions opt;
  opt.min_seconds = 0.005;
  opt.repeats = 1;
  const auto rows = qfolded_iteration_cost_probe(ns, qs, 4, opt);
  ASSERT_EQ(rows.size(), 3u);
  EXPECT_EQ(rows[0].q, 1);
  for (const auto& r : rows) EXPECT_GT(r.seconds_per_iteration, 0.0);
  std::ostringstream os;
  write_scaling_csv(os, rows);
  EXPECT_EQ(os.str().substr(0, os.str().find('\n')), "n,q,N,seconds_per_iteration");

  const std::vector<double> x{1, 2, 4, 8};
  const std::vector<double> y{3, 12, 48, 192};
  EXPECT_NEAR(loglog_slope(x, y), 2.0, 1e-12);
  EXPECT_THROW(loglog_slope(std::vector<double>{1.0}, std::vector<double>{1.0}), InvalidArgument);
}
