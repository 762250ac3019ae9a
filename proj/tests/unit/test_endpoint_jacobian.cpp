#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "ktune/endpoint_jacobian.hpp"
#include "ktune/error.hpp"
#include "test_support.hpp"

using namespace ktune;
using namespace ktune::testing;

namespace {

Vector endpoint(const Model& m, const ControlSignal& u, const Sample& s, const Readout& R) {
  return readout(R, flow(m, u, uplift(s.x, m.nbar())).final_state());
}

Sample random_sample(Index n, Index n_out, std::mt19937_64& rng) {
  return {random_vector(n, rng), random_vector(n_out, rng), 1};
}

}  // namespace

TEST(EndpointJacobian, ScalarDriftHasEqualBlocks) {
  const auto m = scalar_drift_model();
  const auto R = Readout::canonical(1, 1);
  const auto u = ControlSignal::gaussian(8, 1, 1.0, 3);
  const Sample s{Vector::Constant(1, 0.5), Vector::Zero(1), 1};
  const auto jac = endpoint_jacobian(m, u, s, R);
  EXPECT_TRUE(jac.L.isApprox(Matrix::Constant(1, 8, 1.0 / 8.0), 1e-15));

  const auto cost = per_sample_cost(m, u, s, R);
  const Vector g = cost_gradient(jac, cost);
  EXPECT_TRUE(g.isApprox(Vector::Constant(8, cost.residual[0] / 8.0), 1e-14));
}

TEST(EndpointJacobian, ScalarLinearEntries) {
  const auto m = scalar_linear_model();
  const auto R = Readout::canonical(1, 1);
  const ControlSignal u(RowMatrix::Ones(10, 1), 1.0);
  const Sample s{Vector::Ones(1), Vector::Zero(1), 1};
  const auto jac = endpoint_jacobian(m, u, s, R);
  ASSERT_EQ(jac.L.cols(), 10);
  for (Index l = 0; l < 10; ++l) {
    // x_l = 1.1^l, transition to the end 1.1^(N-1-l).
    const double closed = 0.1 * std::pow(1.1, static_cast<double>(l)) *
                          std::pow(1.1, static_cast<double>(9 - l));
    EXPECT_NEAR(jac.L(0, l), closed, 1e-14);
    const double eps = 1e-6;
    ControlSignal up = u, um = u;
    up.axpy(eps, Vector::Unit(10, l));
    um.axpy(-eps, Vector::Unit(10, l));
    const double fd = (endpoint(m, up, s, R)[0] - endpoint(m, um, s, R)[0]) / (2 * eps);
    EXPECT_NEAR(jac.L(0, l), fd, 1e-8);
  }
}

TEST(EndpointJacobian, DeskShape) {
  const auto m = Model::two_layer_tanh(8);
  const auto R = Readout::canonical(1, 8);
  const auto u = ControlSignal::gaussian(10, m.p(), 0.1, 1);
  const Sample s{(Vector(2) << 0.5, 1.5).finished(), Vector::Ones(1), 3};
  const auto jac = endpoint_jacobian(m, u, s, R);
  EXPECT_EQ(jac.L.rows(), 1);
  EXPECT_EQ(jac.L.cols(), 1440);
  EXPECT_EQ(jac.sample_index, 3);
  EXPECT_EQ(jac.control_version, u.version());
}

TEST(EndpointJacobian, MatchesFullFiniteDifferenceJacobian) {
  std::mt19937_64 rng(21);
  for (int k = 0; k < 5; ++k) {
    const auto m = Model::two_layer_tanh(3);
    const auto R = Readout::canonical(2, 3);
    const auto u = ControlSignal::gaussian(4, m.p(), 0.6, 100 + k);
    const auto s = random_sample(2, 2, rng);
    const auto jac = endpoint_jacobian(m, u, s, R);
    Matrix fd(2, u.size());
    for (Index c = 0; c < u.size(); ++c) {
      const double eps = 1e-6;
      ControlSignal up = u, um = u;
      up.axpy(eps, Vector::Unit(u.size(), c));
      um.axpy(-eps, Vector::Unit(u.size(), c));
      fd.col(c) = (endpoint(m, up, s, R) - endpoint(m, um, s, R)) / (2 * eps);
    }
    EXPECT_LE(rel_error(jac.L, fd), 1e-7);
  }
}

TEST(EndpointJacobian, FirstOrderAccuracy) {
  std::mt19937_64 rng(22);
  for (double eps : {1e-2, 1e-3}) {
    double ratio_sum = 0.0;
    for (int k = 0; k < 10; ++k) {
      const auto m = Model::two_layer_tanh(3);
      const auto R = Readout::canonical(1, 3);
      const auto u = ControlSignal::gaussian(5, m.p(), 0.7, 300 + k);
      const auto s = random_sample(2, 1, rng);
      const auto jac = endpoint_jacobian(m, u, s, R);
      Vector du = random_vector(u.size(), rng);
      du.normalize();
      const Vector base = endpoint(m, u, s, R);
      auto err = [&](double e) {
        ControlSignal up = u;
        up.axpy(e, du);
        return (endpoint(m, up, s, R) - base - e * jac.L * du).norm();
      };
      ratio_sum += err(eps / 2) / err(eps);
    }
    const double ratio = ratio_sum / 10.0;
    EXPECT_GE(ratio, 0.15);
    EXPECT_LE(ratio, 0.35);
  }
}

TEST(EndpointJacobian, TransitionsBackwardEqualForwardProduct) {
  const auto m = Model::two_layer_tanh(3);
  const auto u = ControlSignal::gaussian(6, m.p(), 0.5, 7);
  const Vector x0 = (Vector(3) << 0.3, -0.2, 0.0).finished();
  const auto traj = flow(m, u, x0);
  const auto phi = transition_matrices(m, u, traj);
  ASSERT_EQ(phi.size(), 7u);
  EXPECT_EQ(phi[6], Matrix::Identity(3, 3));
  for (Index l = 0; l < 6; ++l) {
    // Phi_l = F_{N-1} ... F_l, accumulated from the left end.
    Matrix prod = Matrix::Identity(3, 3);
    for (Index k = l; k < 6; ++k) {
      Matrix factor = Matrix::Identity(3, 3) + u.step_size() * jac_state(m, u.at(k), traj.state(k));
      prod = factor * prod;
    }
    EXPECT_LE((phi[static_cast<std::size_t>(l)] - prod).norm(), 1e-14 * prod.norm());
  }
}

TEST(PerSampleCost, Values) {
  const auto m = Model::two_layer_tanh(2);
  const auto R = Readout::canonical(2, 2);
  const auto u = ControlSignal::zeros(3, m.p());
  const Sample exact{(Vector(2) << 1, 2).finished(), (Vector(2) << 1, 2).finished(), 1};
  EXPECT_EQ(per_sample_cost(m, u, exact, R).value, 0.0);
  const Sample off{(Vector(2) << 1, 2).finished(), (Vector(2) << -2, -2).finished(), 1};
  const auto c = per_sample_cost(m, u, off, R);
  EXPECT_DOUBLE_EQ(c.value, 12.5);
  EXPECT_EQ(c.residual, (Vector(2) << 3, 4).finished());
}

TEST(CostGradient, MatchesCentralDifferences) {
  std::mt19937_64 rng(23);
  for (int k = 0; k < 10; ++k) {
    const auto m = Model::two_layer_tanh(3);
    const auto R = Readout::canonical(1, 3);
    const auto u = ControlSignal::gaussian(5, m.p(), 0.7, 500 + k);
    const auto s = random_sample(2, 1, rng);
    const auto lin = linearize(m, u, s, R);
    const Vector g = cost_gradient(lin.jacobian, lin.cost, u);
    Vector d = random_vector(u.size(), rng);
    d.normalize();
    const double eps = 1e-5;
    ControlSignal up = u, um = u;
    up.axpy(eps, d);
    um.axpy(-eps, d);
    const double fd =
        (per_sample_cost(m, up, s, R).value - per_sample_cost(m, um, s, R).value) / (2 * eps);
    EXPECT_LE(std::abs(fd - g.dot(d)), 1e-5 * std::max(std::abs(fd), g.norm()));
  }
}

TEST(CostGradient, MemorizedSampleHasZeroGradient) {
  const auto m = Model::two_layer_tanh(3);
  const auto R = Readout::canonical(1, 3);
  const auto u = ControlSignal::gaussian(5, m.p(), 0.5, 9);
  Sample s{(Vector(2) << 0.4, -0.1).finished(), Vector::Zero(1), 1};
  s.y = endpoint(m, u, s, R);
  const auto lin = linearize(m, u, s, R);
  EXPECT_LT(lin.cost.residual.norm(), 1e-10);
  EXPECT_LT(cost_gradient(lin.jacobian, lin.cost).norm(), 1e-9 * lin.jacobian.L.norm());
}

TEST(CostGradient, StaleStampsAreRejected) {
  const auto m = Model::two_layer_tanh(2);
  const auto R = Readout::canonical(1, 2);
  auto u = ControlSignal::gaussian(3, m.p(), 0.5, 1);
  const Sample s1{(Vector(2) << 0.1, 0.2).finished(), Vector::Ones(1), 1};
  const Sample s2{(Vector(2) << 0.3, 0.2).finished(), Vector::Ones(1), 2};
  const auto jac = endpoint_jacobian(m, u, s1, R);
  const auto cost1 = per_sample_cost(m, u, s1, R);
  EXPECT_NO_THROW(cost_gradient(jac, cost1, u));
  EXPECT_THROW(cost_gradient(jac, per_sample_cost(m, u, s2, R)), StaleJacobian);
  u.axpy(0.1, Vector::Ones(u.size()));
  EXPECT_THROW(cost_gradient(jac, cost1, u), StaleJacobian);
  EXPECT_THROW(cost_gradient(jac, per_sample_cost(m, u, s1, R)), StaleJacobian);
}
