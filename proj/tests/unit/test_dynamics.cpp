#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <sstream>

#include "ktune/dynamics.hpp"
#include "ktune/error.hpp"
#include "test_support.hpp"

using namespace ktune;
using namespace ktune::testing;

namespace {

// Direct evaluation of W2 tanh(W1 x + b1) + b2 from the row-major layout,
// written independently of the library's devectorize.
Vector reference_rhs(const Vector& u, const Vector& x) {
  const Index n = x.size();
  Vector z(n), out(n);
  for (Index i = 0; i < n; ++i) {
    double s = u[n * n + i];
    for (Index k = 0; k < n; ++k) s += u[i * n + k] * x[k];
    z[i] = std::tanh(s);
  }
  const Index off = n * n + n;
  for (Index i = 0; i < n; ++i) {
    double s = u[off + n * n + i];
    for (Index k = 0; k < n; ++k) s += u[off + i * n + k] * z[k];
    out[i] = s;
  }
  return out;
}

Matrix fd_state(const Model& m, const Vector& u, const Vector& x) {
  Matrix J(x.size(), x.size());
  for (Index k = 0; k < x.size(); ++k) {
    const double eps = 1e-6 * std::max(1.0, std::abs(x[k]));
    Vector xp = x, xm = x;
    xp[k] += eps;
    xm[k] -= eps;
    J.col(k) = (eval_rhs(m, u, xp) - eval_rhs(m, u, xm)) / (2 * eps);
  }
  return J;
}

Matrix fd_control(const Model& m, const Vector& u, const Vector& x) {
  Matrix J(x.size(), u.size());
  for (Index k = 0; k < u.size(); ++k) {
    const double eps = 1e-6 * std::max(1.0, std::abs(u[k]));
    Vector up = u, um = u;
    up[k] += eps;
    um[k] -= eps;
    J.col(k) = (eval_rhs(m, up, x) - eval_rhs(m, um, x)) / (2 * eps);
  }
  return J;
}

}  // namespace

TEST(Dynamics, ParameterCount) {
  EXPECT_EQ(two_layer_param_count(8), 144);
  EXPECT_EQ(Model::two_layer_tanh(8).p(), 144);
  EXPECT_EQ(Model::two_layer_tanh(3).p(), 24);
}

TEST(Dynamics, VectorizeRoundTrip) {
  std::mt19937_64 rng(1);
  for (Index nbar : {1, 3, 8}) {
    const Vector u = random_vector(two_layer_param_count(nbar), rng);
    EXPECT_EQ(vectorize(devectorize(u, nbar)), u);
  }
  TanhLayerParams zero{Matrix::Zero(3, 3), Vector::Zero(3), Matrix::Zero(3, 3), Vector::Zero(3)};
  EXPECT_TRUE(vectorize(zero).isZero(0.0));
  EXPECT_THROW(devectorize(Vector::Zero(5), 3), InvalidArgument);
}

TEST(Dynamics, LayoutIsRowMajor) {
  Vector u = Vector::Zero(two_layer_param_count(2));
  u[1] = 5.0;  // W1(0, 1)
  const auto p = devectorize(u, 2);
  EXPECT_EQ(p.W1(0, 1), 5.0);
  EXPECT_EQ(p.W1(1, 0), 0.0);
}

TEST(Dynamics, UpliftAndReadout) {
  const Vector x = (Vector(2) << 0.3, -0.7).finished();
  const Vector up = uplift(x, 8);
  ASSERT_EQ(up.size(), 8);
  EXPECT_EQ(up.head(2), x);
  EXPECT_TRUE(up.tail(6).isZero(0.0));
  EXPECT_EQ(uplift(x, 2), x);
  EXPECT_TRUE(uplift(Vector::Zero(2), 8).isZero(0.0));
  EXPECT_THROW(uplift(x, 1), InvalidArgument);

  const auto R = Readout::canonical(1, 8);
  EXPECT_EQ(R.matrix(), (Matrix(1, 8) << 0, 0, 0, 0, 0, 0, 0, 1).finished());
  EXPECT_EQ(readout(R, Vector::Unit(8, 7))[0], 1.0);
  EXPECT_EQ(readout(R, up)[0], 0.0);
  const auto I = Readout::canonical(3, 3);
  const Vector v = (Vector(3) << 1, 2, 3).finished();
  EXPECT_EQ(readout(I, v), v);
  EXPECT_THROW(readout(R, x), InvalidArgument);
  EXPECT_THROW(Readout(Matrix::Zero(1, 3)), InvalidArgument);
}

TEST(Dynamics, ReadoutOfUpliftIsZeroWhenOnlyPaddingIsRead) {
  std::mt19937_64 rng(2);
  const auto R = Readout::canonical(3, 8);
  for (int k = 0; k < 20; ++k)
    EXPECT_TRUE(readout(R, uplift(random_vector(2, rng), 8)).isZero(0.0));
}

TEST(Dynamics, RhsSpecialCases) {
  const auto m = Model::two_layer_tanh(3);
  std::mt19937_64 rng(3);
  const Vector x = random_vector(3, rng);
  EXPECT_TRUE(eval_rhs(m, Vector::Zero(m.p()), x).isZero(0.0));

  TanhLayerParams p{Matrix::Zero(3, 3), Vector::Zero(3), random_matrix(3, 3, rng),
                    (Vector(3) << 1, -2, 3).finished()};
  EXPECT_EQ(eval_rhs(m, vectorize(p), x), p.b2);
}

TEST(Dynamics, RhsMatchesIndependentFormula) {
  const auto m = Model::two_layer_tanh(3);
  std::mt19937_64 rng(4);
  for (int k = 0; k < 20; ++k) {
    const Vector u = random_vector(m.p(), rng);
    const Vector x = random_vector(3, rng);
    EXPECT_LE((eval_rhs(m, u, x) - reference_rhs(u, x)).norm(), 1e-14);
  }
}

TEST(Dynamics, JacobiansMatchFiniteDifferences) {
  std::mt19937_64 rng(5);
  for (Index nbar : {2, 3, 8}) {
    const auto m = Model::two_layer_tanh(nbar);
    for (int k = 0; k < 10; ++k) {
      const Vector u = random_vector(m.p(), rng, 0.7);
      const Vector x = random_vector(nbar, rng);
      EXPECT_LE(rel_error(jac_state(m, u, x), fd_state(m, u, x)), 1e-6);
      EXPECT_LE(rel_error(jac_control(m, u, x), fd_control(m, u, x)), 1e-6);
    }
  }
}

TEST(Dynamics, JacobianSpecialCases) {
  const auto m = Model::two_layer_tanh(3);
  std::mt19937_64 rng(6);
  const Vector x = random_vector(3, rng);
  const Vector zero = Vector::Zero(m.p());
  EXPECT_TRUE(jac_state(m, zero, x).isZero(0.0));
  const Matrix B = jac_control(m, zero, x);
  EXPECT_TRUE(B.leftCols(m.p() - 3).isZero(0.0));
  EXPECT_EQ(B.rightCols(3), Matrix::Identity(3, 3));

  const auto lin = scalar_linear_model();
  const Vector u = Vector::Constant(1, 0.7);
  const Vector x1 = Vector::Constant(1, 2.0);
  EXPECT_DOUBLE_EQ(jac_state(lin, u, x1)(0, 0), 0.7);
  EXPECT_DOUBLE_EQ(jac_control(lin, u, x1)(0, 0), 2.0);
}

TEST(Dynamics, ControlAffineColumnsAreFields) {
  VectorField f1{[](const Vector& x) { return Vector(x.array().sin()); },
                 [](const Vector& x) { return Matrix(x.array().cos().matrix().asDiagonal()); }};
  VectorField f2{[](const Vector& x) { return Vector(x.array().square()); },
                 [](const Vector& x) { return Matrix((2 * x).asDiagonal()); }};
  const auto m = Model::control_affine(2, {f1, f2});
  std::mt19937_64 rng(7);
  const Vector x = random_vector(2, rng);
  for (int k = 0; k < 3; ++k) {
    const Matrix B = jac_control(m, random_vector(2, rng), x);
    EXPECT_EQ(B.col(0), f1.value(x));
    EXPECT_EQ(B.col(1), f2.value(x));
  }
  const Vector u = random_vector(2, rng);
  EXPECT_LE(rel_error(jac_state(m, u, x), fd_state(m, u, x)), 1e-6);
}

TEST(Dynamics, EulerClosedForm) {
  const auto m = scalar_linear_model();
  const auto u = ControlSignal(RowMatrix::Ones(10, 1), 1.0);
  const auto traj = flow(m, u, Vector::Ones(1));
  ASSERT_EQ(traj.states.rows(), 11);
  EXPECT_DOUBLE_EQ(traj.step_size, 0.1);
  EXPECT_NEAR(traj.final_state()[0], 2.5937424601, 1e-12 * 2.6);
  for (Index l = 0; l <= 10; ++l)
    EXPECT_NEAR(traj.state(l)[0], std::pow(1.1, static_cast<double>(l)), 1e-12 * 2.6);
}

TEST(Dynamics, EulerProductForTimeVaryingControl) {
  const auto m = scalar_linear_model();
  std::mt19937_64 rng(8);
  const auto u = ControlSignal::gaussian(25, 1, 1.0, 9, 2.0);
  const double x0 = 0.8;
  double expected = x0;
  for (Index l = 0; l < u.steps(); ++l) expected *= 1.0 + u.step_size() * u.at(l)[0];
  const auto traj = flow(m, u, Vector::Constant(1, x0));
  EXPECT_LE(std::abs(traj.final_state()[0] - expected), 1e-12 * std::abs(expected));
}

TEST(Dynamics, FlowStepsAreExactEulerUpdates) {
  const auto m = Model::two_layer_tanh(3);
  const auto u = ControlSignal::gaussian(7, m.p(), 0.5, 10);
  std::mt19937_64 rng(9);
  const Vector x0 = random_vector(3, rng);
  const auto traj = flow(m, u, x0);
  const auto again = flow(m, u, x0);
  EXPECT_EQ(traj.states, again.states);
  for (Index l = 0; l < u.steps(); ++l) {
    const Vector x = traj.state(l);
    const Vector next = x + u.step_size() * eval_rhs(m, u.at(l), x);
    EXPECT_EQ(Vector(traj.state(l + 1)), next);
  }
}

TEST(Dynamics, ZeroControlKeepsStateFixed) {
  const auto m = Model::two_layer_tanh(4);
  const auto traj = flow(m, ControlSignal::zeros(10, m.p()), Vector::LinSpaced(4, -1, 1));
  for (Index l = 0; l <= 10; ++l) EXPECT_EQ(Vector(traj.state(l)), Vector::LinSpaced(4, -1, 1));
}

TEST(Dynamics, BlowUpReportsStep) {
  const auto m = scalar_linear_model();
  RowMatrix values = RowMatrix::Ones(6, 1);
  values(3, 0) = 1e308;
  const ControlSignal u(values, 1.0);
  try {
    flow(m, u, Vector::Ones(1) * 10.0);
    FAIL() << "expected NumericalError";
  } catch (const NumericalError& e) {
    EXPECT_EQ(e.step(), 3);
  }
}

TEST(ControlSignal, ValidationAndVersions) {
  EXPECT_THROW(ControlSignal(0, 3), InvalidArgument);
  EXPECT_THROW(ControlSignal(3, 3, 0.0), InvalidArgument);
  RowMatrix bad = RowMatrix::Zero(2, 2);
  bad(1, 1) = std::nan("");
  EXPECT_THROW(ControlSignal(bad, 1.0), InvalidArgument);

  auto u = ControlSignal::zeros(4, 3, 2.0);
  EXPECT_DOUBLE_EQ(u.step_size(), 0.5);
  const auto v0 = u.version();
  u.axpy(1.0, Vector::Ones(12));
  EXPECT_NE(u.version(), v0);
  EXPECT_DOUBLE_EQ(u.norm_squared(), 12.0);
  const ControlSignal copy = u;
  EXPECT_EQ(copy.values(), u.values());

  EXPECT_EQ(ControlSignal::gaussian(5, 4, 1.0, 42).values(),
            ControlSignal::gaussian(5, 4, 1.0, 42).values());
  EXPECT_NE(ControlSignal::gaussian(5, 4, 1.0, 42).values(),
            ControlSignal::gaussian(5, 4, 1.0, 43).values());
}

TEST(Checkpoint, RoundTripIsByteIdentical) {
  const auto m = Model::two_layer_tanh(3);
  const auto u = ControlSignal::gaussian(5, m.p(), 0.3, 17);
  std::ostringstream first;
  write_control(first, m.kind(), m.nbar(), u);
  std::istringstream in(first.str());
  const auto ck = read_control(in);
  EXPECT_EQ(ck.kind, ModelKind::TwoLayerTanh);
  EXPECT_EQ(ck.nbar, 3);
  EXPECT_EQ(ck.control.values(), u.values());
  std::ostringstream second;
  write_control(second, ck.kind, ck.nbar, ck.control);
  EXPECT_EQ(first.str(), second.str());
  EXPECT_EQ(first.str().substr(0, first.str().find('\n')),
            "# control v1 model=two_layer_tanh nbar=3 p=24 N=5 T=1");
}

TEST(Checkpoint, MalformedInputIsRejected) {
  std::istringstream no_header("1 2 3\n");
  EXPECT_THROW(read_control(no_header), IoError);
  std::istringstream short_rows("# control v1 model=two_layer_tanh nbar=1 p=4 N=2 T=1\n1 2 3 4\n");
  EXPECT_THROW(read_control(short_rows), IoError);
  std::istringstream bad_p("# control v1 model=two_layer_tanh nbar=1 p=3 N=1 T=1\n1 2 3\n");
  EXPECT_THROW(read_control(bad_p), IoError);
  EXPECT_THROW(load_control("/nonexistent/u.ctl"), IoError);
}
