#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

namespace ktune {

using Index = Eigen::Index;
using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using VectorRef = Eigen::Ref<const Vector>;

enum class ModelKind { TwoLayerTanh, ControlAffine };

std::string_view to_string(ModelKind kind);
ModelKind parse_model_kind(std::string_view name);

// One smooth field f_d of a control-affine system xdot = sum_d u_d f_d(x).
struct VectorField {
  std::function<Vector(const Vector&)> value;
  std::function<Matrix(const Vector&)> jacobian;
};

// The controlled vector field f(u, x) on the lifted state space.
//
// TwoLayerTanh:  f = W2 tanh(W1 x + b1) + b2 with the per-step control
//                laid out as [vec(W1) row-major | b1 | vec(W2) row-major | b2],
//                so p = 2 nbar^2 + 2 nbar.
// ControlAffine: f = sum_d u_d f_d(x), p = number of fields.
class Model {
 public:
  static Model two_layer_tanh(Index nbar);
  static Model control_affine(Index nbar, std::vector<VectorField> fields);

  ModelKind kind() const noexcept { return kind_; }
  Index nbar() const noexcept { return nbar_; }
  Index p() const noexcept { return p_; }
  const std::vector<VectorField>& fields() const noexcept { return fields_; }

 private:
  Model(ModelKind kind, Index nbar, Index p, std::vector<VectorField> fields);

  ModelKind kind_;
  Index nbar_;
  Index p_;
  std::vector<VectorField> fields_;
};

Index two_layer_param_count(Index nbar);

struct TanhLayerParams {
  Matrix W1;
  Vector b1;
  Matrix W2;
  Vector b2;
};

Vector vectorize(const TanhLayerParams& params);
TanhLayerParams devectorize(VectorRef u_step, Index nbar);

// Piecewise-constant control on a uniform grid of [0, T]: N steps of p values.
// Every mutation takes a fresh version stamp so derived quantities (endpoint
// Jacobians, residuals) can detect that they are stale.
class ControlSignal {
 public:
  ControlSignal(Index steps, Index p, double horizon = 1.0);
  ControlSignal(RowMatrix values, double horizon = 1.0);

  static ControlSignal zeros(Index steps, Index p, double horizon = 1.0);
  // Entrywise N(0, stddev^2), reproducible for a given seed.
  static ControlSignal gaussian(Index steps, Index p, double stddev, std::uint64_t seed,
                                double horizon = 1.0);

  Index steps() const noexcept { return values_.rows(); }
  Index p() const noexcept { return values_.cols(); }
  Index size() const noexcept { return values_.size(); }
  double horizon() const noexcept { return horizon_; }
  double step_size() const noexcept { return horizon_ / static_cast<double>(steps()); }
  std::uint64_t version() const noexcept { return version_; }

  const RowMatrix& values() const noexcept { return values_; }
  // Control held during Euler step `step` (0-based).
  Eigen::Map<const Vector> at(Index step) const {
    return Eigen::Map<const Vector>(values_.data() + step * p(), p());
  }
  // Flattened R^{pN} view, step-major.
  Eigen::Map<const Vector> flat() const {
    return Eigen::Map<const Vector>(values_.data(), values_.size());
  }

  // u <- u + scale * delta, delta in the flattened layout.
  void axpy(double scale, VectorRef delta);
  void assign(VectorRef flat_values);

  double norm_squared() const { return values_.squaredNorm(); }

 private:
  RowMatrix values_;
  double horizon_;
  std::uint64_t version_;
};

struct Trajectory {
  RowMatrix states;  // (N+1) x nbar, row 0 is the lifted initial point
  double step_size = 0.0;

  Index steps() const noexcept { return states.rows() - 1; }
  Eigen::Map<const Vector> state(Index i) const {
    return Eigen::Map<const Vector>(states.data() + i * states.cols(), states.cols());
  }
  Eigen::Map<const Vector> final_state() const { return state(steps()); }
};

// Linear readout x -> C x with C of full row rank.
class Readout {
 public:
  explicit Readout(Matrix C);
  // C = [0 | I_{n_o}], reads the last n_o coordinates.
  static Readout canonical(Index n_out, Index nbar);

  const Matrix& matrix() const noexcept { return C_; }
  Index outputs() const noexcept { return C_.rows(); }
  Index nbar() const noexcept { return C_.cols(); }

 private:
  Matrix C_;
};

// Zero-padding embedding R^n -> R^nbar.
Vector uplift(VectorRef x, Index nbar);
Vector readout(const Readout& R, VectorRef xbar);

Vector eval_rhs(const Model& model, VectorRef u_step, VectorRef x);
// d f / d x, nbar x nbar.
Matrix jac_state(const Model& model, VectorRef u_step, VectorRef x);
// d f / d u_step, nbar x p in the vectorized layout.
Matrix jac_control(const Model& model, VectorRef u_step, VectorRef x);

// Explicit Euler with sample-and-hold control. Throws NumericalError carrying
// the step index as soon as a non-finite state appears.
Trajectory flow(const Model& model, const ControlSignal& u, VectorRef x0_lifted);

// Control checkpoint text format:
//   # control v1 model=<kind> nbar=<nbar> p=<p> N=<N> T=<T>
//   N lines of p space-separated shortest round-trip decimals.
struct ControlCheckpoint {
  ModelKind kind = ModelKind::TwoLayerTanh;
  Index nbar = 0;
  ControlSignal control{1, 1};
};

void write_control(std::ostream& os, ModelKind kind, Index nbar, const ControlSignal& u);
ControlCheckpoint read_control(std::istream& is);
void save_control(const std::string& path, ModelKind kind, Index nbar, const ControlSignal& u);
ControlCheckpoint load_control(const std::string& path);

}  // namespace ktune
