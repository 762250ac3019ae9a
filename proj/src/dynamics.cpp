#include "ktune/dynamics.hpp"

#include <atomic>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>
#include <random>
#include <sstream>

#include "ktune/error.hpp"
#include "ktune/text_format.hpp"

namespace ktune {

namespace {

std::uint64_t next_version() {
  static std::atomic<std::uint64_t> counter{0};
  return ++counter;
}

using RowMap = Eigen::Map<const RowMatrix>;

struct TanhView {
  RowMap W1;
  Eigen::Map<const Vector> b1;
  RowMap W2;
  Eigen::Map<const Vector> b2;
};

TanhView tanh_view(const double* u, Index n) {
  return TanhView{RowMap(u, n, n), Eigen::Map<const Vector>(u + n * n, n),
                  RowMap(u + n * n + n, n, n), Eigen::Map<const Vector>(u + 2 * n * n + n, n)};
}

void check_step_args(const Model& model, VectorRef u_step, VectorRef x) {
  if (u_step.size() != model.p())
    throw InvalidArgument("control step has length " + std::to_string(u_step.size()) +
                          ", model expects p=" + std::to_string(model.p()));
  if (x.size() != model.nbar())
    throw InvalidArgument("state has length " + std::to_string(x.size()) +
                          ", model expects nbar=" + std::to_string(model.nbar()));
}

}  // namespace

std::string_view to_string(ModelKind kind) {
  switch (kind) {
    case ModelKind::TwoLayerTanh: return "two_layer_tanh";
    case ModelKind::ControlAffine: return "control_affine";
  }
  return "unknown";
}

ModelKind parse_model_kind(std::string_view name) {
  if (name == "two_layer_tanh") return ModelKind::TwoLayerTanh;
  if (name == "control_affine") return ModelKind::ControlAffine;
  throw InvalidArgument("unknown model kind '" + std::string(name) + "'");
}

Index two_layer_param_count(Index nbar) { return 2 * nbar * nbar + 2 * nbar; }

Model::Model(ModelKind kind, Index nbar, Index p, std::vector<VectorField> fields)
    : kind_(kind), nbar_(nbar), p_(p), fields_(std::move(fields)) {}

Model Model::two_layer_tanh(Index nbar) {
  if (nbar < 1) throw InvalidArgument("nbar must be positive");
  return Model(ModelKind::TwoLayerTanh, nbar, two_layer_param_count(nbar), {});
}

Model Model::control_affine(Index nbar, std::vector<VectorField> fields) {
  if (nbar < 1) throw InvalidArgument("nbar must be positive");
  if (fields.empty()) throw InvalidArgument("control-affine model needs at least one field");
  for (const auto& f : fields)
    if (!f.value || !f.jacobian) throw InvalidArgument("vector field missing value or jacobian");
  const auto p = static_cast<Index>(fields.size());
  return Model(ModelKind::ControlAffine, nbar, p, std::move(fields));
}

Vector vectorize(const TanhLayerParams& params) {
  const Index n = params.b1.size();
  if (params.W1.rows() != n || params.W1.cols() != n || params.W2.rows() != n ||
      params.W2.cols() != n || params.b2.size() != n)
    throw InvalidArgument("inconsistent two-layer parameter shapes");
  Vector u(two_layer_param_count(n));
  Eigen::Map<RowMatrix>(u.data(), n, n) = params.W1;
  u.segment(n * n, n) = params.b1;
  Eigen::Map<RowMatrix>(u.data() + n * n + n, n, n) = params.W2;
  u.segment(2 * n * n + n, n) = params.b2;
  return u;
}

TanhLayerParams devectorize(VectorRef u_step, Index nbar) {
  if (u_step.size() != two_layer_param_count(nbar))
    throw InvalidArgument("control step length " + std::to_string(u_step.size()) +
                          " does not match nbar=" + std::to_string(nbar));
  const Vector u = u_step;
  const auto v = tanh_view(u.data(), nbar);
  return TanhLayerParams{v.W1, v.b1, v.W2, v.b2};
}

// --- ControlSignal ---------------------------------------------------------

ControlSignal::ControlSignal(Index steps, Index p, double horizon)
    : ControlSignal(RowMatrix::Zero(steps, p), horizon) {}

ControlSignal::ControlSignal(RowMatrix values, double horizon)
    : values_(std::move(values)), horizon_(horizon), version_(next_version()) {
  if (values_.rows() < 1 || values_.cols() < 1)
    throw InvalidArgument("control needs N >= 1 steps and p >= 1 parameters");
  if (!(horizon_ > 0.0) || !std::isfinite(horizon_))
    throw InvalidArgument("control horizon must be positive");
  if (!values_.allFinite()) throw InvalidArgument("control has non-finite entries");
}

ControlSignal ControlSignal::zeros(Index steps, Index p, double horizon) {
  return ControlSignal(steps, p, horizon);
}

ControlSignal ControlSignal::gaussian(Index steps, Index p, double stddev, std::uint64_t seed,
                                     double horizon) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, stddev);
  RowMatrix values(steps, p);
  for (Index i = 0; i < values.size(); ++i) values.data()[i] = normal(rng);
  return ControlSignal(std::move(values), horizon);
}

void ControlSignal::axpy(double scale, VectorRef delta) {
  if (delta.size() != size()) throw InvalidArgument("control update has wrong length");
  Eigen::Map<Vector>(values_.data(), values_.size()) += scale * delta;
  version_ = next_version();
}

void ControlSignal::assign(VectorRef flat_values) {
  if (flat_values.size() != size()) throw InvalidArgument("control assignment has wrong length");
  Eigen::Map<Vector>(values_.data(), values_.size()) = flat_values;
  version_ = next_version();
}

// --- Readout / uplift ------------------------------------------------------

Readout::Readout(Matrix C) : C_(std::move(C)) {
  if (C_.rows() < 1 || C_.cols() < C_.rows())
    throw InvalidArgument("readout must be n_o x nbar with 1 <= n_o <= nbar");
  Eigen::FullPivLU<Matrix> lu(C_);
  if (lu.rank() != C_.rows()) throw InvalidArgument("readout matrix must have full row rank");
}

Readout Readout::canonical(Index n_out, Index nbar) {
  if (n_out < 1 || n_out > nbar) throw InvalidArgument("need 1 <= n_o <= nbar");
  Matrix C = Matrix::Zero(n_out, nbar);
  C.rightCols(n_out).setIdentity();
  return Readout(std::move(C));
}

Vector uplift(VectorRef x, Index nbar) {
  if (nbar < x.size())
    throw InvalidArgument("uplift needs nbar >= n (got nbar=" + std::to_string(nbar) +
                          ", n=" + std::to_string(x.size()) + ")");
  Vector out = Vector::Zero(nbar);
  out.head(x.size()) = x;
  return out;
}

Vector readout(const Readout& R, VectorRef xbar) {
  if (xbar.size() != R.nbar()) throw InvalidArgument("readout dimension mismatch");
  return R.matrix() * xbar;
}

// --- vector field and Jacobians --------------------------------------------

Vector eval_rhs(const Model& model, VectorRef u_step, VectorRef x) {
  check_step_args(model, u_step, x);
  Vector f;
  if (model.kind() == ModelKind::TwoLayerTanh) {
    const auto v = tanh_view(u_step.data(), model.nbar());
    const Vector s = (v.W1 * x + v.b1).array().tanh().matrix();
    f = v.W2 * s + v.b2;
  } else {
    f = Vector::Zero(model.nbar());
    for (Index d = 0; d < model.p(); ++d) f += u_step[d] * model.fields()[d].value(x);
  }
  if (!f.allFinite()) throw NumericalError("vector field evaluated to a non-finite value");
  return f;
}

Matrix jac_state(const Model& model, VectorRef u_step, VectorRef x) {
  check_step_args(model, u_step, x);
  const Index n = model.nbar();
  if (model.kind() == ModelKind::TwoLayerTanh) {
    const auto v = tanh_view(u_step.data(), n);
    const Vector s = (v.W1 * x + v.b1).array().tanh().matrix();
    const Vector d = (1.0 - s.array().square()).matrix();
    return v.W2 * d.asDiagonal() * v.W1;
  }
  Matrix A = Matrix::Zero(n, n);
  for (Index k = 0; k < model.p(); ++k) A += u_step[k] * model.fields()[k].jacobian(x);
  return A;
}

Matrix jac_control(const Model& model, VectorRef u_step, VectorRef x) {
  check_step_args(model, u_step, x);
  const Index n = model.nbar();
  Matrix B(n, model.p());
  if (model.kind() == ModelKind::TwoLayerTanh) {
    const auto v = tanh_view(u_step.data(), n);
    const Vector s = (v.W1 * x + v.b1).array().tanh().matrix();
    const Vector d = (1.0 - s.array().square()).matrix();
    // W2 diag(d): column i scales with d_i.
    const Matrix W2d = v.W2 * d.asDiagonal();
    // d f / d W1[i,k] = W2[:,i] d_i x_k
    for (Index i = 0; i < n; ++i)
      for (Index k = 0; k < n; ++k) B.col(i * n + k) = W2d.col(i) * x[k];
    B.middleCols(n * n, n) = W2d;
    // d f_a / d W2[i,k] = delta_{ai} s_k
    auto dW2 = B.middleCols(n * n + n, n * n);
    dW2.setZero();
    for (Index i = 0; i < n; ++i) dW2.row(i).segment(i * n, n) = s.transpose();
    B.rightCols(n).setIdentity();
  } else {
    for (Index k = 0; k < model.p(); ++k) B.col(k) = model.fields()[k].value(x);
  }
  return B;
}

Trajectory flow(const Model& model, const ControlSignal& u, VectorRef x0_lifted) {
  if (x0_lifted.size() != model.nbar())
    throw InvalidArgument("initial state length does not match nbar");
  if (u.p() != model.p()) throw InvalidArgument("control p does not match the model");
  const Index N = u.steps();
  const double h = u.step_size();
  Trajectory traj{RowMatrix(N + 1, model.nbar()), h};
  traj.states.row(0) = x0_lifted.transpose();
  for (Index l = 0; l < N; ++l) {
    const Vector x = traj.state(l);
    Vector next;
    try {
      next = x + h * eval_rhs(model, u.at(l), x);
    } catch (const NumericalError&) {
      throw NumericalError("non-finite state at Euler step " + std::to_string(l), l);
    }
    if (!next.allFinite())
      throw NumericalError("non-finite state at Euler step " + std::to_string(l), l);
    traj.states.row(l + 1) = next.transpose();
  }
  return traj;
}

// --- checkpoint I/O --------------------------------------------------------

void write_control(std::ostream& os, ModelKind kind, Index nbar, const ControlSignal& u) {
  os << "# control v1 model=" << to_string(kind) << " nbar=" << nbar << " p=" << u.p()
     << " N=" << u.steps() << " T=" << text::format_double(u.horizon()) << '\n';
  for (Index l = 0; l < u.steps(); ++l) {
    for (Index k = 0; k < u.p(); ++k) {
      if (k) os << ' ';
      os << text::format_double(u.values()(l, k));
    }
    os << '\n';
  }
}

ControlCheckpoint read_control(std::istream& is) {
  std::string line;
  if (!std::getline(is, line)) throw IoError("control checkpoint is empty");
  std::vector<std::pair<std::string, std::string>> fields;
  if (!text::parse_header(line, "control", fields))
    throw IoError("not a control v1 checkpoint: '" + line + "'");
  std::string kind;
  long long nbar = -1, p = -1, N = -1;
  double T = 0.0;
  try {
    for (const auto& [key, value] : fields) {
      if (key == "model") kind = value;
      else if (key == "nbar") nbar = text::parse_int(value);
      else if (key == "p") p = text::parse_int(value);
      else if (key == "N") N = text::parse_int(value);
      else if (key == "T") T = text::parse_double(value);
    }
  } catch (const InvalidArgument& e) {
    throw IoError(std::string("bad control header: ") + e.what());
  }
  if (kind.empty() || nbar < 1 || p < 1 || N < 1 || !(T > 0.0))
    throw IoError("incomplete control header: '" + line + "'");
  if (kind == to_string(ModelKind::TwoLayerTanh) && p != two_layer_param_count(nbar))
    throw IoError("control header p=" + std::to_string(p) + " does not fit two_layer_tanh with nbar=" +
                  std::to_string(nbar));
  RowMatrix values(N, p);
  for (long long l = 0; l < N; ++l) {
    if (!std::getline(is, line)) throw IoError("control checkpoint truncated");
    std::vector<std::string_view> tokens;
    for (auto t : text::split(text::trim(line), ' '))
      if (!t.empty()) tokens.push_back(t);
    if (static_cast<long long>(tokens.size()) != p)
      throw IoError("control row " + std::to_string(l) + " has " +
                    std::to_string(tokens.size()) + " values, expected " + std::to_string(p));
    try {
      for (long long k = 0; k < p; ++k) values(l, k) = text::parse_double(tokens[k]);
    } catch (const InvalidArgument& e) {
      throw IoError(std::string("bad control value: ") + e.what());
    }
  }
  ControlCheckpoint ckpt;
  try {
    ckpt.kind = parse_model_kind(kind);
  } catch (const InvalidArgument& e) {
    throw IoError(e.what());
  }
  ckpt.nbar = nbar;
  ckpt.control = ControlSignal(std::move(values), T);
  return ckpt;
}

void save_control(const std::string& path, ModelKind kind, Index nbar, const ControlSignal& u) {
  std::ofstream os(path);
  if (!os) throw IoError("cannot open '" + path + "' for writing");
  write_control(os, kind, nbar, u);
  if (!os) throw IoError("failed writing '" + path + "'");
}

ControlCheckpoint load_control(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open control checkpoint '" + path + "'");
  return read_control(is);
}

}  // namespace ktune
