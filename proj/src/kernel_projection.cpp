#include "ktune/kernel_projection.hpp"

#include <Eigen/SVD>

#include "ktune/error.hpp"

namespace ktune {

KernelProjector KernelProjector::identity(Index cols, double rank_tolerance) {
  return KernelProjector(Matrix(0, cols), rank_tolerance);
}

KernelProjector KernelProjector::from_matrix(const Matrix& L, double rank_tolerance) {
  if (!(rank_tolerance > 0.0)) throw InvalidArgument("rank tolerance must be positive");
  if (!L.allFinite()) throw NumericalError("constraint matrix is not finite");
  if (L.rows() == 0) return identity(L.cols(), rank_tolerance);

  // Left singular vectors of L^T span the row space of L.
  const Matrix Lt = L.transpose();
  Eigen::JacobiSVD<Matrix> svd(Lt, Eigen::ComputeThinU);
  const auto& sigma = svd.singularValues();
  Index r = 0;
  if (sigma.size() > 0 && sigma[0] > 0.0) {
    const double cutoff = rank_tolerance * sigma[0];
    while (r < sigma.size() && sigma[r] > cutoff) ++r;
  }
  return KernelProjector(svd.matrixU().leftCols(r).transpose(), rank_tolerance);
}

Vector KernelProjector::project(VectorRef g) const {
  if (g.size() != cols())
    throw InvalidArgument("projection input has length " + std::to_string(g.size()) +
                          ", expected " + std::to_string(cols()));
  if (rank() == 0) return g;
  const Vector coeff = basis_ * g;
  return g - basis_.transpose() * coeff;
}

// --- StackedConstraints ----------------------------------------------------

StackedConstraints::StackedConstraints(Index q_total, Index n_out, Index cols)
    : q_total_(q_total),
      n_out_(n_out),
      matrix_(Matrix::Zero(q_total * n_out, cols)),
      active_(static_cast<std::size_t>(q_total), false) {
  if (q_total < 0 || n_out < 1 || cols < 1)
    throw InvalidArgument("stacked constraints need q >= 0, n_o >= 1, pN >= 1");
}

void StackedConstraints::check_slot(Index sample_index) const {
  if (sample_index < 1 || sample_index > q_total_)
    throw InvalidArgument("sample index " + std::to_string(sample_index) + " outside 1.." +
                          std::to_string(q_total_));
}

std::vector<Index> StackedConstraints::active_set() const {
  std::vector<Index> out;
  for (Index i = 1; i <= q_total_; ++i)
    if (active_[static_cast<std::size_t>(i - 1)]) out.push_back(i);
  return out;
}

bool StackedConstraints::is_active(Index sample_index) const {
  check_slot(sample_index);
  return active_[static_cast<std::size_t>(sample_index - 1)];
}

Matrix StackedConstraints::active_matrix() const {
  const auto active = active_set();
  Matrix out(static_cast<Index>(active.size()) * n_out_, cols());
  Index row = 0;
  for (const Index i : active) {
    out.middleRows(row, n_out_) = matrix_.middleRows((i - 1) * n_out_, n_out_);
    row += n_out_;
  }
  return out;
}

Eigen::Block<const Matrix> StackedConstraints::block(Index sample_index) const {
  check_slot(sample_index);
  return matrix_.middleRows((sample_index - 1) * n_out_, n_out_);
}

void StackedConstraints::update_block(Index sample_index, const Matrix& L) {
  check_slot(sample_index);
  if (L.rows() != n_out_ || L.cols() != cols())
    throw InvalidArgument("block for sample " + std::to_string(sample_index) + " is " +
                          std::to_string(L.rows()) + "x" + std::to_string(L.cols()) +
                          ", expected " + std::to_string(n_out_) + "x" + std::to_string(cols()));
  matrix_.middleRows((sample_index - 1) * n_out_, n_out_) = L;
  active_[static_cast<std::size_t>(sample_index - 1)] = true;
  cached_.reset();
}

void StackedConstraints::update_block(Index sample_index, const EndpointJacobian& jacobian) {
  if (jacobian.sample_index != sample_index)
    throw InvalidArgument("Jacobian of sample " + std::to_string(jacobian.sample_index) +
                          " installed in slot " + std::to_string(sample_index));
  update_block(sample_index, jacobian.L);
}

void StackedConstraints::deactivate(Index sample_index) {
  check_slot(sample_index);
  matrix_.middleRows((sample_index - 1) * n_out_, n_out_).setZero();
  active_[static_cast<std::size_t>(sample_index - 1)] = false;
  cached_.reset();
}

const KernelProjector& StackedConstraints::projector(double rank_tolerance) const {
  if (!cached_ || cached_->rank_tolerance() != rank_tolerance)
    cached_ = KernelProjector::from_matrix(active_matrix(), rank_tolerance);
  return *cached_;
}

StackedConstraints build_stacked(std::span<const EndpointJacobian> blocks,
                                 std::span<const Index> active_set, Index q_total,
                                 Index n_out, Index cols) {
  if (!blocks.empty()) {
    if (n_out == 0) n_out = blocks.front().L.rows();
    if (cols == 0) cols = blocks.front().L.cols();
  }
  if (n_out < 1 || cols < 1) throw InvalidArgument("cannot infer the stacked shape without blocks");
  for (const auto& b : blocks)
    if (b.L.cols() != cols || b.L.rows() != n_out)
      throw InvalidArgument("Jacobian blocks disagree on shape");
  StackedConstraints stacked(q_total, n_out, cols);
  for (const Index i : active_set) {
    const EndpointJacobian* found = nullptr;
    for (const auto& b : blocks)
      if (b.sample_index == i) found = &b;
    if (!found) throw InvalidArgument("no Jacobian block for active sample " + std::to_string(i));
    stacked.update_block(i, *found);
  }
  return stacked;
}

KernelProjector kernel_projector(const StackedConstraints& stacked, double rank_tolerance) {
  return stacked.projector(rank_tolerance);
}

Vector project(const KernelProjector& projector, VectorRef g) { return projector.project(g); }

}  // namespace ktune
