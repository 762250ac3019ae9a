#pragma once

#include <optional>
#include <span>
#include <vector>

#include "ktune/dynamics.hpp"
#include "ktune/endpoint_jacobian.hpp"

namespace ktune {

inline constexpr double kDefaultRankTolerance = 1e-10;

// Orthogonal projector onto the null space of a constraint matrix L, kept as
// an orthonormal basis Q (r x pN) of the row space of L: P g = g - Q^T (Q g).
// The pN x pN projector is never formed.
class KernelProjector {
 public:
  // P = I on R^cols.
  static KernelProjector identity(Index cols, double rank_tolerance = kDefaultRankTolerance);
  // Singular values below rank_tolerance * sigma_max count as zero.
  static KernelProjector from_matrix(const Matrix& L,
                                     double rank_tolerance = kDefaultRankTolerance);

  Index cols() const noexcept { return basis_.cols(); }
  Index rank() const noexcept { return basis_.rows(); }
  Index kernel_dimension() const noexcept { return cols() - rank(); }
  double rank_tolerance() const noexcept { return rank_tolerance_; }
  const Matrix& row_space_basis() const noexcept { return basis_; }

  Vector project(VectorRef g) const;

 private:
  KernelProjector(Matrix basis, double rank_tolerance)
      : basis_(std::move(basis)), rank_tolerance_(rank_tolerance) {}

  Matrix basis_;
  double rank_tolerance_;
};

// Stacked constraint matrix [L_1; L_2; ...; L_q] with one n_o-row block per
// sample slot. Inactive slots are zero rows. Blocks are kept in sample-index
// order; the projector is cached until the next mutation.
class StackedConstraints {
 public:
  StackedConstraints(Index q_total, Index n_out, Index cols);

  Index capacity() const noexcept { return q_total_; }
  Index n_out() const noexcept { return n_out_; }
  Index cols() const noexcept { return matrix_.cols(); }
  const Matrix& matrix() const noexcept { return matrix_; }
  // Active samples in increasing index order.
  std::vector<Index> active_set() const;
  bool is_active(Index sample_index) const;

  // Rows of the active blocks only, in index order.
  Matrix active_matrix() const;
  Eigen::Block<const Matrix> block(Index sample_index) const;

  // Installs L_i in slot `sample_index` and marks it active.
  void update_block(Index sample_index, const EndpointJacobian& jacobian);
  void update_block(Index sample_index, const Matrix& L);
  // Zeroes the slot and removes it from the active set.
  void deactivate(Index sample_index);

  const KernelProjector& projector(double rank_tolerance = kDefaultRankTolerance) const;

 private:
  void check_slot(Index sample_index) const;

  Index q_total_;
  Index n_out_;
  Matrix matrix_;
  std::vector<bool> active_;
  mutable std::optional<KernelProjector> cached_;
};

// Shape is taken from the blocks; pass n_out and cols when there are none.
StackedConstraints build_stacked(std::span<const EndpointJacobian> blocks,
                                 std::span<const Index> active_set, Index q_total,
                                 Index n_out = 0, Index cols = 0);

KernelProjector kernel_projector(const StackedConstraints& stacked,
                                 double rank_tolerance = kDefaultRankTolerance);

Vector project(const KernelProjector& projector, VectorRef g);

}  // namespace ktune
