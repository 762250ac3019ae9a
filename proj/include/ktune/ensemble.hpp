#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "ktune/dynamics.hpp"

namespace ktune {

struct Sample {
  Vector x;     // input point, length n
  Vector y;     // target, length n_o
  Index index;  // 1-based position in the ensemble
};

// Ordered paired training set {(x^i, y^i)}, i = 1..q, with pairwise distinct
// inputs. Immutable once constructed.
class Ensemble {
 public:
  Ensemble(Index n, Index n_out, std::vector<Sample> samples);

  Index n() const noexcept { return n_; }
  Index n_out() const noexcept { return n_out_; }
  Index size() const noexcept { return static_cast<Index>(samples_.size()); }
  bool empty() const noexcept { return samples_.empty(); }

  // 1-based, matching the sample index.
  const Sample& operator[](Index index) const { return samples_.at(index - 1); }
  std::span<const Sample> samples() const noexcept { return samples_; }

 private:
  Index n_;
  Index n_out_;
  std::vector<Sample> samples_;
};

// Samples with index in (lo, hi]. The prefix X^j is (0, j]; the difference
// set X^i_j is (j, i].
class SubEnsembleView {
 public:
  SubEnsembleView(const Ensemble& parent, Index lo, Index hi);

  static SubEnsembleView prefix(const Ensemble& parent, Index j) { return {parent, 0, j}; }
  static SubEnsembleView range(const Ensemble& parent, Index j, Index i) { return {parent, j, i}; }
  static SubEnsembleView all(const Ensemble& parent) { return {parent, 0, parent.size()}; }

  const Ensemble& parent() const noexcept { return *parent_; }
  Index lo() const noexcept { return lo_; }
  Index hi() const noexcept { return hi_; }
  Index size() const noexcept { return hi_ - lo_; }
  bool empty() const noexcept { return hi_ == lo_; }
  bool contains(Index index) const noexcept { return index > lo_ && index <= hi_; }

  std::span<const Sample> samples() const noexcept {
    return parent_->samples().subspan(static_cast<std::size_t>(lo_),
                                      static_cast<std::size_t>(hi_ - lo_));
  }
  std::vector<Index> indices() const;

 private:
  const Ensemble* parent_;
  Index lo_;
  Index hi_;
};

// (X^j, X^q_j)
std::pair<SubEnsembleView, SubEnsembleView> split(const Ensemble& ensemble, Index j);

// +1 outside the closed unit disc, -1 inside or on the circle.
double ball_label(VectorRef x);

struct BallDatasetOptions {
  Index q = 64;
  std::uint64_t seed = 1;
  double margin = 0.1;
  double box_halfwidth = 2.0;
};

// Uniform rejection sampling on [-w, w]^2 excluding the annulus
// | ||x|| - 1 | < margin and any point closer than 1e-9 to an earlier one.
Ensemble generate_ball_dataset(const BallDatasetOptions& options);

// E(u, X) = mean over the view of || C phi(u, x^i) - y^i ||.
double average_error(const Model& model, const ControlSignal& u, const SubEnsembleView& view,
                     const Readout& readout);

// Dataset text format:
//   # ball-dataset v1 n=<n> no=<n_o> q=<q> seed=<seed>
//   index,x1,...,xn,y1,...,yno
void write_dataset(std::ostream& os, const Ensemble& ensemble, std::uint64_t seed);
struct DatasetFile {
  Ensemble ensemble;
  std::uint64_t seed;
};
DatasetFile read_dataset(std::istream& is);
void save_dataset(const std::string& path, const Ensemble& ensemble, std::uint64_t seed);
DatasetFile load_dataset(const std::string& path);

}  // namespace ktune
