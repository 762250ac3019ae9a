#include "ktune/ensemble.hpp"

#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>
#include <random>

#include "ktune/batch.hpp"
#include "ktune/error.hpp"
#include "ktune/text_format.hpp"

namespace ktune {

namespace {
constexpr double kMinSeparation = 1e-9;
}

Ensemble::Ensemble(Index n, Index n_out, std::vector<Sample> samples)
    : n_(n), n_out_(n_out), samples_(std::move(samples)) {
  if (n_ < 1 || n_out_ < 1) throw InvalidArgument("ensemble needs n >= 1 and n_o >= 1");
  for (std::size_t k = 0; k < samples_.size(); ++k) {
    const auto& s = samples_[k];
    if (s.x.size() != n_ || s.y.size() != n_out_)
      throw InvalidArgument("sample " + std::to_string(k + 1) + " has inconsistent dimensions");
    if (s.index != static_cast<Index>(k + 1))
      throw InvalidArgument("sample indices must run 1..q in order");
    if (!s.x.allFinite() || !s.y.allFinite())
      throw InvalidArgument("sample " + std::to_string(k + 1) + " is not finite");
    for (std::size_t m = 0; m < k; ++m)
      if (samples_[m].x == s.x)
        throw InvalidArgument("inputs " + std::to_string(m + 1) + " and " +
                              std::to_string(k + 1) + " coincide");
  }
}

SubEnsembleView::SubEnsembleView(const Ensemble& parent, Index lo, Index hi)
    : parent_(&parent), lo_(lo), hi_(hi) {
  if (lo < 0 || lo > hi || hi > parent.size())
    throw InvalidArgument("sub-ensemble range (" + std::to_string(lo) + ", " +
                          std::to_string(hi) + "] outside 0.." + std::to_string(parent.size()));
}

std::vector<Index> SubEnsembleView::indices() const {
  std::vector<Index> out;
  out.reserve(static_cast<std::size_t>(size()));
  for (Index i = lo_ + 1; i <= hi_; ++i) out.push_back(i);
  return out;
}

std::pair<SubEnsembleView, SubEnsembleView> split(const Ensemble& ensemble, Index j) {
  if (j < 0 || j > ensemble.size())
    throw InvalidArgument("cutoff j=" + std::to_string(j) + " outside 0.." +
                          std::to_string(ensemble.size()));
  return {SubEnsembleView::prefix(ensemble, j),
          SubEnsembleView::range(ensemble, j, ensemble.size())};
}

double ball_label(VectorRef x) { return x.squaredNorm() <= 1.0 ? -1.0 : 1.0; }

Ensemble generate_ball_dataset(const BallDatasetOptions& options) {
  if (options.q < 1) throw InvalidArgument("dataset size q must be at least 1");
  if (!(options.box_halfwidth > 0.0)) throw InvalidArgument("box half-width must be positive");
  if (!(options.margin >= 0.0) || !(options.margin < options.box_halfwidth - 1.0))
    throw InvalidArgument("margin must satisfy 0 <= margin < box_halfwidth - 1");

  std::mt19937_64 rng(options.seed);
  std::uniform_real_distribution<double> coord(-options.box_halfwidth, options.box_halfwidth);
  const long long max_attempts = 1000LL * options.q + 10000;

  std::vector<Sample> samples;
  samples.reserve(static_cast<std::size_t>(options.q));
  long long attempts = 0;
  while (static_cast<Index>(samples.size()) < options.q) {
    if (++attempts > max_attempts)
      throw Error("ball dataset rejection sampling gave up after " +
                  std::to_string(max_attempts) + " draws; margin or box too restrictive");
    Vector x(2);
    x[0] = coord(rng);
    x[1] = coord(rng);
    if (std::abs(x.norm() - 1.0) < options.margin) continue;
    bool too_close = false;
    for (const auto& s : samples)
      if (s.x == x || (s.x - x).norm() < kMinSeparation) {
        too_close = true;
        break;
      }
    if (too_close) continue;
    Vector y(1);
    y[0] = ball_label(x);
    samples.push_back(Sample{std::move(x), std::move(y), static_cast<Index>(samples.size()) + 1});
  }
  return Ensemble(2, 1, std::move(samples));
}

double average_error(const Model& model, const ControlSignal& u, const SubEnsembleView& view,
                     const Readout& readout) {
  if (view.empty()) throw InvalidArgument("average error over an empty set");
  const auto indices = view.indices();
  const auto costs = parallel::sample_costs(model, u, view.parent(), indices, readout);
  double sum = 0.0;
  for (const auto& c : costs) sum += c.residual.norm();
  return sum / static_cast<double>(costs.size());
}

// --- dataset I/O -----------------------------------------------------------

void write_dataset(std::ostream& os, const Ensemble& ensemble, std::uint64_t seed) {
  os << "# ball-dataset v1 n=" << ensemble.n() << " no=" << ensemble.n_out()
     << " q=" << ensemble.size() << " seed=" << seed << '\n';
  for (const auto& s : ensemble.samples()) {
    os << s.index;
    for (Index k = 0; k < s.x.size(); ++k) os << ',' << text::format_double(s.x[k]);
    for (Index k = 0; k < s.y.size(); ++k) os << ',' << text::format_double(s.y[k]);
    os << '\n';
  }
}

DatasetFile read_dataset(std::istream& is) {
  std::string line;
  if (!std::getline(is, line)) throw IoError("dataset file is empty");
  std::vector<std::pair<std::string, std::string>> fields;
  if (!text::parse_header(line, "ball-dataset", fields))
    throw IoError("not a ball-dataset v1 file: '" + line + "'");
  long long n = -1, no = -1, q = -1;
  std::uint64_t seed = 0;
  try {
    for (const auto& [key, value] : fields) {
      if (key == "n") n = text::parse_int(value);
      else if (key == "no") no = text::parse_int(value);
      else if (key == "q") q = text::parse_int(value);
      else if (key == "seed") seed = static_cast<std::uint64_t>(text::parse_int(value));
    }
  } catch (const InvalidArgument& e) {
    throw IoError(std::string("bad dataset header: ") + e.what());
  }
  if (n < 1 || no < 1 || q < 0) throw IoError("incomplete dataset header: '" + line + "'");

  std::vector<Sample> samples;
  while (std::getline(is, line)) {
    const auto trimmed = text::trim(line);
    if (trimmed.empty() || trimmed.front() == '#') continue;
    const auto tokens = text::split(trimmed, ',');
    if (static_cast<long long>(tokens.size()) != 1 + n + no)
      throw IoError("dataset record has " + std::to_string(tokens.size()) + " fields, expected " +
                    std::to_string(1 + n + no));
    try {
      Sample s{Vector(n), Vector(no), static_cast<Index>(text::parse_int(tokens[0]))};
      for (long long k = 0; k < n; ++k) s.x[k] = text::parse_double(tokens[1 + k]);
      for (long long k = 0; k < no; ++k) s.y[k] = text::parse_double(tokens[1 + n + k]);
      samples.push_back(std::move(s));
    } catch (const InvalidArgument& e) {
      throw IoError(std::string("bad dataset record: ") + e.what());
    }
  }
  if (static_cast<long long>(samples.size()) != q)
    throw IoError("dataset header declares q=" + std::to_string(q) + " but file has " +
                  std::to_string(samples.size()) + " records");
  try {
    return DatasetFile{Ensemble(n, no, std::move(samples)), seed};
  } catch (const InvalidArgument& e) {
    throw IoError(std::string("invalid dataset: ") + e.what());
  }
}

void save_dataset(const std::string& path, const Ensemble& ensemble, std::uint64_t seed) {
  std::ofstream os(path);
  if (!os) throw IoError("cannot open '" + path + "' for writing");
  write_dataset(os, ensemble, seed);
  if (!os) throw IoError("failed writing '" + path + "'");
}

DatasetFile load_dataset(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open dataset '" + path + "'");
  return read_dataset(is);
}

}  // namespace ktune
