#include "ktune/batch.hpp"

#include <exception>

#include "ktune/error.hpp"

namespace ktune {

namespace {

GradientSum reduce(const Model& model, const ControlSignal& u,
                   const std::vector<SampleLinearization>& lins) {
  GradientSum out{Vector::Zero(model.p() * u.steps()), 0.0};
  for (const auto& lin : lins) {
    out.gradient += cost_gradient(lin.jacobian, lin.cost);
    out.cost += lin.cost.value;
  }
  return out;
}

void check_indices(const Ensemble& ensemble, std::span<const Index> indices) {
  for (const Index i : indices)
    if (i < 1 || i > ensemble.size())
      throw InvalidArgument("sample index " + std::to_string(i) + " outside 1.." +
                            std::to_string(ensemble.size()));
}

// Runs fn(k) for k in [0, count) across threads. The first failure in index
// order is rethrown on the calling thread.
template <class Fn>
void parallel_for(Index count, Fn&& fn) {
  std::vector<std::exception_ptr> errors(static_cast<std::size_t>(count));
#pragma omp parallel for schedule(dynamic)
  for (Index k = 0; k < count; ++k) {
    try {
      fn(k);
    } catch (...) {
      errors[static_cast<std::size_t>(k)] = std::current_exception();
    }
  }
  for (const auto& e : errors)
    if (e) std::rethrow_exception(e);
}

}  // namespace

namespace serial {

std::vector<SampleLinearization> linearize_samples(const Model& model, const ControlSignal& u,
                                                   const Ensemble& ensemble,
                                                   std::span<const Index> indices,
                                                   const Readout& readout) {
  check_indices(ensemble, indices);
  std::vector<SampleLinearization> out;
  out.reserve(indices.size());
  for (const Index i : indices) out.push_back(linearize(model, u, ensemble[i], readout));
  return out;
}

std::vector<PerSampleCost> sample_costs(const Model& model, const ControlSignal& u,
                                        const Ensemble& ensemble, std::span<const Index> indices,
                                        const Readout& readout) {
  check_indices(ensemble, indices);
  std::vector<PerSampleCost> out;
  out.reserve(indices.size());
  for (const Index i : indices) out.push_back(per_sample_cost(model, u, ensemble[i], readout));
  return out;
}

GradientSum gradient_sum(const Model& model, const ControlSignal& u, const Ensemble& ensemble,
                         std::span<const Index> indices, const Readout& readout) {
  return reduce(model, u, linearize_samples(model, u, ensemble, indices, readout));
}

}  // namespace serial

namespace parallel {

std::vector<SampleLinearization> linearize_samples(const Model& model, const ControlSignal& u,
                                                   const Ensemble& ensemble,
                                                   std::span<const Index> indices,
                                                   const Readout& readout) {
  check_indices(ensemble, indices);
  std::vector<SampleLinearization> out(indices.size());
  parallel_for(static_cast<Index>(indices.size()), [&](Index k) {
    out[static_cast<std::size_t>(k)] = linearize(model, u, ensemble[indices[k]], readout);
  });
  return out;
}

std::vector<PerSampleCost> sample_costs(const Model& model, const ControlSignal& u,
                                        const Ensemble& ensemble, std::span<const Index> indices,
                                        const Readout& readout) {
  check_indices(ensemble, indices);
  std::vector<PerSampleCost> out(indices.size());
  parallel_for(static_cast<Index>(indices.size()), [&](Index k) {
    out[static_cast<std::size_t>(k)] = per_sample_cost(model, u, ensemble[indices[k]], readout);
  });
  return out;
}

GradientSum gradient_sum(const Model& model, const ControlSignal& u, const Ensemble& ensemble,
                         std::span<const Index> indices, const Readout& readout) {
  return reduce(model, u, linearize_samples(model, u, ensemble, indices, readout));
}

}  // namespace parallel

}  // namespace ktune
