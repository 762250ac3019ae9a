#pragma once

#include <span>
#include <vector>

#include "ktune/endpoint_jacobian.hpp"
#include "ktune/ensemble.hpp"

// Per-sample kernels over a list of samples. Samples are independent given a
// shared read-only control, so the parallel versions split them across OpenMP
// threads; results are written to fixed slots and reduced in index order, so
// the output is bitwise independent of the thread count. The serial versions
// are the reference the parallel ones are tested against.
namespace ktune {

struct GradientSum {
  Vector gradient;  // sum_i L_i^T r_i
  double cost = 0.0;  // sum_i 0.5 ||r_i||^2
};

namespace serial {

std::vector<SampleLinearization> linearize_samples(const Model& model, const ControlSignal& u,
                                                   const Ensemble& ensemble,
                                                   std::span<const Index> indices,
                                                   const Readout& readout);
std::vector<PerSampleCost> sample_costs(const Model& model, const ControlSignal& u,
                                        const Ensemble& ensemble, std::span<const Index> indices,
                                        const Readout& readout);
GradientSum gradient_sum(const Model& model, const ControlSignal& u, const Ensemble& ensemble,
                         std::span<const Index> indices, const Readout& readout);

}  // namespace serial

namespace parallel {

std::vector<SampleLinearization> linearize_samples(const Model& model, const ControlSignal& u,
                                                   const Ensemble& ensemble,
                                                   std::span<const Index> indices,
                                                   const Readout& readout);
std::vector<PerSampleCost> sample_costs(const Model& model, const ControlSignal& u,
                                        const Ensemble& ensemble, std::span<const Index> indices,
                                        const Readout& readout);
GradientSum gradient_sum(const Model& model, const ControlSignal& u, const Ensemble& ensemble,
                         std::span<const Index> indices, const Readout& readout);

}  // namespace parallel

}  // namespace ktune
