#pragma once

#include <cstdint>
#include <vector>

#include "ktune/dynamics.hpp"
#include "ktune/ensemble.hpp"

namespace ktune {

// Discrete endpoint Jacobian L_i (n_o x pN) of x -> C phi_T(u, x^i) with
// respect to the flattened control. Column block l (n_o x p) holds
// h C Phi_{l+1} df/du(u[l], x_l), Phi_{l+1} the transition from the end of
// step l to the final time.
struct EndpointJacobian {
  Matrix L;
  Index sample_index = 0;
  std::uint64_t control_version = 0;
};

struct PerSampleCost {
  double value = 0.0;  // 0.5 ||residual||^2
  Vector residual;     // C phi_T - y
  Index sample_index = 0;
  std::uint64_t control_version = 0;
};

struct SampleLinearization {
  EndpointJacobian jacobian;
  PerSampleCost cost;
};

// Phi_l for l = 0..N, with Phi_N = I and Phi_l = Phi_{l+1} (I + h df/dx(u[l], x_l)).
std::vector<Matrix> transition_matrices(const Model& model, const ControlSignal& u,
                                        const Trajectory& trajectory);

EndpointJacobian endpoint_jacobian(const Model& model, const ControlSignal& u,
                                   const Sample& sample, const Readout& readout);
EndpointJacobian endpoint_jacobian(const Model& model, const ControlSignal& u,
                                   const Trajectory& trajectory, const Readout& readout,
                                   Index sample_index);

PerSampleCost per_sample_cost(const Model& model, const ControlSignal& u, const Sample& sample,
                              const Readout& readout);

// One flow, both outputs.
SampleLinearization linearize(const Model& model, const ControlSignal& u, const Sample& sample,
                              const Readout& readout);

// L_i^T (C phi_T - y^i). Throws StaleJacobian when the Jacobian and residual
// were computed for different controls or samples.
Vector cost_gradient(const EndpointJacobian& jacobian, const PerSampleCost& cost);

// Same, additionally requiring both to be current for `u`.
Vector cost_gradient(const EndpointJacobian& jacobian, const PerSampleCost& cost,
                     const ControlSignal& u);

}  // namespace ktune
