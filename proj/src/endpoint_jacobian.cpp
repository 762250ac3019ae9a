#include "ktune/endpoint_jacobian.hpp"

#include "ktune/error.hpp"

namespace ktune {

std::vector<Matrix> transition_matrices(const Model& model, const ControlSignal& u,
                                        const Trajectory& trajectory) {
  const Index N = u.steps();
  const Index n = model.nbar();
  const double h = u.step_size();
  std::vector<Matrix> phi(static_cast<std::size_t>(N + 1));
  phi[N] = Matrix::Identity(n, n);
  for (Index l = N - 1; l >= 0; --l) {
    const Matrix step = Matrix::Identity(n, n) + h * jac_state(model, u.at(l), trajectory.state(l));
    phi[l] = phi[l + 1] * step;
    if (!phi[l].allFinite())
      throw NumericalError("non-finite transition matrix at step " + std::to_string(l), l);
  }
  return phi;
}

EndpointJacobian endpoint_jacobian(const Model& model, const ControlSignal& u,
                                   const Trajectory& trajectory, const Readout& readout,
                                   Index sample_index) {
  const Index N = u.steps();
  const Index n = model.nbar();
  const Index p = model.p();
  if (trajectory.steps() != N || trajectory.states.cols() != n)
    throw InvalidArgument("trajectory does not match control and model");
  if (readout.nbar() != n) throw InvalidArgument("readout does not match nbar");
  if (!trajectory.states.allFinite()) throw NumericalError("trajectory is not finite");

  const double h = u.step_size();
  EndpointJacobian out{Matrix(readout.outputs(), p * N), sample_index, u.version()};
  // G = C Phi_{l+1}, propagated backwards without forming Phi itself.
  Matrix G = readout.matrix();
  for (Index l = N - 1; l >= 0; --l) {
    const auto x = trajectory.state(l);
    const auto ul = u.at(l);
    out.L.middleCols(l * p, p).noalias() = h * (G * jac_control(model, ul, x));
    G = G * (Matrix::Identity(n, n) + h * jac_state(model, ul, x));
    if (!G.allFinite())
      throw NumericalError("non-finite transition product at step " + std::to_string(l), l);
  }
  if (!out.L.allFinite()) throw NumericalError("endpoint Jacobian is not finite");
  return out;
}

EndpointJacobian endpoint_jacobian(const Model& model, const ControlSignal& u,
                                   const Sample& sample, const Readout& readout) {
  const auto traj = flow(model, u, uplift(sample.x, model.nbar()));
  return endpoint_jacobian(model, u, traj, readout, sample.index);
}

namespace {

PerSampleCost cost_from(const Trajectory& traj, const ControlSignal& u, const Sample& sample,
                        const Readout& readout) {
  PerSampleCost c;
  c.residual = readout.matrix() * traj.final_state() - sample.y;
  c.value = 0.5 * c.residual.squaredNorm();
  c.sample_index = sample.index;
  c.control_version = u.version();
  return c;
}

}  // namespace

PerSampleCost per_sample_cost(const Model& model, const ControlSignal& u, const Sample& sample,
                              const Readout& readout) {
  if (sample.y.size() != readout.outputs())
    throw InvalidArgument("label length does not match readout outputs");
  const auto traj = flow(model, u, uplift(sample.x, model.nbar()));
  return cost_from(traj, u, sample, readout);
}

SampleLinearization linearize(const Model& model, const ControlSignal& u, const Sample& sample,
                              const Readout& readout) {
  if (sample.y.size() != readout.outputs())
    throw InvalidArgument("label length does not match readout outputs");
  const auto traj = flow(model, u, uplift(sample.x, model.nbar()));
  return SampleLinearization{endpoint_jacobian(model, u, traj, readout, sample.index),
                             cost_from(traj, u, sample, readout)};
}

Vector cost_gradient(const EndpointJacobian& jacobian, const PerSampleCost& cost) {
  if (jacobian.control_version != cost.control_version)
    throw StaleJacobian("endpoint Jacobian and residual belong to different controls");
  if (jacobian.sample_index != cost.sample_index)
    throw StaleJacobian("endpoint Jacobian and residual belong to different samples");
  if (jacobian.L.rows() != cost.residual.size())
    throw InvalidArgument("residual length does not match Jacobian rows");
  return jacobian.L.transpose() * cost.residual;
}

Vector cost_gradient(const EndpointJacobian& jacobian, const PerSampleCost& cost,
                     const ControlSignal& u) {
  if (jacobian.control_version != u.version())
    throw StaleJacobian("endpoint Jacobian is stale for sample " +
                        std::to_string(jacobian.sample_index));
  return cost_gradient(jacobian, cost);
}

}  // namespace ktune
