#pragma once

// Discrete-time tracking OCP over a prediction model:
//
//   min  1/2 sum_k ||(x_k - xr_k, u_k - ur_k)||^2_W + 1/2 ||x_N - xr_N||^2_WN
//   s.t. x_{k+1} = F(x_k, u_k),  u_lb <= u_k <= u_ub
//
// Weights are diagonal and stored as vectors.

#include <cmath>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>

#include "nano_nmpc/errors.hpp"
#include "nano_nmpc/integrator.hpp"
#include "nano_nmpc/model.hpp"

namespace nano_nmpc {

template <typename Scalar> using VectorX = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
template <typename Scalar> using MatrixX = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

template <typename Scalar> struct OcpSpec {
  int horizon = 10;
  Scalar dt = Scalar(0.1);
  VectorX<Scalar> stage_weight;    // nx + nu
  VectorX<Scalar> terminal_weight; // nx
  VectorX<Scalar> u_lb;
  VectorX<Scalar> u_ub;
  IntegratorConfig integrator;

  int state_dim() const { return static_cast<int>(terminal_weight.size()); }
  int input_dim() const { return static_cast<int>(u_lb.size()); }

  /// Throws InvalidInput when dimensions or values violate the OCP invariants.
  void validate() const {
    if (horizon < 1) throw InvalidInput("OcpSpec: horizon must be >= 1");
    if (!(dt > Scalar(0)) || !std::isfinite(static_cast<double>(dt))) {
      throw InvalidInput("OcpSpec: dt must be positive");
    }
    if (integrator.n_steps < 1) throw InvalidInput("OcpSpec: integrator steps must be >= 1");
    const auto nx = terminal_weight.size();
    const auto nu = u_lb.size();
    if (nx == 0 || nu == 0 || stage_weight.size() != nx + nu || u_ub.size() != nu) {
      throw InvalidInput("OcpSpec: weight/bound dimensions do not match");
    }
    if (!stage_weight.allFinite() || !terminal_weight.allFinite() || (stage_weight.array() < 0).any() ||
        (terminal_weight.array() < 0).any()) {
      throw InvalidInput("OcpSpec: weights must be finite and nonnegative");
    }
    if (u_lb.hasNaN() || u_ub.hasNaN() || !(u_lb.array() < u_ub.array()).all()) {
      throw InvalidInput("OcpSpec: input bounds require u_lb < u_ub componentwise");
    }
  }
};

/// Quadrotor defaults: position-dominant tracking, 2x hover thrust ceiling,
/// +-4 pi rad/s body-rate limits.
template <typename Scalar> OcpSpec<Scalar> default_quadrotor_ocp(const VehicleParams<Scalar>& params) {
  OcpSpec<Scalar> spec;
  spec.stage_weight.resize(kStateDim + kInputDim);
  spec.stage_weight << 10, 10, 10, 1, 1, 1, 1, 1, 1, 1, Scalar(0.1), Scalar(0.1), Scalar(0.1), Scalar(0.1);
  spec.terminal_weight = Scalar(10) * spec.stage_weight.head(kStateDim);
  const Scalar max_rate = Scalar(4) * Scalar(M_PI);
  spec.u_lb.resize(kInputDim);
  spec.u_ub.resize(kInputDim);
  spec.u_lb << 0, -max_rate, -max_rate, -max_rate;
  spec.u_ub << 2 * params.hover_thrust(), max_rate, max_rate, max_rate;
  return spec;
}

template <typename Scalar> struct ReferenceWindow {
  std::vector<VectorX<Scalar>> states; // horizon + 1
  std::vector<VectorX<Scalar>> inputs; // horizon

  int horizon() const { return static_cast<int>(inputs.size()); }
};

/// 1/2 ||(x - xr, u - ur)||^2_W with W = diag(weight).
template <typename Scalar>
Scalar stage_cost(const VectorX<Scalar>& x, const VectorX<Scalar>& u, const VectorX<Scalar>& x_ref,
                  const VectorX<Scalar>& u_ref, const VectorX<Scalar>& weight) {
  const auto nx = x.size();
  const auto nu = u.size();
  if (x_ref.size() != nx || u_ref.size() != nu || weight.size() != nx + nu) {
    throw InvalidInput("stage_cost: dimension mismatch");
  }
  const Scalar sx = (weight.head(nx).array() * (x - x_ref).array().square()).sum();
  const Scalar su = (weight.tail(nu).array() * (u - u_ref).array().square()).sum();
  return Scalar(0.5) * (sx + su);
}

template <typename Scalar>
Scalar terminal_cost(const VectorX<Scalar>& x, const VectorX<Scalar>& x_ref, const VectorX<Scalar>& weight) {
  if (x_ref.size() != x.size() || weight.size() != x.size()) {
    throw InvalidInput("terminal_cost: dimension mismatch");
  }
  return Scalar(0.5) * (weight.array() * (x - x_ref).array().square()).sum();
}

template <typename Scalar> struct ClampResult {
  VectorX<Scalar> u;
  bool violated = false;
};

template <typename Scalar>
ClampResult<Scalar> clamp_and_check_bounds(const VectorX<Scalar>& u, const VectorX<Scalar>& lb,
                                           const VectorX<Scalar>& ub) {
  ClampResult<Scalar> r;
  r.u = u.cwiseMax(lb).cwiseMin(ub);
  r.violated = (u.array() < lb.array()).any() || (u.array() > ub.array()).any();
  return r;
}

/// Total OCP objective of a trajectory (references aligned to the states
/// through the model's hook, when it has one).
template <PredictionModel Model>
typename Model::Scalar ocp_objective(const Model& model, const std::vector<typename Model::VectorX>& xs,
                                     const std::vector<typename Model::VectorX>& us,
                                     const ReferenceWindow<typename Model::Scalar>& ref,
                                     const OcpSpec<typename Model::Scalar>& spec) {
  using Scalar = typename Model::Scalar;
  Scalar total(0);
  const int n = spec.horizon;
  for (int k = 0; k <= n; ++k) {
    typename Model::VectorX xr = ref.states[k];
    if constexpr (requires { model.align_reference(xr, xs[k]); }) {
      model.align_reference(xr, xs[k]);
    }
    total += k < n ? stage_cost<Scalar>(xs[k], us[k], xr, ref.inputs[k], spec.stage_weight)
                   : terminal_cost<Scalar>(xs[k], xr, spec.terminal_weight);
  }
  return total;
}

} // namespace nano_nmpc
