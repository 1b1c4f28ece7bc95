#pragma once

// Fixed-step classical RK4 over a prediction model with zero-order-hold
// inputs, plus forward sensitivities of the discrete map.

#include <concepts>
#include <string>

#include <Eigen/Dense>

#include "nano_nmpc/errors.hpp"

namespace nano_nmpc {

/// Anything the integrator and the RTI solver can propagate: a continuous
/// vector field with closed-form Jacobians.
template <typename M>
concept PredictionModel = requires(const M& m, const typename M::VectorX& x, const typename M::VectorX& u,
                                   typename M::MatrixX& A, typename M::MatrixX& B) {
  typename M::Scalar;
  { m.state_dim() } -> std::convertible_to<int>;
  { m.input_dim() } -> std::convertible_to<int>;
  { m.derivative(x, u) } -> std::convertible_to<typename M::VectorX>;
  m.jacobians(x, u, A, B);
};

struct IntegratorConfig {
  static constexpr int n_stages = 4;
  int n_steps = 3;
};

template <typename Scalar> struct SensitivityResult {
  Eigen::Matrix<Scalar, Eigen::Dynamic, 1> x_next;
  Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> S_x;
  Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> S_u;
};

namespace detail {

inline void check_step(double h, const IntegratorConfig* config = nullptr) {
  if (!(h > 0.0) || !std::isfinite(h)) {
    throw InvalidInput("integrator: step length must be positive and finite");
  }
  if (config != nullptr && config->n_steps < 1) {
    throw InvalidInput("integrator: n_steps must be at least 1");
  }
}

template <typename Derived> void check_stage(const Eigen::MatrixBase<Derived>& v) {
  if (!v.allFinite()) {
    throw IntegrationDiverged("integrator: non-finite value during RK4 propagation");
  }
}

} // namespace detail

template <PredictionModel Model>
typename Model::VectorX rk4_step(const Model& model, const typename Model::VectorX& x,
                                 const typename Model::VectorX& u, typename Model::Scalar h) {
  using Scalar = typename Model::Scalar;
  using VectorX = typename Model::VectorX;
  detail::check_step(static_cast<double>(h));
  if (!x.allFinite() || !u.allFinite()) {
    throw InvalidInput("rk4_step: non-finite state or input");
  }
  const Scalar half = h / Scalar(2);
  const VectorX k1 = model.derivative(x, u);
  detail::check_stage(k1);
  const VectorX k2 = model.derivative(x + half * k1, u);
  detail::check_stage(k2);
  const VectorX k3 = model.derivative(x + half * k2, u);
  detail::check_stage(k3);
  const VectorX k4 = model.derivative(x + h * k3, u);
  detail::check_stage(k4);
  VectorX next = x + (h / Scalar(6)) * (k1 + Scalar(2) * k2 + Scalar(2) * k3 + k4);
  detail::check_stage(next);
  return next;
}

/// n_steps RK4 steps of length dt / n_steps.
template <PredictionModel Model>
typename Model::VectorX integrate(const Model& model, const typename Model::VectorX& x,
                                  const typename Model::VectorX& u, typename Model::Scalar dt,
                                  const IntegratorConfig& config) {
  using Scalar = typename Model::Scalar;
  detail::check_step(static_cast<double>(dt), &config);
  const Scalar h = dt / Scalar(config.n_steps);
  typename Model::VectorX xk = x;
  for (int i = 0; i < config.n_steps; ++i) {
    xk = rk4_step(model, xk, u, h);
  }
  return xk;
}

/// Same propagation as integrate(), together with the exact derivatives of
/// the discrete RK4 map with respect to the initial state and the input.
template <PredictionModel Model>
SensitivityResult<typename Model::Scalar>
integrate_with_sensitivities(const Model& model, const typename Model::VectorX& x,
                             const typename Model::VectorX& u, typename Model::Scalar dt,
                             const IntegratorConfig& config) {
  using Scalar = typename Model::Scalar;
  using VectorX = typename Model::VectorX;
  using MatrixX = typename Model::MatrixX;
  detail::check_step(static_cast<double>(dt), &config);
  if (!x.allFinite() || !u.allFinite()) {
    throw InvalidInput("integrate_with_sensitivities: non-finite state or input");
  }
  const int nx = model.state_dim();
  const int nu = model.input_dim();
  const Scalar h = dt / Scalar(config.n_steps);
  const Scalar half = h / Scalar(2);

  SensitivityResult<Scalar> out;
  out.x_next = x;
  out.S_x = MatrixX::Identity(nx, nx);
  out.S_u = MatrixX::Zero(nx, nu);

  MatrixX A(nx, nx), B(nx, nu);
  // Stage sensitivities dk/dx, dk/du of the current step.
  MatrixX K1x(nx, nx), K2x(nx, nx), K3x(nx, nx), K4x(nx, nx);
  MatrixX K1u(nx, nu), K2u(nx, nu), K3u(nx, nu), K4u(nx, nu);
  const MatrixX I = MatrixX::Identity(nx, nx);

  for (int step = 0; step < config.n_steps; ++step) {
    const VectorX& xs = out.x_next;

    const VectorX k1 = model.derivative(xs, u);
    detail::check_stage(k1);
    model.jacobians(xs, u, A, B);
    K1x = A;
    K1u = B;

    const VectorX x2 = xs + half * k1;
    const VectorX k2 = model.derivative(x2, u);
    detail::check_stage(k2);
    model.jacobians(x2, u, A, B);
    K2x.noalias() = A * (I + half * K1x);
    K2u.noalias() = A * (half * K1u);
    K2u += B;

    const VectorX x3 = xs + half * k2;
    const VectorX k3 = model.derivative(x3, u);
    detail::check_stage(k3);
    model.jacobians(x3, u, A, B);
    K3x.noalias() = A * (I + half * K2x);
    K3u.noalias() = A * (half * K2u);
    K3u += B;

    const VectorX x4 = xs + h * k3;
    const VectorX k4 = model.derivative(x4, u);
    detail::check_stage(k4);
    model.jacobians(x4, u, A, B);
    K4x.noalias() = A * (I + h * K3x);
    K4u.noalias() = A * (h * K3u);
    K4u += B;

    const Scalar w = h / Scalar(6);
    const MatrixX step_x = I + w * (K1x + Scalar(2) * K2x + Scalar(2) * K3x + K4x);
    const MatrixX step_u = w * (K1u + Scalar(2) * K2u + Scalar(2) * K3u + K4u);

    out.S_u = step_x * out.S_u + step_u;
    out.S_x = step_x * out.S_x;
    out.x_next = xs + w * (k1 + Scalar(2) * k2 + Scalar(2) * k3 + k4);
    detail::check_stage(out.x_next);
  }
  if (!out.S_x.allFinite() || !out.S_u.allFinite()) {
    throw IntegrationDiverged("integrate_with_sensitivities: non-finite sensitivities");
  }
  return out;
}

} // namespace nano_nmpc
