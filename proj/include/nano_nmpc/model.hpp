#pragma once

// Quadrotor rigid-body dynamics in quaternion coordinates.
//
// Frames: world is North-West-Up, gravity acts along -z. Body rates are
// expressed in the body frame and the quaternion maps body to world.
//
// Full plant state (13):    x y z | qw qx qy qz | vx vy vz | wx wy wz
// Prediction state (10):    x y z | qw qx qy qz | vx vy vz
// Prediction input (4):     T | wx wy wz
//
// Rotor numbering for the allocation matrix (X frame, seen from above,
// x forward, y left):
//   1 front-right, 2 rear-right, 3 rear-left, 4 front-left.
// Rotors 1 and 3 spin counter-clockwise and react with a -z yaw torque,
// rotors 2 and 4 spin clockwise and react with +z.

#include <cmath>

#include <Eigen/Dense>

#include "nano_nmpc/errors.hpp"
#include "nano_nmpc/quaternion.hpp"

namespace nano_nmpc {

inline constexpr int kFullStateDim = 13;
inline constexpr int kStateDim = 10;
inline constexpr int kInputDim = 4;

/// Offsets into state vectors (shared by full and reduced layouts).
namespace idx {
inline constexpr int kPos = 0;
inline constexpr int kQuat = 3;
inline constexpr int kVel = 7;
inline constexpr int kRate = 10; // full state only
inline constexpr int kThrust = 0;
inline constexpr int kRateCmd = 1;
} // namespace idx

template <typename Scalar> using StateFull = Eigen::Matrix<Scalar, kFullStateDim, 1>;
template <typename Scalar> using StateReduced = Eigen::Matrix<Scalar, kStateDim, 1>;
template <typename Scalar> using ControlInput = Eigen::Matrix<Scalar, kInputDim, 1>;
template <typename Scalar> using StateMatrix = Eigen::Matrix<Scalar, kStateDim, kStateDim>;
template <typename Scalar> using InputMatrix = Eigen::Matrix<Scalar, kStateDim, kInputDim>;
template <typename Scalar> using AllocationMatrix = Eigen::Matrix<Scalar, 4, 4>;
template <typename Scalar> using RotorSpeedsSquared = Eigen::Matrix<Scalar, 4, 1>;

/// Crazyflie 2.1 with decks. Defaults are the identified vehicle values.
template <typename Scalar> struct VehicleParams {
  Scalar mass = Scalar(0.042);                                  // kg
  Vec3<Scalar> inertia{Scalar(1.6571e-5), Scalar(1.6571e-5), Scalar(2.92e-5)}; // kg m^2
  Scalar arm_length = Scalar(0.092);                            // prop-to-prop, m
  Scalar thrust_coefficient = Scalar(2.88e-8);                  // N s^2
  Scalar drag_coefficient = Scalar(7.24e-10);                   // N m s^2
  Scalar gravity = Scalar(9.81);                                // m/s^2

  Scalar hover_thrust() const { return mass * gravity; }

  /// Throws InvalidInput unless every physical quantity is finite and positive.
  void validate() const {
    auto positive = [](Scalar v) { return std::isfinite(static_cast<double>(v)) && v > Scalar(0); };
    if (!positive(mass) || !positive(inertia[0]) || !positive(inertia[1]) ||
        !positive(inertia[2]) || !positive(arm_length) || !positive(thrust_coefficient) ||
        !positive(drag_coefficient) || !positive(gravity)) {
      throw InvalidInput("VehicleParams: mass, inertia, arm length, coefficients and gravity must be positive");
    }
  }
};

template <typename Scalar> struct Wrench {
  Scalar thrust = Scalar(0);
  Vec3<Scalar> torque = Vec3<Scalar>::Zero();
};

namespace detail {
template <typename Derived> void require_finite(const Eigen::MatrixBase<Derived>& v, const char* what) {
  if (!v.allFinite()) {
    throw InvalidInput(std::string(what) + ": non-finite input component");
  }
}
} // namespace detail

/// Derivative of the 13-state plant driven by thrust and body torques.
template <typename Scalar>
StateFull<Scalar> dynamics_full(const StateFull<Scalar>& s, const Wrench<Scalar>& w,
                                const VehicleParams<Scalar>& params) {
  detail::require_finite(s, "dynamics_full");
  if (!std::isfinite(static_cast<double>(w.thrust)) || !w.torque.allFinite()) {
    throw InvalidInput("dynamics_full: non-finite wrench");
  }
  const auto q = s.template segment<4>(idx::kQuat);
  const Vec3<Scalar> omega = s.template segment<3>(idx::kRate);
  const Vec3<Scalar>& J = params.inertia;

  StateFull<Scalar> ds;
  ds.template segment<3>(idx::kPos) = s.template segment<3>(idx::kVel);
  const Quat<Scalar> pure(Scalar(0), omega[0], omega[1], omega[2]);
  ds.template segment<4>(idx::kQuat) = Scalar(0.5) * quat_multiply(q, pure);
  ds.template segment<3>(idx::kVel) =
      (w.thrust / params.mass) * quat_to_rotation(q).col(2) - Vec3<Scalar>(0, 0, params.gravity);
  const Vec3<Scalar> Jw = J.cwiseProduct(omega);
  ds.template segment<3>(idx::kRate) = (w.torque - omega.cross(Jw)).cwiseQuotient(J);
  return ds;
}

/// Derivative of the 10-state prediction model; body rates are inputs.
template <typename Scalar>
StateReduced<Scalar> dynamics_reduced(const StateReduced<Scalar>& s, const ControlInput<Scalar>& u,
                                      const VehicleParams<Scalar>& params) {
  detail::require_finite(s, "dynamics_reduced");
  detail::require_finite(u, "dynamics_reduced");
  const Scalar qw = s[3], qx = s[4], qy = s[5], qz = s[6];
  const Scalar wx = u[1], wy = u[2], wz = u[3];
  const Scalar a = u[0] / params.mass;
  const Scalar half(0.5);

  StateReduced<Scalar> ds;
  ds[0] = s[7];
  ds[1] = s[8];
  ds[2] = s[9];
  ds[3] = half * (-wx * qx - wy * qy - wz * qz);
  ds[4] = half * (wx * qw + wz * qy - wy * qz);
  ds[5] = half * (wy * qw - wz * qx + wx * qz);
  ds[6] = half * (wz * qw + wy * qx - wx * qy);
  ds[7] = 2 * (qw * qy + qx * qz) * a;
  ds[8] = 2 * (qy * qz - qw * qx) * a;
  ds[9] = (1 - 2 * qx * qx - 2 * qy * qy) * a - params.gravity;
  return ds;
}

template <typename Scalar> struct ReducedJacobians {
  StateMatrix<Scalar> A;
  InputMatrix<Scalar> B;
};

/// Closed-form ∂f/∂x and ∂f/∂u of dynamics_reduced.
template <typename Scalar>
ReducedJacobians<Scalar> jacobians_reduced(const StateReduced<Scalar>& s, const ControlInput<Scalar>& u,
                                           const VehicleParams<Scalar>& params) {
  detail::require_finite(s, "jacobians_reduced");
  detail::require_finite(u, "jacobians_reduced");
  const Scalar qw = s[3], qx = s[4], qy = s[5], qz = s[6];
  const Scalar wx = u[1], wy = u[2], wz = u[3];
  const Scalar inv_m = Scalar(1) / params.mass;
  const Scalar a = u[0] * inv_m;
  const Scalar h(0.5);

  ReducedJacobians<Scalar> jac;
  auto& A = jac.A;
  auto& B = jac.B;
  A.setZero();
  B.setZero();

  A.template block<3, 3>(0, 7).setIdentity();

  // quaternion rows
  A.template block<4, 4>(3, 3) << 0, -h * wx, -h * wy, -h * wz,
                                  h * wx, 0, h * wz, -h * wy,
                                  h * wy, -h * wz, 0, h * wx,
                                  h * wz, h * wy, -h * wx, 0;
  B.template block<4, 3>(3, 1) << -h * qx, -h * qy, -h * qz,
                                  h * qw, -h * qz, h * qy,
                                  h * qz, h * qw, -h * qx,
                                  -h * qy, h * qx, h * qw;

  // velocity rows
  A.template block<3, 4>(7, 3) << 2 * a * qy, 2 * a * qz, 2 * a * qw, 2 * a * qx,
                                  -2 * a * qx, -2 * a * qw, 2 * a * qz, 2 * a * qy,
                                  0, -4 * a * qx, -4 * a * qy, 0;
  B(7, 0) = 2 * (qw * qy + qx * qz) * inv_m;
  B(8, 0) = 2 * (qy * qz - qw * qx) * inv_m;
  B(9, 0) = (1 - 2 * qx * qx - 2 * qy * qy) * inv_m;
  return jac;
}

/// Squared rotor speeds to (T, tau) for the X frame described above.
template <typename Scalar> AllocationMatrix<Scalar> allocation_matrix(const VehicleParams<Scalar>& params) {
  const Scalar kt = params.thrust_coefficient;
  const Scalar kd = params.drag_coefficient;
  const Scalar arm = params.arm_length / Scalar(2) / std::sqrt(Scalar(2));
  const Scalar r = kt * arm;
  AllocationMatrix<Scalar> gamma;
  gamma << kt, kt, kt, kt,
           -r, -r, r, r,
           -r, r, r, -r,
           -kd, kd, -kd, kd;
  return gamma;
}

template <typename Scalar>
Wrench<Scalar> wrench_from_rotor_speeds(const AllocationMatrix<Scalar>& gamma,
                                        const RotorSpeedsSquared<Scalar>& omega_sq) {
  const Eigen::Matrix<Scalar, 4, 1> w = gamma * omega_sq;
  return Wrench<Scalar>{w[0], w.template tail<3>()};
}

/// Squared rotor speeds that realize the wrench. May contain negative entries
/// when the wrench lies outside what the rotors can produce.
template <typename Scalar>
RotorSpeedsSquared<Scalar> wrench_to_rotor_speeds(const AllocationMatrix<Scalar>& gamma,
                                                  const Wrench<Scalar>& wrench) {
  Eigen::Matrix<Scalar, 4, 1> w;
  w << wrench.thrust, wrench.torque;
  return gamma.partialPivLu().solve(w);
}

/// Take the position/attitude/velocity part of a plant state.
template <typename Scalar> StateReduced<Scalar> reduce_state(const StateFull<Scalar>& s) {
  return s.template head<kStateDim>();
}

template <typename Scalar> StateReduced<Scalar> hover_state(const Vec3<Scalar>& position) {
  StateReduced<Scalar> s = StateReduced<Scalar>::Zero();
  s.template segment<3>(idx::kPos) = position;
  s.template segment<4>(idx::kQuat) = quat_identity<Scalar>();
  return s;
}

template <typename Scalar> ControlInput<Scalar> hover_input(const VehicleParams<Scalar>& params) {
  ControlInput<Scalar> u = ControlInput<Scalar>::Zero();
  u[idx::kThrust] = params.hover_thrust();
  return u;
}

/// Prediction model adapter with dynamically sized vectors, as consumed by
/// the integrator and the RTI solver.
template <typename ScalarT> class QuadrotorModel {
public:
  using Scalar = ScalarT;
  using VectorX = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
  using MatrixX = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

  QuadrotorModel() = default;
  explicit QuadrotorModel(const VehicleParams<Scalar>& params) : params_(params) { params_.validate(); }

  const VehicleParams<Scalar>& params() const { return params_; }
  int state_dim() const { return kStateDim; }
  int input_dim() const { return kInputDim; }

  VectorX derivative(const VectorX& x, const VectorX& u) const {
    return dynamics_reduced<Scalar>(x, u, params_);
  }

  void jacobians(const VectorX& x, const VectorX& u, MatrixX& A, MatrixX& B) const {
    const auto jac = jacobians_reduced<Scalar>(x, u, params_);
    A = jac.A;
    B = jac.B;
  }

  /// Flip the reference quaternion onto the hemisphere of the current one.
  void align_reference(VectorX& ref, const VectorX& current) const {
    ref.template segment<4>(idx::kQuat) =
        hemisphere_align(ref.template segment<4>(idx::kQuat), current.template segment<4>(idx::kQuat));
  }

private:
  VehicleParams<Scalar> params_;
};

} // namespace nano_nmpc
