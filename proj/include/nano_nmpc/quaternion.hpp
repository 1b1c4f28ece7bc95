#pragma once

// Scalar-first quaternions stored as plain 4-vectors (w, x, y, z) so they can
// live inside state vectors without reordering. Hamilton product convention.

#include <cmath>

#include <Eigen/Dense>

#include "nano_nmpc/errors.hpp"

namespace nano_nmpc {

template <typename Scalar> using Quat = Eigen::Matrix<Scalar, 4, 1>;
template <typename Scalar> using Vec3 = Eigen::Matrix<Scalar, 3, 1>;
template <typename Scalar> using Mat3 = Eigen::Matrix<Scalar, 3, 3>;

template <typename Scalar> Quat<Scalar> quat_identity() {
  return Quat<Scalar>(Scalar(1), Scalar(0), Scalar(0), Scalar(0));
}

template <typename DerivedA, typename DerivedB>
Quat<typename DerivedA::Scalar> quat_multiply(const Eigen::MatrixBase<DerivedA>& a,
                                              const Eigen::MatrixBase<DerivedB>& b) {
  using Scalar = typename DerivedA::Scalar;
  return Quat<Scalar>(a[0] * b[0] - a[1] * b[1] - a[2] * b[2] - a[3] * b[3],
                      a[0] * b[1] + a[1] * b[0] + a[2] * b[3] - a[3] * b[2],
                      a[0] * b[2] - a[1] * b[3] + a[2] * b[0] + a[3] * b[1],
                      a[0] * b[3] + a[1] * b[2] - a[2] * b[1] + a[3] * b[0]);
}

template <typename Derived>
Quat<typename Derived::Scalar> quat_conjugate(const Eigen::MatrixBase<Derived>& q) {
  return Quat<typename Derived::Scalar>(q[0], -q[1], -q[2], -q[3]);
}

/// Throws DegenerateInput when the norm is zero (or not finite).
template <typename Derived>
Quat<typename Derived::Scalar> quat_normalize(const Eigen::MatrixBase<Derived>& q) {
  using Scalar = typename Derived::Scalar;
  const Scalar n = q.norm();
  if (!(n > Scalar(0)) || !std::isfinite(static_cast<double>(n))) {
    throw DegenerateInput("quat_normalize: quaternion has zero or non-finite norm");
  }
  return q / n;
}

/// Rotation matrix of a unit quaternion (body to world).
template <typename Derived>
Mat3<typename Derived::Scalar> quat_to_rotation(const Eigen::MatrixBase<Derived>& q) {
  using Scalar = typename Derived::Scalar;
  const Scalar w = q[0], x = q[1], y = q[2], z = q[3];
  Mat3<Scalar> r;
  r << 1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y),
      2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x),
      2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y);
  return r;
}

/// Vector part of q ⊗ (0, v) ⊗ q̄.
template <typename DerivedQ, typename DerivedV>
Vec3<typename DerivedQ::Scalar> quat_rotate(const Eigen::MatrixBase<DerivedQ>& q,
                                            const Eigen::MatrixBase<DerivedV>& v) {
  using Scalar = typename DerivedQ::Scalar;
  const Quat<Scalar> pure(Scalar(0), v[0], v[1], v[2]);
  return quat_multiply(quat_multiply(q, pure), quat_conjugate(q)).template tail<3>();
}

/// Returns ref or -ref, whichever lies on the same hemisphere as current.
/// Ties (dot = 0) keep ref.
template <typename DerivedR, typename DerivedC>
Quat<typename DerivedR::Scalar> hemisphere_align(const Eigen::MatrixBase<DerivedR>& ref,
                                                 const Eigen::MatrixBase<DerivedC>& current) {
  using Scalar = typename DerivedR::Scalar;
  return ref.dot(current) < Scalar(0) ? Quat<Scalar>(-ref) : Quat<Scalar>(ref);
}

} // namespace nano_nmpc
