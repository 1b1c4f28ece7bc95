#include <cmath>
#include <random>

#include <doctest.h>

#include "nano_nmpc/errors.hpp"
#include "nano_nmpc/model.hpp"
#include "nano_nmpc/oracles/oracles.hpp"

using namespace nano_nmpc;

namespace {

const VehicleParams<double> P;

StateReduced<double> random_state(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> d(-2.0, 2.0);
  StateReduced<double> s;
  for (int i = 0; i < kStateDim; ++i) s[i] = d(rng);
  s.segment<4>(idx::kQuat) = quat_normalize(Quat<double>(s.segment<4>(idx::kQuat)));
  return s;
}

ControlInput<double> random_input(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> t(0.0, 0.8), w(-4.0, 4.0);
  return ControlInput<double>(t(rng), w(rng), w(rng), w(rng));
}

} // namespace

TEST_CASE("full dynamics: hover equilibrium is a fixed point") {
  StateFull<double> s = StateFull<double>::Zero();
  s.segment<4>(idx::kQuat) = quat_identity<double>();
  const auto d = dynamics_full(s, Wrench<double>{P.hover_thrust(), Eigen::Vector3d::Zero()}, P);
  CHECK(d.isZero(0.0));
}

TEST_CASE("full dynamics: thrust along body z at identity attitude") {
  StateFull<double> s = StateFull<double>::Zero();
  s.segment<4>(idx::kQuat) = quat_identity<double>();
  const auto d = dynamics_full(s, Wrench<double>{0.5, Eigen::Vector3d::Zero()}, P);
  CHECK(d[idx::kVel] == 0.0);
  CHECK(d[idx::kVel + 1] == 0.0);
  CHECK(d[idx::kVel + 2] == doctest::Approx(0.5 / 0.042 - 9.81).epsilon(1e-14));
}

TEST_CASE("full dynamics: thrust direction after a quarter turn about x") {
  StateFull<double> s = StateFull<double>::Zero();
  const double h = std::sqrt(0.5);
  s.segment<4>(idx::kQuat) << h, h, 0.0, 0.0;
  const auto d = dynamics_full(s, Wrench<double>{P.hover_thrust(), Eigen::Vector3d::Zero()}, P);
  // independent rotation: angle-axis rotation of the body z axis
  const Eigen::Vector3d thrust_dir = Eigen::AngleAxisd(M_PI / 2, Eigen::Vector3d::UnitX()) * Eigen::Vector3d::UnitZ();
  const Eigen::Vector3d expected = P.gravity * thrust_dir - Eigen::Vector3d(0, 0, P.gravity);
  CHECK((d.segment<3>(idx::kVel) - expected).norm() < 1e-12);
  CHECK(d[idx::kVel + 1] == doctest::Approx(-P.gravity));
  CHECK(d[idx::kVel + 2] == doctest::Approx(-P.gravity));
}

TEST_CASE("full dynamics: gyroscopic coupling and torque") {
  StateFull<double> s = StateFull<double>::Zero();
  s.segment<4>(idx::kQuat) = quat_identity<double>();
  s.segment<3>(idx::kRate) << 1.0, 2.0, 3.0;
  const Eigen::Vector3d tau(1e-5, -2e-5, 3e-6);
  const auto d = dynamics_full(s, Wrench<double>{0.0, tau}, P);
  const Eigen::Vector3d w(1, 2, 3);
  const Eigen::Vector3d Jw = P.inertia.cwiseProduct(w);
  const Eigen::Vector3d expected = (tau - w.cross(Jw)).cwiseQuotient(P.inertia);
  CHECK((d.segment<3>(idx::kRate) - expected).norm() < 1e-9);
}

TEST_CASE("full dynamics rejects non-finite input") {
  StateFull<double> s = StateFull<double>::Zero();
  s[0] = std::nan("");
  CHECK_THROWS_AS(dynamics_full(s, Wrench<double>{0.0, Eigen::Vector3d::Zero()}, P), InvalidInput);
}

TEST_CASE("reduced dynamics: hover fixed point is exact") {
  const auto s = hover_state<double>(Eigen::Vector3d(0.3, -1.0, 2.0));
  CHECK(dynamics_reduced(s, hover_input(P), P).isZero(0.0));
}

TEST_CASE("reduced dynamics: yaw rate only moves qz") {
  const auto s = hover_state<double>(Eigen::Vector3d::Zero());
  const auto d = dynamics_reduced(s, ControlInput<double>(0.0, 0.0, 0.0, M_PI), P);
  StateReduced<double> expected = StateReduced<double>::Zero();
  expected[idx::kQuat + 3] = M_PI / 2;
  expected[idx::kVel + 2] = -P.gravity;
  CHECK((d - expected).norm() == doctest::Approx(0.0));
}

TEST_CASE("reduced dynamics: quaternion norm is a first integral") {
  std::mt19937_64 rng(11);
  for (int i = 0; i < 200; ++i) {
    const auto s = random_state(rng);
    const auto d = dynamics_reduced(s, random_input(rng), P);
    CHECK(std::abs(s.segment<4>(idx::kQuat).dot(d.segment<4>(idx::kQuat))) <= 1e-12);
  }
}

TEST_CASE("reduced dynamics: quaternion rows equal half q times (0, w)") {
  std::mt19937_64 rng(12);
  for (int i = 0; i < 20; ++i) {
    const auto s = random_state(rng);
    const auto u = random_input(rng);
    const Quat<double> q = s.segment<4>(idx::kQuat);
    const Quat<double> w(0.0, u[1], u[2], u[3]);
    const Quat<double> expected = 0.5 * quat_multiply(q, w);
    CHECK((dynamics_reduced(s, u, P).segment<4>(idx::kQuat) - expected).norm() <= 1e-14);
  }
}

TEST_CASE("reduced dynamics match the full model when rates follow the command") {
  std::mt19937_64 rng(13);
  for (int i = 0; i < 50; ++i) {
    const auto s = random_state(rng);
    const auto u = random_input(rng);
    StateFull<double> f;
    f << s, u.tail<3>();
    // torque that keeps w constant: tau = w x J w
    const Eigen::Vector3d w = u.tail<3>();
    const Wrench<double> wr{u[0], w.cross(P.inertia.cwiseProduct(w))};
    const auto df = dynamics_full(f, wr, P);
    CHECK((df.head<kStateDim>() - dynamics_reduced(s, u, P)).norm() <= 1e-12);
    CHECK(df.tail<3>().norm() <= 1e-9);
  }
}

TEST_CASE("jacobians: hover structure") {
  const auto s = hover_state<double>(Eigen::Vector3d::Zero());
  const auto J = jacobians_reduced(s, hover_input(P), P);
  CHECK(J.B(idx::kVel + 2, idx::kThrust) == doctest::Approx(1.0 / 0.042));
  CHECK(J.B(idx::kVel + 2, idx::kThrust) == doctest::Approx(23.81).epsilon(1e-3));
  std::mt19937_64 rng(14);
  for (int i = 0; i < 20; ++i) {
    const auto Jr = jacobians_reduced(random_state(rng), random_input(rng), P);
    CHECK(Jr.A.block<3, 3>(idx::kPos, idx::kVel).isIdentity(0.0));
  }
}

TEST_CASE("jacobians match central finite differences") {
  std::mt19937_64 rng(15);
  double worst = 0.0;
  for (int i = 0; i < 100; ++i) {
    const auto s = random_state(rng);
    const auto u = random_input(rng);
    const auto J = jacobians_reduced(s, u, P);
    const auto fd = oracles::fd_jacobians_reduced(s, u, P);
    worst = std::max({worst, oracles::max_mixed_relative_error(J.A, fd.A), oracles::max_mixed_relative_error(J.B, fd.B)});
  }
  CHECK(worst <= 1e-5);
}

TEST_CASE("allocation: equal rotor speeds give pure thrust") {
  const auto G = allocation_matrix(P);
  const double c = 1.0e6;
  const auto w = wrench_from_rotor_speeds(G, RotorSpeedsSquared<double>(RotorSpeedsSquared<double>::Constant(c)));
  CHECK(w.thrust == doctest::Approx(4 * P.thrust_coefficient * c));
  CHECK(w.torque.norm() <= 1e-18);
}

TEST_CASE("allocation round trip") {
  const auto G = allocation_matrix(P);
  std::mt19937_64 rng(16);
  std::uniform_real_distribution<double> d(0.0, 4.0e6);
  for (int i = 0; i < 100; ++i) {
    const RotorSpeedsSquared<double> x(d(rng), d(rng), d(rng), d(rng));
    const auto back = wrench_to_rotor_speeds(G, wrench_from_rotor_speeds(G, x));
    CHECK(((back - x).array().abs() / x.array().abs().max(1.0)).maxCoeff() <= 1e-10);
  }
  const Eigen::Matrix4d I = G.inverse() * G;
  CHECK(I.isIdentity(1e-10));
}

TEST_CASE("allocation: hover rotor speed") {
  const auto G = allocation_matrix(P);
  const auto o2 = wrench_to_rotor_speeds(G, Wrench<double>{P.hover_thrust(), Eigen::Vector3d::Zero()});
  const double omega = std::sqrt(0.042 * 9.81 / (4 * 2.88e-8));
  for (int i = 0; i < 4; ++i) CHECK(std::sqrt(o2[i]) == doctest::Approx(omega));
  CHECK(omega == doctest::Approx(1891).epsilon(1e-3));
}

TEST_CASE("vehicle parameter validation") {
  VehicleParams<double> p;
  CHECK_NOTHROW(p.validate());
  p.mass = 0.0;
  CHECK_THROWS_AS(p.validate(), InvalidInput);
}

TEST_CASE("quaternion helpers") {
  const Quat<double> q = quat_normalize(Quat<double>(0.3, -0.2, 0.5, 0.7));
  CHECK((quat_multiply(quat_identity<double>(), q) - q).norm() == 0.0);
  const double h = std::sqrt(0.5);
  const Quat<double> qx(h, h, 0, 0);
  CHECK((quat_rotate(qx, Eigen::Vector3d(0, 0, 1)) - Eigen::Vector3d(0, -1, 0)).norm() <= 1e-15);
  CHECK(quat_to_rotation(q).isUnitary(1e-12));
  CHECK((quat_multiply(q, quat_conjugate(q)) - quat_identity<double>()).norm() <= 1e-15);
  CHECK_THROWS_AS(quat_normalize(Quat<double>::Zero()), DegenerateInput);
}
