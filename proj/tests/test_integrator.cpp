#include <cmath>
#include <random>

#include <doctest.h>

#include "nano_nmpc/errors.hpp"
#include "nano_nmpc/integrator.hpp"
#include "nano_nmpc/model.hpp"
#include "nano_nmpc/oracles/oracles.hpp"

using namespace nano_nmpc;
using Vec = Eigen::VectorXd;

namespace {

const VehicleParams<double> P;
const QuadrotorModel<double> M(P);

Vec hover() { return hover_state<double>(Eigen::Vector3d(0, 0, 1)); }

Vec spin_input(double wz) { return Eigen::Vector4d(P.hover_thrust(), 0, 0, wz); }

Quat<double> spin_exact(double wz, double t) { return {std::cos(wz * t / 2), 0, 0, std::sin(wz * t / 2)}; }

} // namespace

TEST_CASE("hover is preserved for any step count") {
  for (int n : {1, 2, 3, 7}) {
    const Vec x = integrate(M, hover(), Vec(hover_input(P)), 0.1, IntegratorConfig{n});
    CHECK((x - hover()).norm() == 0.0);
  }
}

TEST_CASE("one step equals a single rk4 step") {
  const Vec x0 = hover();
  const Vec u = Eigen::Vector4d(0.5, 0.3, -0.2, 1.0);
  CHECK((integrate(M, x0, u, 0.05, IntegratorConfig{1}) - rk4_step(M, x0, u, 0.05)).norm() == 0.0);
}

TEST_CASE("pure yaw spin matches the closed-form quaternion") {
  const Vec x = integrate(M, hover(), spin_input(1.0), 0.1, IntegratorConfig{3});
  CHECK((x.segment<4>(idx::kQuat) - spin_exact(1.0, 0.1)).norm() <= 1e-6);
}

TEST_CASE("ballistic fall is reproduced exactly") {
  const Vec x = integrate(M, hover(), Vec(Eigen::Vector4d::Zero()), 0.3, IntegratorConfig{3});
  CHECK(x[idx::kPos + 2] == doctest::Approx(1.0 - 0.5 * P.gravity * 0.09).epsilon(1e-14));
  CHECK(x[idx::kVel + 2] == doctest::Approx(-P.gravity * 0.3).epsilon(1e-14));
}

TEST_CASE("fourth-order self-convergence") {
  const double wz = 10.0, t = 1.0;
  const Vec u = spin_input(wz);
  const Vec ref = integrate(M, hover(), u, t, IntegratorConfig{48});
  auto err = [&](int n) { return (integrate(M, hover(), u, t, IntegratorConfig{n}) - ref).norm(); };
  for (int n : {3, 6}) {
    const double ratio = err(n) / err(2 * n);
    CHECK(ratio >= 12.0);
    CHECK(ratio <= 20.0);
  }
}

TEST_CASE("quaternion norm drift within a control interval") {
  std::mt19937_64 rng(21);
  std::uniform_real_distribution<double> d(-1.0, 1.0);
  for (int i = 0; i < 50; ++i) {
    Eigen::Vector3d w(d(rng), d(rng), d(rng));
    w *= 4 * M_PI / std::sqrt(3.0);
    const Vec u = Eigen::Vector4d(P.hover_thrust(), w.x(), w.y(), w.z());
    const Vec x = integrate(M, hover(), u, 0.1, IntegratorConfig{3});
    CHECK(std::abs(x.segment<4>(idx::kQuat).norm() - 1.0) <= 1e-6);
  }
}

TEST_CASE("sensitivities: vanishing interval") {
  const auto r = integrate_with_sensitivities(M, hover(), spin_input(2.0), 1e-8, IntegratorConfig{3});
  CHECK((r.S_x - Eigen::MatrixXd::Identity(kStateDim, kStateDim)).cwiseAbs().maxCoeff() <= 1e-6);
  CHECK(r.S_u.cwiseAbs().maxCoeff() <= 1e-6);
}

TEST_CASE("sensitivities match finite differences of the discrete map") {
  std::mt19937_64 rng(22);
  std::uniform_real_distribution<double> d(-1.0, 1.0), t(0.0, 0.8);
  double worst = 0.0;
  for (int i = 0; i < 50; ++i) {
    Vec x(kStateDim);
    for (int j = 0; j < kStateDim; ++j) x[j] = d(rng);
    x.segment<4>(idx::kQuat).normalize();
    const Vec u = Eigen::Vector4d(t(rng), 4 * d(rng), 4 * d(rng), 4 * d(rng));
    const auto r = integrate_with_sensitivities(M, x, u, 0.1, IntegratorConfig{3});
    const auto fd = oracles::fd_sensitivities(M, x, u, 0.1, IntegratorConfig{3});
    CHECK((r.x_next - integrate(M, x, u, 0.1, IntegratorConfig{3})).norm() == 0.0);
    worst = std::max({worst, oracles::max_mixed_relative_error(r.S_x, fd.A), oracles::max_mixed_relative_error(r.S_u, fd.B)});
  }
  CHECK(worst <= 1e-5);
}

TEST_CASE("sensitivities of the double integrator equal the exact discretization") {
  const oracles::DoubleIntegrator di;
  for (int n : {1, 3, 5}) {
    const auto r = integrate_with_sensitivities(di, Vec(Eigen::Vector2d(0.3, -1.0)), Vec::Constant(1, 0.7), 0.2,
                                                IntegratorConfig{n});
    Eigen::MatrixXd Ad, Bd;
    oracles::double_integrator_discrete(0.2, Ad, Bd);
    CHECK((r.S_x - Ad).cwiseAbs().maxCoeff() <= 1e-12);
    CHECK((r.S_u - Bd).cwiseAbs().maxCoeff() <= 1e-12);
  }
}

TEST_CASE("integration is deterministic") {
  const Vec u = Eigen::Vector4d(0.6, 1.0, -2.0, 3.0);
  const auto a = integrate_with_sensitivities(M, hover(), u, 0.1, IntegratorConfig{3});
  const auto b = integrate_with_sensitivities(M, hover(), u, 0.1, IntegratorConfig{3});
  CHECK(a.x_next == b.x_next);
  CHECK(a.S_x == b.S_x);
  CHECK(a.S_u == b.S_u);
}

TEST_CASE("integrator input errors") {
  const Vec u = hover_input(P);
  CHECK_THROWS_AS(integrate(M, hover(), u, 0.0, IntegratorConfig{3}), InvalidInput);
  CHECK_THROWS_AS(integrate(M, hover(), u, 0.1, IntegratorConfig{0}), InvalidInput);
  Vec bad = hover();
  bad[0] = std::nan("");
  CHECK_THROWS_AS(integrate(M, bad, u, 0.1, IntegratorConfig{3}), InvalidInput);
  Vec huge = hover();
  huge[idx::kQuat] = 1e300;
  CHECK_THROWS_AS(integrate(M, huge, Vec(Eigen::Vector4d(0.4, 1e300, 1e300, 1e300)), 0.1, IntegratorConfig{3}),
                  IntegrationDiverged);
}
