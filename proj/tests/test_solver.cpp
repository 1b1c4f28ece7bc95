#include <random>

#include <doctest.h>

#include "nano_nmpc/oracles/checks.hpp"
#include "nano_nmpc/oracles/oracles.hpp"
#include "nano_nmpc/reference.hpp"
#include "nano_nmpc/solver.hpp"

using namespace nano_nmpc;
using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

namespace {

const VehicleParams<double> P;
const QuadrotorModel<double> M(P);

ReferenceWindow<double> constant_ref(const Vec& x, const Vec& u, int n) {
  ReferenceWindow<double> r;
  r.states.assign(n + 1, x);
  r.inputs.assign(n, u);
  return r;
}

ShootingTrajectory<double> hover_traj(int n) {
  ShootingTrajectory<double> t;
  t.xs.assign(n + 1, Vec(hover_state<double>(Eigen::Vector3d(0, 0, 1))));
  t.us.assign(n, Vec(hover_input(P)));
  return t;
}

ShootingTrajectory<double> rollout(const Vec& x0, std::mt19937_64& rng, const OcpSpec<double>& spec) {
  std::uniform_real_distribution<double> d(-1.0, 1.0);
  ShootingTrajectory<double> t;
  t.xs.push_back(x0);
  for (int k = 0; k < spec.horizon; ++k) {
    t.us.push_back(Vec(Eigen::Vector4d(0.4 + 0.2 * d(rng), d(rng), d(rng), d(rng))));
    t.xs.push_back(integrate(M, t.xs.back(), t.us.back(), spec.dt, spec.integrator));
  }
  return t;
}

} // namespace

TEST_CASE("feasible trajectory has zero defects") {
  const auto spec = default_quadrotor_ocp(P);
  std::mt19937_64 rng(51);
  const auto traj = rollout(hover_state<double>(Eigen::Vector3d::Zero()), rng, spec);
  const auto lin = linearize(M, traj, constant_ref(traj.xs[0], hover_input(P), spec.horizon), spec);
  for (const auto& c : lin.defect) CHECK(c.lpNorm<Eigen::Infinity>() <= 1e-12);
}

TEST_CASE("hover is a fixed point of the RTI step") {
  const auto spec = default_quadrotor_ocp(P);
  const auto traj = hover_traj(spec.horizon);
  const auto ref = constant_ref(traj.xs[0], hover_input(P), spec.horizon);
  const auto lin = linearize(M, traj, ref, spec);
  for (const auto& r : lin.x_residual) CHECK(r.norm() == 0.0);
  for (const auto& r : lin.u_residual) CHECK(r.norm() == 0.0);
  const auto cq = condense(lin, traj);
  CHECK(cq.qp.g.norm() == 0.0);

  RtiSolver<QuadrotorModel<double>> solver(M, spec);
  solver.set_trajectory(traj);
  const auto sol = solver.rti_step(traj.xs[0], ref);
  CHECK((sol.u0 - Vec(hover_input(P))).norm() <= 1e-10);
  CHECK(sol.step_norm <= 1e-10);
  CHECK(sol.kkt_residual <= 1e-12);
}

TEST_CASE("double integrator linearization equals the exact discretization") {
  const auto fx = oracles::make_linear_fixture(4, 7, false);
  ShootingTrajectory<double> traj;
  traj.xs.assign(5, Vec(Eigen::Vector2d(0.4, -0.3)));
  traj.us.assign(4, Vec::Constant(1, 0.2));
  const auto lin = linearize(fx.model, traj, fx.ref, fx.spec);
  Mat Ad, Bd;
  oracles::double_integrator_discrete(fx.spec.dt, Ad, Bd);
  for (int k = 0; k < 4; ++k) {
    CHECK((lin.A[k] - Ad).cwiseAbs().maxCoeff() <= 1e-12);
    CHECK((lin.B[k] - Bd).cwiseAbs().maxCoeff() <= 1e-12);
  }
}

TEST_CASE("single-interval condensed Hessian in closed form") {
  auto fx = oracles::make_linear_fixture(1, 3, false);
  fx.spec.stage_weight << 2.0, 3.0, 0.5;
  fx.spec.terminal_weight << 7.0, 11.0;
  ShootingTrajectory<double> traj;
  traj.xs.assign(2, Vec::Zero(2));
  traj.us.assign(1, Vec::Zero(1));
  const auto lin = linearize(fx.model, traj, fx.ref, fx.spec);
  const auto cq = condense(lin, traj);
  const double dt = fx.spec.dt;
  const Eigen::Vector2d B0(dt * dt / 2, dt);
  const double expected = 7.0 * B0[0] * B0[0] + 11.0 * B0[1] * B0[1] + 0.5;
  CHECK(cq.qp.H(0, 0) == doctest::Approx(expected).epsilon(1e-14));
}

TEST_CASE("zero state weights decouple the condensed Hessian") {
  auto spec = default_quadrotor_ocp(P);
  spec.horizon = 4;
  spec.stage_weight.head(kStateDim).setZero();
  spec.terminal_weight.setZero();
  std::mt19937_64 rng(52);
  const auto traj = rollout(hover_state<double>(Eigen::Vector3d::Zero()), rng, spec);
  const auto lin = linearize(M, traj, constant_ref(traj.xs[0], hover_input(P), 4), spec);
  const auto cq = condense(lin, traj);
  Vec diag(16);
  for (int k = 0; k < 4; ++k) diag.segment(4 * k, 4) = spec.stage_weight.tail(4);
  CHECK((cq.qp.H - Mat(diag.asDiagonal())).norm() == 0.0);
}

TEST_CASE("condensing agrees with the sparse KKT system") {
  const auto r = oracles::check_condensing(20, 53);
  INFO(oracles::format_check(r));
  CHECK(r.passed);
}

TEST_CASE("one RTI step is exact on linear-quadratic problems") {
  const auto r = oracles::check_rti_linear(20, 54);
  INFO(oracles::format_check(r));
  CHECK(r.passed);
}

TEST_CASE("input bounds are honoured on the linear fixture") {
  const auto fx = oracles::make_linear_fixture(2, 11, true);
  const auto opt = oracles::linear_fixture_optimum(fx);
  RtiSolver<oracles::DoubleIntegrator> solver(fx.model, fx.spec);
  solver.initialize(fx.x0, Vec::Zero(1));
  const auto sol = solver.rti_step(fx.x0, fx.ref);
  for (int k = 0; k < 2; ++k) CHECK((sol.trajectory.us[k] - opt.du[k]).norm() <= 1e-8);
}

TEST_CASE("repeated iterations converge at a frozen state") {
  const auto spec = default_quadrotor_ocp(P);
  for (auto kind : {ScenarioKind::hover, ScenarioKind::helix}) {
    ScenarioSpec sc;
    sc.kind = kind;
    const Vec x0 = reduce_state(default_initial_state(sc));
    const auto ref = window(sc, 0.0, spec.horizon, spec.dt, P);
    RtiSolver<QuadrotorModel<double>> solver(M, spec);
    solver.initialize(x0, hover_input(P));
    const auto rep = solver.iterate(x0, ref);
    CHECK(rep.converged);
    CHECK(rep.iterations <= 200);
    CHECK(rep.kkt_residual <= 1e-4);

    // At a KKT point the next step barely moves the trajectory.
    solver.iterate(x0, ref, 200, 1e-10);
    const auto sol = solver.rti_step(x0, ref);
    CHECK(sol.step_norm <= 1e-8);
  }
}

TEST_CASE("shift") {
  const auto spec = default_quadrotor_ocp(P);
  const auto hover = hover_traj(spec.horizon);
  const auto s = shift(M, hover, spec.dt, spec.integrator);
  for (int k = 0; k <= spec.horizon; ++k) CHECK(s.xs[k] == hover.xs[k]);

  std::mt19937_64 rng(55);
  const auto traj = rollout(hover_state<double>(Eigen::Vector3d::Zero()), rng, spec);
  const auto once = shift(M, traj, spec.dt, spec.integrator);
  const auto twice = shift(M, once, spec.dt, spec.integrator);
  const auto again = shift(M, shift(M, traj, spec.dt, spec.integrator), spec.dt, spec.integrator);
  for (int k = 0; k <= spec.horizon; ++k) CHECK(twice.xs[k] == again.xs[k]);
  CHECK(once.xs[0] == traj.xs[1]);
  CHECK(once.us.back() == traj.us.back());
  // a dynamically feasible trajectory stays feasible after the shift
  const auto lin = linearize(M, once, constant_ref(once.xs[0], hover_input(P), spec.horizon), spec);
  for (const auto& c : lin.defect) CHECK(c.lpNorm<Eigen::Infinity>() <= 1e-12);
}

TEST_CASE("rti step is deterministic and respects the bounds") {
  const auto spec = default_quadrotor_ocp(P);
  ScenarioSpec sc;
  sc.kind = ScenarioKind::takeoff_cruise_land;
  const auto ref = window(sc, 4.0, spec.horizon, spec.dt, P);
  const Vec x0 = hover_state<double>(Eigen::Vector3d(-0.5, 0.3, 0.2));
  auto run = [&] {
    RtiSolver<QuadrotorModel<double>> solver(M, spec);
    solver.initialize(x0, hover_input(P));
    return solver.rti_step(x0, ref);
  };
  const auto a = run(), b = run();
  CHECK(a.u0 == b.u0);
  for (int k = 0; k < spec.horizon; ++k) CHECK(a.trajectory.xs[k] == b.trajectory.xs[k]);
  CHECK(a.kkt_residual == b.kkt_residual);
  CHECK((a.u0.array() >= spec.u_lb.array()).all());
  CHECK((a.u0.array() <= spec.u_ub.array()).all());
}

TEST_CASE("solver misuse") {
  const auto spec = default_quadrotor_ocp(P);
  RtiSolver<QuadrotorModel<double>> solver(M, spec);
  CHECK_THROWS(solver.feedback(Vec(hover_state<double>(Eigen::Vector3d::Zero()))));
  CHECK_THROWS(solver.set_trajectory(hover_traj(3)));
  auto wrong = spec;
  wrong.terminal_weight = Vec::Ones(2);
  CHECK_THROWS((RtiSolver<QuadrotorModel<double>>(M, wrong)));
}
