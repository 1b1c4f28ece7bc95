#include "nano_nmpc/oracles/checks.hpp"

#include <cmath>
#include <random>
#include <sstream>

#include "nano_nmpc/oracles/oracles.hpp"

namespace nano_nmpc::oracles {

namespace {

StateReduced<double> random_state(std::mt19937& rng) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  StateReduced<double> x;
  for (int i = 0; i < kStateDim; ++i) x[i] = 2.0 * u(rng);
  x.segment<4>(idx::kQuat) = quat_normalize(Quat<double>(u(rng), u(rng), u(rng), u(rng)) + Quat<double>(1e-3, 0, 0, 0));
  return x;
}

ControlInput<double> random_input(std::mt19937& rng, const VehicleParams<double>& p) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  const double rate = 4.0 * M_PI;
  return ControlInput<double>(p.hover_thrust() * (1.0 + u(rng)), rate * u(rng), rate * u(rng), rate * u(rng));
}

double max_abs_diff(const std::vector<Vec>& a, const std::vector<Vec>& b) {
  double worst = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) worst = std::max(worst, (a[k] - b[k]).lpNorm<Eigen::Infinity>());
  return worst;
}

} // namespace

CheckResult check_jacobians(int cases, unsigned seed) {
  CheckResult r{"jacobian-fd", true, cases, 0.0, 1e-5, {}};
  std::mt19937 rng(seed);
  const VehicleParams<double> params;
  for (int i = 0; i < cases; ++i) {
    const auto x = random_state(rng);
    const auto u = random_input(rng, params);
    const auto analytic = jacobians_reduced(x, u, params);
    const auto fd = fd_jacobians_reduced(x, u, params);
    r.worst = std::max({r.worst, max_mixed_relative_error(analytic.A, fd.A), max_mixed_relative_error(analytic.B, fd.B)});
  }
  r.passed = r.worst <= r.threshold;
  return r;
}

CheckResult check_qp_enumeration(int cases, unsigned seed) {
  CheckResult r{"qp-enumeration", true, cases, 0.0, 1e-6, {}};
  std::mt19937 rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::uniform_int_distribution<int> dim(1, 8);
  int infeasible = 0, not_optimal = 0;
  BoxQpSolver<double> solver;
  for (int c = 0; c < cases; ++c) {
    const int n = dim(rng);
    DenseQp<double> qp;
    Mat L = Mat::NullaryExpr(n, n, [&] { return u(rng); });
    qp.H = L.transpose() * L + 0.1 * Mat::Identity(n, n);
    qp.g = 3.0 * Vec::NullaryExpr(n, [&] { return u(rng); });
    qp.lb.resize(n);
    qp.ub.resize(n);
    for (int i = 0; i < n; ++i) {
      const double a = u(rng), b = u(rng);
      qp.lb[i] = std::min(a, b) - 0.05;
      qp.ub[i] = std::max(a, b) + 0.05;
    }
    const auto sol = solver.solve(qp);
    const Vec ref = enumerate_box_qp(qp);
    if (sol.status != QpStatus::optimal) ++not_optimal;
    if ((sol.z.array() < qp.lb.array()).any() || (sol.z.array() > qp.ub.array()).any()) ++infeasible;
    r.worst = std::max(r.worst, (sol.z - ref).lpNorm<Eigen::Infinity>());
  }
  r.passed = r.worst <= r.threshold && infeasible == 0 && not_optimal == 0;
  std::ostringstream os;
  os << "infeasible=" << infeasible << " non-optimal=" << not_optimal;
  r.detail = os.str();
  return r;
}

CheckResult check_condensing(int cases, unsigned seed) {
  CheckResult r{"condensing-vs-sparse-kkt", true, cases, 0.0, 1e-8, {}};
  std::mt19937 rng(seed);
  std::uniform_int_distribution<int> horizon(1, 5);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  const VehicleParams<double> params;
  const QuadrotorModel<double> model(params);
  BoxQpSolver<double> solver;
  for (int c = 0; c < cases; ++c) {
    OcpSpec<double> spec = default_quadrotor_ocp(params);
    spec.horizon = horizon(rng);
    spec.u_lb = Vec::Constant(kInputDim, -1e6);
    spec.u_ub = Vec::Constant(kInputDim, 1e6);
    ShootingTrajectory<double> traj;
    ReferenceWindow<double> ref;
    for (int k = 0; k <= spec.horizon; ++k) {
      traj.xs.push_back(random_state(rng));
      ref.states.push_back(random_state(rng));
    }
    for (int k = 0; k < spec.horizon; ++k) {
      traj.us.push_back(random_input(rng, params));
      ref.inputs.push_back(random_input(rng, params));
    }
    const Vec x0 = random_state(rng);
    const auto lin = linearize(model, traj, ref, spec);
    const auto qp = condense(lin, traj, x0);
    const auto sol = solver.solve(qp);
    const Vec dx0 = x0 - traj.xs.front();
    const auto next = expand(lin, traj, dx0, sol.z);
    const auto oracle = sparse_kkt_solve(lin, dx0);

    std::vector<Vec> dx, du;
    for (int k = 0; k <= spec.horizon; ++k) dx.push_back(next.xs[k] - traj.xs[k]);
    for (int k = 0; k < spec.horizon; ++k) du.push_back(next.us[k] - traj.us[k]);
    r.worst = std::max({r.worst, max_abs_diff(dx, oracle.dx), max_abs_diff(du, oracle.du)});
  }
  r.passed = r.worst <= r.threshold;
  return r;
}

CheckResult check_rti_linear(int cases, unsigned seed) {
  CheckResult r{"rti-linear-exactness", true, cases, 0.0, 1e-8, {}};
  std::mt19937 rng(seed);
  std::uniform_int_distribution<int> horizon(1, 6);
  std::uniform_real_distribution<double> u(-3.0, 3.0);
  for (int c = 0; c < cases; ++c) {
    const auto fx = make_linear_fixture(horizon(rng), seed * 1000u + static_cast<unsigned>(c), c % 2 == 0);
    RtiSolver<DoubleIntegrator> solver(fx.model, fx.spec);
    ShootingTrajectory<double> guess;
    for (int k = 0; k <= fx.spec.horizon; ++k) guess.xs.push_back(Vec(Eigen::Vector2d(u(rng), u(rng))));
    for (int k = 0; k < fx.spec.horizon; ++k)
      guess.us.push_back(Vec::Constant(1, u(rng)).cwiseMax(fx.spec.u_lb).cwiseMin(fx.spec.u_ub));
    solver.set_trajectory(guess);
    const auto sol = solver.rti_step(fx.x0, fx.ref);
    const auto exact = linear_fixture_optimum(fx);
    r.worst = std::max({r.worst, max_abs_diff(sol.trajectory.xs, exact.dx), max_abs_diff(sol.trajectory.us, exact.du)});
  }
  r.passed = r.worst <= r.threshold;
  return r;
}

std::vector<CheckResult> run_all_checks() {
  return {check_jacobians(), check_qp_enumeration(), check_condensing(), check_rti_linear()};
}

std::string format_check(const CheckResult& r) {
  std::ostringstream os;
  os << (r.passed ? "PASS " : "FAIL ") << r.name << "  cases=" << r.cases << "  worst=" << r.worst
     << "  threshold=" << r.threshold;
  if (!r.detail.empty()) os << "  " << r.detail;
  return os.str();
}

} // namespace nano_nmpc::oracles
