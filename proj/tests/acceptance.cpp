// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "nano_nmpc/harness.hpp"
#include "nano_nmpc/oracles/checks.hpp"

using namespace nano_nmpc;

namespace {

struct Outcome {
  bool passed;
  std::string detail;
};

std::string fmt(const char* f, double a, double b = 0.0, double c = 0.0) {
  char buf[256];
  std::snprintf(buf, sizeof buf, f, a, b, c);
  return buf;
}

double z_error(const LogRow& r) { return std::abs(r.state[idx::kPos + 2] - r.reference.state[idx::kPos + 2]); }

double position_error(const LogRow& r) {
  return (r.state.segment<3>(idx::kPos) - r.reference.state.segment<3>(idx::kPos)).norm();
}

long input_violations(const SimLog& log, const OcpSpec<double>& ocp) {
  long n = 0;
  for (const auto& r : log.rows) {
    if ((r.applied.array() < ocp.u_lb.array()).any() || (r.applied.array() > ocp.u_ub.array()).any()) ++n;
  }
  return n;
}

Outcome hover() {
  const SimConfig cfg = default_sim_config(ScenarioKind::hover);
  const auto t0 = std::chrono::steady_clock::now();
  const SimResult res = run_simulation(cfg);
  const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  double worst = 0.0;
  for (const auto& r : res.log.rows) {
    if (r.t >= 3.0 - 1e-9) worst = std::max(worst, z_error(r));
  }
  const long viol = input_violations(res.log, cfg.ocp);
  const bool ok = worst <= 0.02 && viol == 0 && wall <= 5.0 && cfg.initial_state[idx::kPos + 2] == 0.0;
  return {ok, fmt("max|z-1| after 3 s = %.3e m (<= 0.02), wall = %.2f s (<= 5), violations = %.0f", worst, wall,
                  static_cast<double>(viol))};
}

Outcome steps() {
  const SimConfig cfg = default_sim_config(ScenarioKind::hover_steps);
  const SimResult res = run_simulation(cfg);
  std::vector<double> changes{0.0};
  double acc = 0.0;
  const auto& levels = cfg.scenario.steps.levels;
  for (std::size_t i = 0; i + 1 < levels.size(); ++i) changes.push_back(acc += levels[i].dwell);
  changes.push_back(cfg.duration + 1.0);

  bool ok = true;
  std::ostringstream detail;
  detail << "settling [s]:";
  for (std::size_t i = 0; i + 1 < changes.size(); ++i) {
    // From t0 + 1 s until the next change the error must stay in the band.
    const double t0 = changes[i], t1 = changes[i + 1];
    double worst = 0.0, last_out = -1.0;
    for (const auto& r : res.log.rows) {
      if (r.t < t0 - 1e-9 || r.t >= t1 - 1e-9) continue;
      if (z_error(r) > 0.05) last_out = r.t - t0;
      if (r.t >= t0 + 1.0 - 1e-9) worst = std::max(worst, z_error(r));
    }
    const double settle = last_out < 0.0 ? 0.0 : last_out + 1.0 / cfg.control_rate;
    ok = ok && worst <= 0.05;
    detail << ' ' << fmt("%.1f", settle);
  }
  detail << " (each <= 1.0, band 0.05 m)";
  return {ok, detail.str()};
}

Outcome helix() {
  const SimConfig cfg = default_sim_config(ScenarioKind::helix);
  const SimResult res = run_simulation(cfg);
  double sum = 0.0;
  int n = 0;
  for (const auto& r : res.log.rows) {
    if (r.t < 5.0 - 1e-9) continue;
    sum += position_error(r) * position_error(r);
    ++n;
  }
  const double rms = std::sqrt(sum / n);
  return {rms <= 0.10, fmt("RMS 3D error over [5, 20] s = %.4f m (<= 0.10)", rms)};
}

Outcome cruise() {
  const SimConfig cfg = default_sim_config(ScenarioKind::takeoff_cruise_land);
  const SimResult res = run_simulation(cfg);
  const Eigen::Vector3d b(cfg.scenario.cruise.end.x(), cfg.scenario.cruise.end.y(), 0.0);
  const double dist = (res.log.rows.back().state.segment<3>(idx::kPos) - b).norm();
  const auto td = res.summary.touchdown_speed;
  const bool ok = dist <= 0.05 && td && *td <= 0.1;
  return {ok, fmt("final distance to B = %.3e m (<= 0.05), touchdown speed = %.3e m/s (<= 0.1)", dist,
                  td ? *td : std::nan(""))};
}

Outcome from_check(const oracles::CheckResult& r) { return {r.passed, oracles::format_check(r)}; }

Outcome convergence() {
  bool ok = true;
  std::ostringstream detail;
  for (auto kind : {ScenarioKind::hover, ScenarioKind::hover_steps, ScenarioKind::takeoff_cruise_land,
                    ScenarioKind::helix}) {
    const SimConfig cfg = default_sim_config(kind);
    RtiSolver<QuadrotorModel<double>> solver(QuadrotorModel<double>(cfg.vehicle), cfg.ocp, cfg.qp);
    const VectorX<double> x0 = reduce_state(cfg.initial_state);
    const auto ref = window(cfg.scenario, 0.0, cfg.ocp.horizon, cfg.ocp.dt, cfg.vehicle);
    solver.initialize(x0, hover_input(cfg.vehicle));
    const auto rep = solver.iterate(x0, ref, 200, 1e-4);
    ok = ok && rep.converged && rep.iterations <= 200;
    detail << to_string(kind) << ": " << rep.iterations << " it, kkt " << fmt("%.1e", rep.kkt_residual) << "; ";
  }
  return {ok, detail.str() + "(<= 200 it, kkt <= 1e-4)"};
}

Outcome timing() {
  SimConfig cfg = default_sim_config(ScenarioKind::hover);
  cfg.ocp.horizon = 10;
  const SimResult res = run_simulation(cfg);
  const auto& s = res.summary;
  const bool ok = s.solver_time_mean <= 5e-3 && s.solver_time_max <= 20e-3 && s.solver_time_mean <= s.solver_time_max;
  return {ok, fmt("mean %.3e s (<= 5e-3), max %.3e s (<= 2e-2); reference figure 1.03e-04 s mean, ratio %.1f",
                  s.solver_time_mean, s.solver_time_max, s.solver_time_mean / 1.03e-4)};
}

Outcome determinism() {
  SimConfig cfg = default_sim_config(ScenarioKind::helix);
  cfg.seed = 1234;
  cfg.noise.position_std = 0.005;
  cfg.noise.rate_std = 0.01;
  const auto dir = std::filesystem::temp_directory_path() / "nano_nmpc_acceptance";
  std::filesystem::create_directories(dir);
  auto run_to = [&](const std::string& name) {
    const auto path = dir / name;
    write_csv(run_simulation(cfg).log, path, false);
    std::ifstream in(path, std::ios::binary);
    return std::string(std::istreambuf_iterator<char>(in), {});
  };
  const std::string a = run_to("a.csv"), b = run_to("b.csv");
  return {!a.empty() && a == b, fmt("two seeded noisy helix runs, %.0f bytes each, identical", static_cast<double>(a.size()))};
}

} // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"hover", hover},
      {"hover steps", steps},
      {"helix", helix},
      {"takeoff-cruise-land", cruise},
      {"jacobian oracle", [] { return from_check(oracles::check_jacobians()); }},
      {"qp oracle", [] { return from_check(oracles::check_qp_enumeration()); }},
      {"condensing equivalence", [] { return from_check(oracles::check_condensing()); }},
      {"rti exactness", [] { return from_check(oracles::check_rti_linear()); }},
      {"rti convergence", convergence},
      {"timing envelope", timing},
      {"determinism", determinism},
  };
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Outcome o{false, ""};
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failed += o.passed ? 0 : 1;
    std::printf("%s %2zu %s: %s\n", o.passed ? "PASS" : "FAIL", i + 1, criteria[i].first.c_str(), o.detail.c_str());
    std::fflush(stdout);
  }
  return failed == 0 ? 0 : 1;
}
