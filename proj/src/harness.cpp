#include "nano_nmpc/harness.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numeric>
#include <random>
#include <sstream>

#include <json.hpp>

#include "nano_nmpc/errors.hpp"

namespace nano_nmpc {

namespace {

constexpr double kLiftoffHeight = 0.05; // m

std::string format_state(const StateFull<double>& s) {
  std::ostringstream os;
  os.precision(9);
  os << "[";
  for (int i = 0; i < s.size(); ++i) os << (i ? ", " : "") << s[i];
  os << "]";
  return os.str();
}

double percentile(std::vector<double> v, double p) {
  if (v.empty()) return 0.0;
  std::sort(v.begin(), v.end());
  const auto rank = static_cast<std::size_t>(std::ceil(p / 100.0 * static_cast<double>(v.size())));
  return v[std::clamp<std::size_t>(rank, 1, v.size()) - 1];
}

} // namespace

void SimConfig::validate() const {
  if (!(control_rate > 0.0) || !std::isfinite(control_rate)) throw ConfigError("sim.control_rate must be > 0");
  if (plant_substeps < 1) throw ConfigError("sim.plant_substeps must be >= 1");
  if (!(duration >= 0.0) || !std::isfinite(duration)) throw ConfigError("sim.duration must be >= 0");
  if (!rate_gains.allFinite() || (rate_gains.array() <= 0.0).any()) throw ConfigError("sim.rate_gains must be > 0");
  if (!initial_state.allFinite()) throw ConfigError("sim.initial_state must be finite");
  if (!(initial_state.segment<4>(idx::kQuat).norm() > 0.0)) throw ConfigError("sim.initial_state quaternion is zero");
  if (noise.position_std < 0.0 || noise.rate_std < 0.0) throw ConfigError("sim.noise standard deviations must be >= 0");
  if (transient_cut < 0.0) throw ConfigError("sim.transient_cut must be >= 0");
  if (!(settle_band > 0.0)) throw ConfigError("sim.settle_band must be > 0");
  if (qp.max_iter < 1 || !(qp.tolerance > 0.0)) throw ConfigError("ocp qp settings out of range");
  scenario.validate();
  try {
    vehicle.validate();
    ocp.validate();
  } catch (const InvalidInput& e) {
    throw ConfigError(e.what());
  }
  if (ocp.state_dim() != kStateDim || ocp.input_dim() != kInputDim) {
    throw ConfigError("ocp weights/bounds must have 14/10/4 entries");
  }
}

long SimConfig::control_steps() const { return std::lround(duration * control_rate); }

SimConfig default_sim_config(ScenarioKind kind) {
  SimConfig c;
  c.scenario.kind = kind;
  c.scenario.duration = c.duration;
  c.ocp = default_quadrotor_ocp(c.vehicle);
  c.initial_state = default_initial_state(c.scenario);
  if (kind == ScenarioKind::hover_steps) {
    // Altitude steps are setpoint changes the controller cannot see coming;
    // a softer velocity weight lets each step settle within a second.
    c.reference_preview = false;
    c.ocp.stage_weight.segment<3>(idx::kVel).setConstant(0.3);
    c.ocp.terminal_weight.segment<3>(idx::kVel).setConstant(3.0);
  }
  return c;
}

Eigen::Vector3d rate_inner_loop(const Eigen::Vector3d& w_cmd, const Eigen::Vector3d& w_measured,
                                const VehicleParams<double>& params, const Eigen::Vector3d& gains) {
  const Eigen::Vector3d& J = params.inertia;
  return J.cwiseProduct(gains.cwiseProduct(w_cmd - w_measured)) + w_measured.cross(J.cwiseProduct(w_measured));
}

Plant::Plant(const SimConfig& config)
    : params_(config.vehicle), gains_(config.rate_gains), gamma_(allocation_matrix(config.vehicle)),
      gamma_lu_(gamma_), saturation_(config.motor_saturation), ground_(config.ground_contact) {}

Wrench<double> Plant::wrench(const StateFull<double>& state, const ControlInput<double>& command,
                             const Eigen::Vector3d& gyro_noise) const {
  const Eigen::Vector3d w = state.segment<3>(idx::kRate) + gyro_noise;
  Wrench<double> out{command[idx::kThrust], rate_inner_loop(command.segment<3>(idx::kRateCmd), w, params_, gains_)};
  if (saturation_) {
    Eigen::Vector4d wv;
    wv << out.thrust, out.torque;
    const RotorSpeedsSquared<double> omega_sq = gamma_lu_.solve(wv).cwiseMax(0.0);
    out = wrench_from_rotor_speeds(gamma_, omega_sq);
  }
  return out;
}

StateFull<double> Plant::step_wrench(const StateFull<double>& s, const Wrench<double>& w, double h) {
  const StateFull<double> k1 = dynamics_full(s, w, params_);
  const StateFull<double> k2 = dynamics_full<double>(s + 0.5 * h * k1, w, params_);
  const StateFull<double> k3 = dynamics_full<double>(s + 0.5 * h * k2, w, params_);
  const StateFull<double> k4 = dynamics_full<double>(s + h * k3, w, params_);
  StateFull<double> next = s + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
  if (!next.allFinite()) throw IntegrationDiverged("plant: non-finite state");

  if (next[idx::kPos + 2] > kLiftoffHeight) airborne_ = true;
  if (ground_ && next[idx::kPos + 2] < 0.0) {
    const double vz = next[idx::kVel + 2];
    if (airborne_ && vz < 0.0) touchdown_speed_ = std::max(touchdown_speed_.value_or(0.0), -vz);
    next[idx::kPos + 2] = 0.0;
    next[idx::kVel + 2] = std::max(vz, 0.0);
  }
  return next;
}

StateFull<double> Plant::step(const StateFull<double>& state, const ControlInput<double>& command, double h,
                              const Eigen::Vector3d& gyro_noise) {
  return step_wrench(state, wrench(state, command, gyro_noise), h);
}

SimResult run_simulation(const SimConfig& config, std::ostream* qp_dump) {
  config.validate();
  const long steps = config.control_steps();
  const double period = 1.0 / config.control_rate;
  const double h = period / config.plant_substeps;
  const VehicleParams<double>& params = config.vehicle;
  const ControlInput<double> hover = hover_input(params);

  Plant plant(config);
  RtiSolver<QuadrotorModel<double>> solver(QuadrotorModel<double>(params), config.ocp, config.qp);
  solver.qp_solver().set_dump(qp_dump);

  std::mt19937_64 rng(config.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  auto noise3 = [&](double stddev) {
    Eigen::Vector3d n = Eigen::Vector3d::Zero();
    if (stddev > 0.0) {
      for (int i = 0; i < 3; ++i) n[i] = stddev * normal(rng);
    }
    return n;
  };

  StateFull<double> state = config.initial_state;
  SimResult result;
  result.log.rows.reserve(static_cast<std::size_t>(steps + 1));

  auto abort = [&](long k, const std::string& why) -> SimulationAborted {
    std::ostringstream os;
    os << "simulation aborted at step " << k << " (t=" << static_cast<double>(k) * period << " s): " << why
       << "; last plant state " << format_state(state);
    return SimulationAborted(os.str(), k);
  };

  for (long k = 0; k <= steps; ++k) {
    const double t = static_cast<double>(k) * period;
    state.segment<4>(idx::kQuat) = quat_normalize(state.segment<4>(idx::kQuat));

    VectorX<double> x_meas = reduce_state(state);
    if (config.noise.position_std > 0.0) x_meas.segment<3>(idx::kPos) += noise3(config.noise.position_std);

    LogRow row;
    row.t = t;
    row.state = state;
    row.reference = sample(config.scenario, t, params);

    RtiSolution<double> sol;
    try {
      if (k == 0 || config.warm_start == WarmStart::cold) solver.initialize(x_meas, hover);
      const auto ref = window(config.scenario, t, config.ocp.horizon, config.reference_preview ? config.ocp.dt : 0.0,
                              params);
      sol = solver.rti_step(x_meas, ref);
    } catch (const std::exception& e) {
      throw abort(k, std::string("controller failure: ") + e.what());
    }
    if (sol.qp_status == QpStatus::infeasible_input || !sol.u0.allFinite()) {
      throw abort(k, "QP rejected its input");
    }

    row.applied = sol.u0;
    row.qp_status = sol.qp_status;
    row.qp_iterations = sol.qp_iterations;
    row.kkt = sol.kkt_residual;
    row.timings = sol.timings;
    row.wrench = plant.wrench(state, row.applied);
    result.log.rows.push_back(row);

    if (k == steps) break;

    try {
      for (int i = 0; i < config.plant_substeps; ++i) {
        state = plant.step(state, row.applied, h, noise3(config.noise.rate_std));
      }
    } catch (const std::exception& e) {
      throw abort(k, std::string("plant diverged: ") + e.what());
    }
    if (config.warm_start == WarmStart::shift) solver.shift();
  }

  result.summary = summarize(result.log, config, plant.touchdown_speed());
  return result;
}

RunSummary summarize(const SimLog& log, const SimConfig& config, std::optional<double> touchdown_speed) {
  RunSummary s;
  s.scenario = std::string(to_string(config.scenario.kind));
  s.duration = config.duration;
  s.rows = static_cast<long>(log.rows.size());
  s.transient_cut = config.transient_cut;
  s.touchdown_speed = touchdown_speed;
  if (log.rows.empty()) return s;

  auto error = [](const LogRow& r) {
    return (r.state.segment<3>(idx::kPos) - r.reference.state.segment<3>(idx::kPos)).norm();
  };

  double sq = 0.0;
  long counted = 0;
  std::vector<double> totals;
  totals.reserve(log.rows.size());
  double prep = 0.0, feed = 0.0, kkt = 0.0;
  for (const LogRow& r : log.rows) {
    const double e = error(r);
    if (r.t >= config.transient_cut - 1e-9) {
      sq += e * e;
      ++counted;
      s.max_position_error = std::max(s.max_position_error, e);
    }
    totals.push_back(r.timings.total_s);
    prep += r.timings.prepare_s;
    feed += r.timings.feedback_s;
    kkt += r.kkt;
    s.kkt_max = std::max(s.kkt_max, r.kkt);
    if (r.qp_status != QpStatus::optimal) ++s.solver_failures;
    if (clamp_and_check_bounds<double>(r.applied, config.ocp.u_lb, config.ocp.u_ub).violated) ++s.bound_violations;
    s.max_quaternion_norm_error =
        std::max(s.max_quaternion_norm_error, std::abs(r.state.segment<4>(idx::kQuat).norm() - 1.0));
  }
  const double n = static_cast<double>(log.rows.size());
  s.rms_position_error = counted > 0 ? std::sqrt(sq / static_cast<double>(counted)) : 0.0;
  s.solver_time_mean = std::accumulate(totals.begin(), totals.end(), 0.0) / n;
  s.solver_time_max = *std::max_element(totals.begin(), totals.end());
  s.solver_time_p50 = percentile(totals, 50.0);
  s.solver_time_p95 = percentile(totals, 95.0);
  s.solver_time_p99 = percentile(totals, 99.0);
  s.prepare_time_mean = prep / n;
  s.feedback_time_mean = feed / n;
  s.kkt_mean = kkt / n;
  s.final_position = log.rows.back().state.segment<3>(idx::kPos);
  s.final_velocity = log.rows.back().state.segment<3>(idx::kVel);

  // Settling: first row after each reference change from which the error
  // stays inside the band until the next change.
  s.step_times = reference_change_times(config.scenario);
  for (std::size_t i = 0; i < s.step_times.size(); ++i) {
    const double t0 = s.step_times[i];
    const double t1 = i + 1 < s.step_times.size() ? s.step_times[i + 1] : std::numeric_limits<double>::infinity();
    std::optional<double> settled;
    for (const LogRow& r : log.rows) {
      if (r.t < t0 - 1e-9 || r.t >= t1 - 1e-9) continue;
      if (error(r) <= config.settle_band) {
        if (!settled) settled = r.t - t0;
      } else {
        settled.reset();
      }
    }
    s.settling_times.push_back(settled);
  }
  return s;
}

void write_csv(const SimLog& log, const std::filesystem::path& path, bool timing_columns) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open '" + path.string() + "' for writing");
  out << "t,x,y,z,qw,qx,qy,qz,vx,vy,vz,wx,wy,wz,x_d,y_d,z_d,T,wx_cmd,wy_cmd,wz_cmd,qp_status,kkt";
  if (timing_columns) out << ",t_prepare,t_feedback,t_total";
  out << "\n";
  char buf[64];
  auto num = [&](double v) {
    std::snprintf(buf, sizeof buf, "%.12g", v);
    out << buf;
  };
  for (const LogRow& r : log.rows) {
    num(r.t);
    for (int i = 0; i < kFullStateDim; ++i) {
      out << ',';
      num(r.state[i]);
    }
    for (int i = 0; i < 3; ++i) {
      out << ',';
      num(r.reference.state[idx::kPos + i]);
    }
    for (int i = 0; i < kInputDim; ++i) {
      out << ',';
      num(r.applied[i]);
    }
    out << ',' << to_string(r.qp_status) << ',';
    num(r.kkt);
    if (timing_columns) {
      out << ',';
      num(r.timings.prepare_s);
      out << ',';
      num(r.timings.feedback_s);
      out << ',';
      num(r.timings.total_s);
    }
    out << '\n';
  }
  if (!out) throw std::runtime_error("write failed for '" + path.string() + "'");
}

void write_summary(const RunSummary& s, const std::filesystem::path& path) {
  using nlohmann::json;
  auto vec3 = [](const Eigen::Vector3d& v) { return json::array({v[0], v[1], v[2]}); };
  json settling = json::array();
  for (const auto& st : s.settling_times) settling.push_back(st ? json(*st) : json(nullptr));
  const json doc = {
      {"scenario", s.scenario},
      {"duration", s.duration},
      {"rows", s.rows},
      {"transient_cut", s.transient_cut},
      {"rms_position_error", s.rms_position_error},
      {"max_position_error", s.max_position_error},
      {"step_times", s.step_times},
      {"settling_times", settling},
      {"solver_time", {{"mean", s.solver_time_mean},
                       {"max", s.solver_time_max},
                       {"p50", s.solver_time_p50},
                       {"p95", s.solver_time_p95},
                       {"p99", s.solver_time_p99},
                       {"prepare_mean", s.prepare_time_mean},
                       {"feedback_mean", s.feedback_time_mean}}},
      {"kkt_mean", s.kkt_mean},
      {"kkt_max", s.kkt_max},
      {"bound_violations", s.bound_violations},
      {"solver_failures", s.solver_failures},
      {"final_position", vec3(s.final_position)},
      {"final_velocity", vec3(s.final_velocity)},
      {"touchdown_speed", s.touchdown_speed ? json(*s.touchdown_speed) : json(nullptr)},
      {"max_quaternion_norm_error", s.max_quaternion_norm_error},
  };
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open '" + path.string() + "' for writing");
  out << doc.dump(2) << "\n";
  if (!out) throw std::runtime_error("write failed for '" + path.string() + "'");
}

void emit_outputs(const SimLog& log, const RunSummary& summary, const OutputPaths& paths, bool timing_columns) {
  write_csv(log, paths.csv, timing_columns);
  write_summary(summary, paths.summary);
}

} // namespace nano_nmpc
