#pragma once

// Closed-loop simulation: the NMPC runs on the 10-state rate-input model
// while the plant integrates the 13-state torque-driven dynamics. A
// feedback-linearizing body-rate loop turns the commanded rates into torques.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "nano_nmpc/model.hpp"
#include "nano_nmpc/ocp.hpp"
#include "nano_nmpc/qp.hpp"
#include "nano_nmpc/reference.hpp"
#include "nano_nmpc/solver.hpp"

namespace nano_nmpc {

enum class WarmStart { shift, cold };

struct NoiseConfig {
  double position_std = 0.0; // m, on the state fed to the controller
  double rate_std = 0.0;     // rad/s, on the gyro fed to the rate loop
  bool enabled() const { return position_std > 0.0 || rate_std > 0.0; }
};

struct SimConfig {
  ScenarioSpec scenario;
  VehicleParams<double> vehicle;
  OcpSpec<double> ocp;
  QpSettings qp;
  double control_rate = 10.0;             // Hz
  int plant_substeps = 10;                // plant RK4 steps per control period
  Eigen::Vector3d rate_gains{20.0, 20.0, 20.0}; // 1/s
  double duration = 20.0;                 // s
  StateFull<double> initial_state = StateFull<double>::Zero();
  std::uint64_t seed = 0;
  NoiseConfig noise;
  WarmStart warm_start = WarmStart::shift;
  bool ground_contact = true;   // z >= 0 with inelastic vertical contact
  bool motor_saturation = true; // rotor thrusts clipped at zero
  double transient_cut = 0.0;   // s; summary error statistics start here
  double settle_band = 0.05;    // m; band used for settling times
  bool reference_preview = true; // false: the current sample is held over the horizon

  /// Throws ConfigError when a field is out of range.
  void validate() const;

  long control_steps() const;
};

/// Defaults for a scenario kind: vehicle and OCP defaults, scenario at its
/// built-in parameters and the scenario's starting state.
SimConfig default_sim_config(ScenarioKind kind);

/// τ = J Kp (w_cmd - w) + w × J w.
Eigen::Vector3d rate_inner_loop(const Eigen::Vector3d& w_cmd, const Eigen::Vector3d& w_measured,
                                const VehicleParams<double>& params, const Eigen::Vector3d& gains);

/// Torque-driven 13-state plant with the rate loop, optional rotor
/// saturation and optional ground contact.
class Plant {
public:
  explicit Plant(const SimConfig& config);

  /// Wrench the rotors produce for a thrust/rate command at `state`.
  Wrench<double> wrench(const StateFull<double>& state, const ControlInput<double>& command,
                        const Eigen::Vector3d& gyro_noise = Eigen::Vector3d::Zero()) const;

  /// One RK4 step of length h with the wrench held constant over the step.
  StateFull<double> step(const StateFull<double>& state, const ControlInput<double>& command, double h,
                         const Eigen::Vector3d& gyro_noise = Eigen::Vector3d::Zero());

  /// One RK4 step with an externally given wrench (no rate loop).
  StateFull<double> step_wrench(const StateFull<double>& state, const Wrench<double>& wrench, double h);

  std::optional<double> touchdown_speed() const { return touchdown_speed_; }

private:
  VehicleParams<double> params_;
  Eigen::Vector3d gains_;
  AllocationMatrix<double> gamma_;
  Eigen::PartialPivLU<Eigen::Matrix4d> gamma_lu_;
  bool saturation_;
  bool ground_;
  bool airborne_ = false;
  std::optional<double> touchdown_speed_;
};

struct LogRow {
  double t = 0.0;
  StateFull<double> state;
  ReferenceSample reference;
  ControlInput<double> applied;
  Wrench<double> wrench; // commanded at the start of the following period
  QpStatus qp_status = QpStatus::optimal;
  int qp_iterations = 0;
  double kkt = 0.0;
  RtiTimings timings;
};

struct SimLog {
  std::vector<LogRow> rows;
};

struct RunSummary {
  std::string scenario;
  double duration = 0.0;
  long rows = 0;
  double transient_cut = 0.0;
  double rms_position_error = 0.0;
  double max_position_error = 0.0;
  std::vector<double> step_times;
  std::vector<std::optional<double>> settling_times; // per reference change
  double solver_time_mean = 0.0;
  double solver_time_max = 0.0;
  double solver_time_p50 = 0.0;
  double solver_time_p95 = 0.0;
  double solver_time_p99 = 0.0;
  double prepare_time_mean = 0.0;
  double feedback_time_mean = 0.0;
  double kkt_mean = 0.0;
  double kkt_max = 0.0;
  long bound_violations = 0;
  long solver_failures = 0; // QP iterations that did not reach optimality
  Eigen::Vector3d final_position = Eigen::Vector3d::Zero();
  Eigen::Vector3d final_velocity = Eigen::Vector3d::Zero();
  std::optional<double> touchdown_speed; // largest vertical impact speed after liftoff
  double max_quaternion_norm_error = 0.0;
};

struct SimResult {
  SimLog log;
  RunSummary summary;
};

/// Runs the closed loop. Throws SimulationAborted when the controller or the
/// plant fails; the message names the step and dumps the last plant state.
/// When `qp_dump` is set every condensed QP is written to it in plain text.
SimResult run_simulation(const SimConfig& config, std::ostream* qp_dump = nullptr);

RunSummary summarize(const SimLog& log, const SimConfig& config, std::optional<double> touchdown_speed = {});

struct OutputPaths {
  std::filesystem::path csv;
  std::filesystem::path summary;
};

void write_csv(const SimLog& log, const std::filesystem::path& path, bool timing_columns = true);
void write_summary(const RunSummary& summary, const std::filesystem::path& path);

/// Writes both files; throws std::runtime_error naming the path on I/O failure.
void emit_outputs(const SimLog& log, const RunSummary& summary, const OutputPaths& paths, bool timing_columns = true);

/// Exit criterion for the CLI: no solver failures and no bound violations.
inline bool run_ok(const RunSummary& s) { return s.solver_failures == 0 && s.bound_violations == 0; }

} // namespace nano_nmpc
