#pragma once

// Reference trajectories for the built-in flight scenarios. Every scenario
// commands zero yaw (identity attitude) and the hover input.

#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "nano_nmpc/model.hpp"
#include "nano_nmpc/ocp.hpp"

namespace nano_nmpc {

enum class ScenarioKind { hover, hover_steps, takeoff_cruise_land, helix };

std::string_view to_string(ScenarioKind kind);
/// Accepts the CLI names (hover, steps, cruise, helix) and the long names.
ScenarioKind parse_scenario_kind(std::string_view name);

struct HoverScenario {
  Eigen::Vector3d position{0.0, 0.0, 1.0};
};

struct StepLevel {
  double altitude = 0.0; // m
  double dwell = 0.0;    // s; the last level holds indefinitely
};

struct HoverStepsScenario {
  Eigen::Vector2d xy{0.0, 0.0};
  std::vector<StepLevel> levels{{0.3, 1.0}, {1.0, 2.0}, {1.5, 2.0}, {0.2, 0.0}};
};

/// Vertical takeoff at A, straight cruise A -> B at constant altitude,
/// vertical landing at B. Each phase uses cubic time scaling
/// s(tau) = 3 tau^2 - 2 tau^3, so every phase starts and ends at rest.
struct CruiseScenario {
  Eigen::Vector2d start{0.0, 0.0};
  Eigen::Vector2d end{2.0, 1.0};
  double altitude = 1.0;
  double takeoff_time = 3.0;
  double cruise_time = 6.0;
  double land_time = 4.0;
};

struct HelixScenario {
  Eigen::Vector2d center{0.0, 0.0};
  double radius = 1.0;       // m
  double angular_rate = 0.5; // rad/s
  double climb_rate = 0.1;   // m/s
  double start_altitude = 0.5;
};

struct ScenarioSpec {
  ScenarioKind kind = ScenarioKind::hover;
  double duration = 20.0; // reference timeline ends here and is held
  HoverScenario hover;
  HoverStepsScenario steps;
  CruiseScenario cruise;
  HelixScenario helix;

  /// Throws ConfigError on non-positive durations or negative radius.
  void validate() const;
};

struct ReferenceSample {
  StateReduced<double> state;
  ControlInput<double> input;
};

/// Reference at time t (clamped to [0, duration]).
ReferenceSample sample(const ScenarioSpec& spec, double t, const VehicleParams<double>& params);

ReferenceSample takeoff_cruise_land(const ScenarioSpec& spec, double t, const VehicleParams<double>& params);

/// Samples at t, t + dt, ..., t + N dt (N + 1 states, N inputs).
ReferenceWindow<double> window(const ScenarioSpec& spec, double t, int horizon, double dt,
                               const VehicleParams<double>& params);

/// Times at which the position reference jumps (hover_steps) or, for the
/// other scenarios, just t = 0.
std::vector<double> reference_change_times(const ScenarioSpec& spec);

/// Plant state the scenario starts from: at rest on the ground for hover,
/// steps and cruise; at rest on the curve for the helix.
StateFull<double> default_initial_state(const ScenarioSpec& spec);

} // namespace nano_nmpc
