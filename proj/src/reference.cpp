#include "nano_nmpc/reference.hpp"

#include <algorithm>
#include <cmath>

#include "nano_nmpc/errors.hpp"

namespace nano_nmpc {

namespace {

struct Cubic {
  double s;  // position fraction
  double ds; // d s / d tau
};

Cubic cubic(double tau) {
  tau = std::clamp(tau, 0.0, 1.0);
  return {3.0 * tau * tau - 2.0 * tau * tau * tau, 6.0 * tau - 6.0 * tau * tau};
}

ReferenceSample at(const Eigen::Vector3d& p, const Eigen::Vector3d& v, const VehicleParams<double>& params) {
  ReferenceSample r;
  r.state.segment<3>(idx::kPos) = p;
  r.state.segment<4>(idx::kQuat) = quat_identity<double>();
  r.state.segment<3>(idx::kVel) = v;
  r.input = hover_input(params);
  return r;
}

} // namespace

std::string_view to_string(ScenarioKind kind) {
  switch (kind) {
  case ScenarioKind::hover: return "hover";
  case ScenarioKind::hover_steps: return "steps";
  case ScenarioKind::takeoff_cruise_land: return "cruise";
  case ScenarioKind::helix: return "helix";
  }
  return "unknown";
}

ScenarioKind parse_scenario_kind(std::string_view name) {
  if (name == "hover") return ScenarioKind::hover;
  if (name == "steps" || name == "hover_steps") return ScenarioKind::hover_steps;
  if (name == "cruise" || name == "takeoff_cruise_land") return ScenarioKind::takeoff_cruise_land;
  if (name == "helix") return ScenarioKind::helix;
  throw ConfigError("unknown scenario '" + std::string(name) + "' (expected hover, steps, cruise or helix)");
}

void ScenarioSpec::validate() const {
  if (!(duration >= 0.0) || !std::isfinite(duration)) throw ConfigError("scenario.duration must be >= 0");
  switch (kind) {
  case ScenarioKind::hover:
    if (!hover.position.allFinite()) throw ConfigError("scenario.position must be finite");
    break;
  case ScenarioKind::hover_steps:
    if (steps.levels.empty()) throw ConfigError("scenario.levels must not be empty");
    for (std::size_t i = 0; i + 1 < steps.levels.size(); ++i) {
      if (!(steps.levels[i].dwell > 0.0)) throw ConfigError("scenario.levels: dwell times must be > 0");
    }
    break;
  case ScenarioKind::takeoff_cruise_land:
    if (!(cruise.takeoff_time > 0.0) || !(cruise.cruise_time > 0.0) || !(cruise.land_time > 0.0)) {
      throw ConfigError("scenario: phase durations must be > 0");
    }
    break;
  case ScenarioKind::helix:
    if (!(helix.radius >= 0.0)) throw ConfigError("scenario.radius must be >= 0");
    break;
  }
}

ReferenceSample takeoff_cruise_land(const ScenarioSpec& spec, double t, const VehicleParams<double>& params) {
  const CruiseScenario& c = spec.cruise;
  t = std::clamp(t, 0.0, spec.duration);
  const Eigen::Vector3d a(c.start.x(), c.start.y(), 0.0);
  const Eigen::Vector3d b(c.end.x(), c.end.y(), 0.0);
  const Eigen::Vector3d up(0.0, 0.0, c.altitude);
  const double t1 = c.takeoff_time;
  const double t2 = t1 + c.cruise_time;
  const double t3 = t2 + c.land_time;

  if (t < t1) {
    const Cubic s = cubic(t / c.takeoff_time);
    return at(a + s.s * up, (s.ds / c.takeoff_time) * up, params);
  }
  if (t < t2) {
    const Cubic s = cubic((t - t1) / c.cruise_time);
    return at(a + up + s.s * (b - a), (s.ds / c.cruise_time) * (b - a), params);
  }
  if (t < t3) {
    const Cubic s = cubic((t - t2) / c.land_time);
    return at(b + (1.0 - s.s) * up, -(s.ds / c.land_time) * up, params);
  }
  return at(b, Eigen::Vector3d::Zero(), params);
}

ReferenceSample sample(const ScenarioSpec& spec, double t, const VehicleParams<double>& params) {
  t = std::clamp(t, 0.0, spec.duration);
  switch (spec.kind) {
  case ScenarioKind::hover:
    return at(spec.hover.position, Eigen::Vector3d::Zero(), params);
  case ScenarioKind::hover_steps: {
    const auto& levels = spec.steps.levels;
    double end = 0.0;
    double z = levels.back().altitude;
    for (std::size_t i = 0; i + 1 < levels.size(); ++i) {
      end += levels[i].dwell;
      if (t < end) {
        z = levels[i].altitude;
        break;
      }
    }
    return at(Eigen::Vector3d(spec.steps.xy.x(), spec.steps.xy.y(), z), Eigen::Vector3d::Zero(), params);
  }
  case ScenarioKind::takeoff_cruise_land:
    return takeoff_cruise_land(spec, t, params);
  case ScenarioKind::helix: {
    const HelixScenario& h = spec.helix;
    const double phase = h.angular_rate * t;
    const Eigen::Vector3d p(h.center.x() + h.radius * std::cos(phase), h.center.y() + h.radius * std::sin(phase),
                            h.start_altitude + h.climb_rate * t);
    const Eigen::Vector3d v(-h.radius * h.angular_rate * std::sin(phase), h.radius * h.angular_rate * std::cos(phase),
                            h.climb_rate);
    return at(p, v, params);
  }
  }
  throw ConfigError("sample: unknown scenario kind");
}

ReferenceWindow<double> window(const ScenarioSpec& spec, double t, int horizon, double dt,
                               const VehicleParams<double>& params) {
  if (horizon < 1) throw InvalidInput("window: horizon must be >= 1");
  ReferenceWindow<double> w;
  w.states.reserve(horizon + 1);
  w.inputs.reserve(horizon);
  for (int k = 0; k <= horizon; ++k) {
    const ReferenceSample s = sample(spec, t + k * dt, params);
    w.states.emplace_back(s.state);
    if (k < horizon) w.inputs.emplace_back(s.input);
  }
  return w;
}

std::vector<double> reference_change_times(const ScenarioSpec& spec) {
  std::vector<double> times{0.0};
  if (spec.kind == ScenarioKind::hover_steps) {
    double t = 0.0;
    const auto& levels = spec.steps.levels;
    for (std::size_t i = 0; i + 1 < levels.size(); ++i) {
      t += levels[i].dwell;
      if (t < spec.duration && levels[i + 1].altitude != levels[i].altitude) times.push_back(t);
    }
  }
  return times;
}

StateFull<double> default_initial_state(const ScenarioSpec& spec) {
  StateFull<double> s = StateFull<double>::Zero();
  s.segment<4>(idx::kQuat) = quat_identity<double>();
  switch (spec.kind) {
  case ScenarioKind::hover:
    s.segment<2>(idx::kPos) = spec.hover.position.head<2>();
    break;
  case ScenarioKind::hover_steps:
    s.segment<2>(idx::kPos) = spec.steps.xy;
    break;
  case ScenarioKind::takeoff_cruise_land:
    s.segment<2>(idx::kPos) = spec.cruise.start;
    break;
  case ScenarioKind::helix: {
    const HelixScenario& h = spec.helix;
    s.segment<3>(idx::kPos) = Eigen::Vector3d(h.center.x() + h.radius, h.center.y(), h.start_altitude);
    break;
  }
  }
  return s;
}

} // namespace nano_nmpc
