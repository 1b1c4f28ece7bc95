#include "nano_nmpc/config.hpp"

#include <fstream>
#include <functional>
#include <map>
#include <string>

#include "nano_nmpc/errors.hpp"

namespace nano_nmpc {

using nlohmann::json;

namespace {

using Handlers = std::map<std::string, std::function<void(const json&)>>;

/// Dispatches every member of `obj` to its handler; rejects unknown members
/// and turns type errors into ConfigError naming the key.
void visit(const json& obj, const std::string& path, const Handlers& handlers) {
  if (!obj.is_object()) throw ConfigError("'" + path + "' must be an object");
  for (const auto& [key, value] : obj.items()) {
    const std::string full = path.empty() ? key : path + "." + key;
    const auto it = handlers.find(key);
    if (it == handlers.end()) throw ConfigError("unknown config key '" + full + "'");
    try {
      it->second(value);
    } catch (const json::exception& e) {
      throw ConfigError("bad value for '" + full + "': " + e.what());
    }
  }
}

double number(const json& v) {
  if (!v.is_number()) throw ConfigError("expected a number, got " + v.dump());
  return v.get<double>();
}

Eigen::VectorXd vector(const json& v, Eigen::Index size) {
  if (!v.is_array() || static_cast<Eigen::Index>(v.size()) != size) {
    throw ConfigError("expected an array of " + std::to_string(size) + " numbers, got " + v.dump());
  }
  Eigen::VectorXd out(size);
  for (Eigen::Index i = 0; i < size; ++i) out[i] = number(v[static_cast<std::size_t>(i)]);
  return out;
}

json to_array(const Eigen::VectorXd& v) {
  json a = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v[i]);
  return a;
}

void apply_vehicle(VehicleParams<double>& p, const json& doc) {
  visit(doc, "vehicle",
        {{"mass", [&](const json& v) { p.mass = number(v); }},
         {"inertia", [&](const json& v) { p.inertia = vector(v, 3); }},
         {"arm_length", [&](const json& v) { p.arm_length = number(v); }},
         {"thrust_coefficient", [&](const json& v) { p.thrust_coefficient = number(v); }},
         {"drag_coefficient", [&](const json& v) { p.drag_coefficient = number(v); }},
         {"gravity", [&](const json& v) { p.gravity = number(v); }}});
}

void apply_ocp(SimConfig& c, const json& doc) {
  visit(doc, "ocp",
        {{"horizon", [&](const json& v) { c.ocp.horizon = v.get<int>(); }},
         {"dt", [&](const json& v) { c.ocp.dt = number(v); }},
         {"integrator_steps", [&](const json& v) { c.ocp.integrator.n_steps = v.get<int>(); }},
         {"stage_weights", [&](const json& v) { c.ocp.stage_weight = vector(v, kStateDim + kInputDim); }},
         {"terminal_weights", [&](const json& v) { c.ocp.terminal_weight = vector(v, kStateDim); }},
         {"u_min", [&](const json& v) { c.ocp.u_lb = vector(v, kInputDim); }},
         {"u_max", [&](const json& v) { c.ocp.u_ub = vector(v, kInputDim); }},
         {"qp", [&](const json& v) {
            visit(v, "ocp.qp",
                  {{"max_iter", [&](const json& x) { c.qp.max_iter = x.get<int>(); }},
                   {"tolerance", [&](const json& x) { c.qp.tolerance = number(x); }},
                   {"polish", [&](const json& x) { c.qp.polish = x.get<bool>(); }}});
          }}});
}

void apply_scenario(ScenarioSpec& s, const json& doc) {
  visit(doc, "scenario",
        {{"kind", [&](const json& v) { s.kind = parse_scenario_kind(v.get<std::string>()); }},
         {"duration", [&](const json& v) { s.duration = number(v); }},
         {"position", [&](const json& v) { s.hover.position = vector(v, 3); }},
         {"xy", [&](const json& v) { s.steps.xy = vector(v, 2); }},
         {"levels", [&](const json& v) {
            if (!v.is_array() || v.empty()) throw ConfigError("scenario.levels must be a non-empty array");
            s.steps.levels.clear();
            for (const json& level : v) {
              StepLevel l;
              visit(level, "scenario.levels[]",
                    {{"altitude", [&](const json& x) { l.altitude = number(x); }},
                     {"dwell", [&](const json& x) { l.dwell = number(x); }}});
              s.steps.levels.push_back(l);
            }
          }},
         {"start", [&](const json& v) { s.cruise.start = vector(v, 2); }},
         {"end", [&](const json& v) { s.cruise.end = vector(v, 2); }},
         {"altitude", [&](const json& v) { s.cruise.altitude = number(v); }},
         {"takeoff_time", [&](const json& v) { s.cruise.takeoff_time = number(v); }},
         {"cruise_time", [&](const json& v) { s.cruise.cruise_time = number(v); }},
         {"land_time", [&](const json& v) { s.cruise.land_time = number(v); }},
         {"center", [&](const json& v) { s.helix.center = vector(v, 2); }},
         {"radius", [&](const json& v) { s.helix.radius = number(v); }},
         {"angular_rate", [&](const json& v) { s.helix.angular_rate = number(v); }},
         {"climb_rate", [&](const json& v) { s.helix.climb_rate = number(v); }},
         {"start_altitude", [&](const json& v) { s.helix.start_altitude = number(v); }}});
}

void apply_initial_state(StateFull<double>& s, const json& doc) {
  visit(doc, "sim.initial_state",
        {{"position", [&](const json& v) { s.segment<3>(idx::kPos) = vector(v, 3); }},
         {"quaternion", [&](const json& v) { s.segment<4>(idx::kQuat) = vector(v, 4); }},
         {"velocity", [&](const json& v) { s.segment<3>(idx::kVel) = vector(v, 3); }},
         {"rates", [&](const json& v) { s.segment<3>(idx::kRate) = vector(v, 3); }}});
}

void apply_sim(SimConfig& c, const json& doc) {
  visit(doc, "sim",
        {{"control_rate", [&](const json& v) { c.control_rate = number(v); }},
         {"plant_substeps", [&](const json& v) { c.plant_substeps = v.get<int>(); }},
         {"rate_gains", [&](const json& v) { c.rate_gains = vector(v, 3); }},
         {"duration", [&](const json& v) { c.duration = number(v); }},
         {"initial_state", [&](const json& v) { apply_initial_state(c.initial_state, v); }},
         {"seed", [&](const json& v) { c.seed = v.get<std::uint64_t>(); }},
         {"noise", [&](const json& v) {
            visit(v, "sim.noise",
                  {{"position_std", [&](const json& x) { c.noise.position_std = number(x); }},
                   {"rate_std", [&](const json& x) { c.noise.rate_std = number(x); }}});
          }},
         {"warm_start", [&](const json& v) {
            const auto mode = v.get<std::string>();
            if (mode == "shift") c.warm_start = WarmStart::shift;
            else if (mode == "cold") c.warm_start = WarmStart::cold;
            else throw ConfigError("sim.warm_start must be 'shift' or 'cold'");
          }},
         {"ground_contact", [&](const json& v) { c.ground_contact = v.get<bool>(); }},
         {"motor_saturation", [&](const json& v) { c.motor_saturation = v.get<bool>(); }},
         {"transient_cut", [&](const json& v) { c.transient_cut = number(v); }},
         {"settle_band", [&](const json& v) { c.settle_band = number(v); }},
         {"reference_preview", [&](const json& v) { c.reference_preview = v.get<bool>(); }}});
}

} // namespace

void apply_config(SimConfig& config, const json& doc) {
  visit(doc, "", {{"vehicle", [](const json&) {}},
                  {"ocp", [](const json&) {}},
                  {"scenario", [](const json&) {}},
                  {"sim", [](const json&) {}}});

  // Defaults that derive from other sections are re-derived before the
  // explicit overrides of their own section are applied.
  if (doc.contains("vehicle")) {
    apply_vehicle(config.vehicle, doc["vehicle"]);
    const auto derived = default_quadrotor_ocp(config.vehicle);
    config.ocp.u_lb = derived.u_lb;
    config.ocp.u_ub = derived.u_ub;
  }
  if (doc.contains("ocp")) apply_ocp(config, doc["ocp"]);
  bool scenario_duration = false;
  if (doc.contains("scenario")) {
    apply_scenario(config.scenario, doc["scenario"]);
    scenario_duration = doc["scenario"].contains("duration");
    config.initial_state = default_initial_state(config.scenario);
  }
  if (doc.contains("sim")) apply_sim(config, doc["sim"]);
  if (!scenario_duration) config.scenario.duration = config.duration;
}

SimConfig load_config(const std::filesystem::path& path, std::optional<ScenarioKind> kind_override) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path.string() + "'");
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("'" + path.string() + "': " + e.what());
  }
  ScenarioKind kind = ScenarioKind::hover;
  if (doc.is_object() && doc.contains("scenario") && doc["scenario"].is_object() &&
      doc["scenario"].contains("kind")) {
    kind = parse_scenario_kind(doc["scenario"]["kind"].get<std::string>());
  }
  if (kind_override) {
    kind = *kind_override;
    if (doc.contains("scenario") && doc["scenario"].is_object()) doc["scenario"].erase("kind");
  }
  SimConfig config = default_sim_config(kind);
  apply_config(config, doc);
  return config;
}

json config_to_json(const SimConfig& c) {
  json levels = json::array();
  for (const auto& l : c.scenario.steps.levels) levels.push_back({{"altitude", l.altitude}, {"dwell", l.dwell}});
  const auto& s = c.scenario;
  return {
      {"vehicle",
       {{"mass", c.vehicle.mass},
        {"inertia", to_array(c.vehicle.inertia)},
        {"arm_length", c.vehicle.arm_length},
        {"thrust_coefficient", c.vehicle.thrust_coefficient},
        {"drag_coefficient", c.vehicle.drag_coefficient},
        {"gravity", c.vehicle.gravity}}},
      {"ocp",
       {{"horizon", c.ocp.horizon},
        {"dt", c.ocp.dt},
        {"integrator_steps", c.ocp.integrator.n_steps},
        {"stage_weights", to_array(c.ocp.stage_weight)},
        {"terminal_weights", to_array(c.ocp.terminal_weight)},
        {"u_min", to_array(c.ocp.u_lb)},
        {"u_max", to_array(c.ocp.u_ub)},
        {"qp", {{"max_iter", c.qp.max_iter}, {"tolerance", c.qp.tolerance}, {"polish", c.qp.polish}}}}},
      {"scenario",
       {{"kind", std::string(to_string(s.kind))},
        {"duration", s.duration},
        {"position", to_array(s.hover.position)},
        {"xy", to_array(s.steps.xy)},
        {"levels", levels},
        {"start", to_array(s.cruise.start)},
        {"end", to_array(s.cruise.end)},
        {"altitude", s.cruise.altitude},
        {"takeoff_time", s.cruise.takeoff_time},
        {"cruise_time", s.cruise.cruise_time},
        {"land_time", s.cruise.land_time},
        {"center", to_array(s.helix.center)},
        {"radius", s.helix.radius},
        {"angular_rate", s.helix.angular_rate},
        {"climb_rate", s.helix.climb_rate},
        {"start_altitude", s.helix.start_altitude}}},
      {"sim",
       {{"control_rate", c.control_rate},
        {"plant_substeps", c.plant_substeps},
        {"rate_gains", to_array(c.rate_gains)},
        {"duration", c.duration},
        {"initial_state",
         {{"position", to_array(c.initial_state.segment<3>(idx::kPos))},
          {"quaternion", to_array(c.initial_state.segment<4>(idx::kQuat))},
          {"velocity", to_array(c.initial_state.segment<3>(idx::kVel))},
          {"rates", to_array(c.initial_state.segment<3>(idx::kRate))}}},
        {"seed", c.seed},
        {"noise", {{"position_std", c.noise.position_std}, {"rate_std", c.noise.rate_std}}},
        {"warm_start", c.warm_start == WarmStart::shift ? "shift" : "cold"},
        {"ground_contact", c.ground_contact},
        {"motor_saturation", c.motor_saturation},
        {"transient_cut", c.transient_cut},
        {"settle_band", c.settle_band},
        {"reference_preview", c.reference_preview}}},
  };
}

} // namespace nano_nmpc
