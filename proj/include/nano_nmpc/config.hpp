#pragma once

// JSON configuration with sections `vehicle`, `ocp`, `scenario` and `sim`.
// Every key is optional and overrides the scenario defaults; unknown keys
// are rejected.

#include <filesystem>

#include <json.hpp>

#include "nano_nmpc/harness.hpp"

namespace nano_nmpc {

/// Applies a parsed document on top of `config`. Throws ConfigError with the
/// offending key on unknown keys or wrongly typed values.
void apply_config(SimConfig& config, const nlohmann::json& doc);

/// Reads the file, picks the scenario kind (`kind_override` wins over the
/// file's scenario.kind) and applies the document to that kind's defaults.
SimConfig load_config(const std::filesystem::path& path, std::optional<ScenarioKind> kind_override = {});

/// Effective configuration, in the same schema apply_config reads.
nlohmann::json config_to_json(const SimConfig& config);

} // namespace nano_nmpc
