#pragma once

#include <stdexcept>
#include <string>

namespace nano_nmpc {

/// Non-finite or otherwise malformed numeric input.
class InvalidInput : public std::invalid_argument {
public:
  using std::invalid_argument::invalid_argument;
};

/// Input that is finite but degenerate for the requested operation
/// (zero quaternion, singular matrix).
class DegenerateInput : public std::domain_error {
public:
  using std::domain_error::domain_error;
};

class IntegrationDiverged : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

class ConfigError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Raised by the closed-loop harness when the controller or the plant fails
/// mid-run. The message carries the step index and the last plant state.
class SimulationAborted : public std::runtime_error {
public:
  SimulationAborted(const std::string& what, long step)
      : std::runtime_error(what), step_(step) {}
  long step() const noexcept { return step_; }

private:
  long step_;
};

} // namespace nano_nmpc
