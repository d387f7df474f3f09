#pragma once

#include <stdexcept>
#include <string>

namespace uavsac {

// Invalid scenario/agent configuration. `field()` names the offending key.
class ConfigError : public std::invalid_argument {
 public:
  ConfigError(std::string field, const std::string& what)
      : std::invalid_argument(field + ": " + what), field_(std::move(field)) {}
  const std::string& field() const noexcept { return field_; }

 private:
  std::string field_;
};

// Operation called in the wrong lifecycle state (e.g. step after done).
class StateError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

// NaN/Inf detected in a parameter, gradient or loss.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Shape or layer-layout mismatch between networks or inputs.
class TopologyError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Replay buffer holds fewer items than requested.
class NotReadyError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Checkpoint and scenario disagree on observation layout, or run dirs mix scenarios.
class CompatibilityError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace uavsac
