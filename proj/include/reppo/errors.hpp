#pragma once

#include <stdexcept>
#include <string>

namespace reppo {

/// Base of every error the library raises. Each subclass maps to one CLI exit code.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
  virtual int exit_code() const noexcept { return 1; }
};

/// Bad shapes, invalid hyperparameters, unknown config keys.
class ConfigError : public Error {
 public:
  using Error::Error;
  int exit_code() const noexcept override { return 2; }
};

/// Non-finite values in losses, gradients or inputs.
class NumericError : public Error {
 public:
  using Error::Error;
  int exit_code() const noexcept override { return 3; }
};

class IoError : public Error {
 public:
  using Error::Error;
  int exit_code() const noexcept override { return 4; }
};

/// Environment produced a non-finite state.
class SimulationError : public NumericError {
 public:
  SimulationError(const std::string& what, std::size_t env_index)
      : NumericError(what + " (env " + std::to_string(env_index) + ")"), env_index_(env_index) {}
  std::size_t env_index() const noexcept { return env_index_; }

 private:
  std::size_t env_index_;
};

/// Caller broke a documented precondition (e.g. unnormalized target histogram).
class ContractViolation : public Error {
 public:
  using Error::Error;
  int exit_code() const noexcept override { return 5; }
};

}  // namespace reppo
