#pragma once

#include <stdexcept>
#include <string>

namespace dtsync {

// Raised when an argument violates a documented precondition.
class InvalidParameter : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// A linear system or iterative evaluation could not produce a solution.
class SolverFailure : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class NonConvergence : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class TrainingFailure : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Configuration parse or validation error; the message names the parameter.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace dtsync
