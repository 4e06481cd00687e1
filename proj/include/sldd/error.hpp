#pragma once

#include <stdexcept>
#include <string>

namespace sldd {

// Base of all library errors. The CLI maps the subclasses onto exit codes.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Invalid configuration, arguments or mismatched dimensions (exit code 2).
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Non-finite values, divergence, exhausted searches (exit code 3).
class NumericError : public Error {
 public:
  using Error::Error;
};

// Unreadable or malformed files (exit code 4).
class IoError : public Error {
 public:
  using Error::Error;
};

class DivergenceError : public NumericError {
 public:
  DivergenceError(const std::string& what, double last_finite_objective, long iteration)
      : NumericError(what), last_objective_(last_finite_objective), iteration_(iteration) {}

  double last_objective() const noexcept { return last_objective_; }
  long iteration() const noexcept { return iteration_; }

 private:
  double last_objective_;
  long iteration_;
};

}  // namespace sldd
