#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace ktune {

// Every failure raised by the library derives from Error so the CLI can map
// each class onto its own exit status.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Bad argument, shape mismatch or broken precondition.
class InvalidArgument : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

// Non-finite value produced while integrating or differentiating.
class NumericalError : public Error {
 public:
  NumericalError(const std::string& what, std::ptrdiff_t step = -1)
      : Error(what), step_(step) {}

  // Euler step at which the blow-up was detected, -1 when not step related.
  std::ptrdiff_t step() const noexcept { return step_; }

 private:
  std::ptrdiff_t step_;
};

class ConvergenceError : public Error {
 public:
  ConvergenceError(const std::string& what, double final_value)
      : Error(what), final_value_(final_value) {}

  double final_value() const noexcept { return final_value_; }

 private:
  double final_value_;
};

// An endpoint Jacobian or residual was computed for another control.
class StaleJacobian : public Error {
 public:
  using Error::Error;
};

}  // namespace ktune
