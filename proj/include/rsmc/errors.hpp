#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace rsmc {

/// Invalid dimensions, parameters or configuration values.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// The power integral of a likelihood family has no closed form.
class NotClosedForm : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// A numerical step failed (non-PD innovation covariance, singular solve, ...).
class NumericalError : public std::runtime_error {
 public:
  NumericalError(const std::string& what, std::size_t step)
      : std::runtime_error(what + " at step " + std::to_string(step)), step_(step) {}
  explicit NumericalError(const std::string& what) : std::runtime_error(what), step_(0) {}

  std::size_t step() const noexcept { return step_; }

 private:
  std::size_t step_;
};

/// Every particle weight is zero (all log-weights are -inf or NaN).
class DegenerateWeights : public std::runtime_error {
 public:
  explicit DegenerateWeights(std::size_t step)
      : std::runtime_error("all particle weights vanished at step " + std::to_string(step)),
        step_(step) {}

  std::size_t step() const noexcept { return step_; }

 private:
  std::size_t step_;
};

/// FFBS found no ancestor compatible with the state drawn at the next step.
class DegenerateBackwardKernel : public std::runtime_error {
 public:
  explicit DegenerateBackwardKernel(std::size_t step)
      : std::runtime_error("backward kernel weights vanished at step " + std::to_string(step)),
        step_(step) {}

  std::size_t step() const noexcept { return step_; }

 private:
  std::size_t step_;
};

}  // namespace rsmc
