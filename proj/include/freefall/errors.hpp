#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace freefall {

/// Raised when an argument lies outside the physical domain of an operation.
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// Numerical integration did not reach the requested tolerance.
/// Carries the best estimate obtained so far.
class IntegrationError : public std::runtime_error {
 public:
  IntegrationError(const std::string& what, double estimate, double error_estimate)
      : std::runtime_error(what), estimate_(estimate), error_estimate_(error_estimate) {}
  double estimate() const noexcept { return estimate_; }
  double error_estimate() const noexcept { return error_estimate_; }

 private:
  double estimate_;
  double error_estimate_;
};

/// Stochastic integration produced a non-finite state.
class SimulationError : public std::runtime_error {
 public:
  SimulationError(const std::string& what, std::size_t step)
      : std::runtime_error(what + " (step " + std::to_string(step) + ")"), step_(step) {}
  std::size_t step() const noexcept { return step_; }

 private:
  std::size_t step_;
};

/// Nonlinear least squares failed to converge.
class FitError : public std::runtime_error {
 public:
  FitError(const std::string& what, double residual_norm, int iterations)
      : std::runtime_error(what + " (residual " + std::to_string(residual_norm) + " after " +
                           std::to_string(iterations) + " iterations)"),
        residual_norm_(residual_norm),
        iterations_(iterations) {}
  double residual_norm() const noexcept { return residual_norm_; }
  int iterations() const noexcept { return iterations_; }

 private:
  double residual_norm_;
  int iterations_;
};

}  // namespace freefall
