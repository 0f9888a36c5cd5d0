#pragma once

#include <limits>
#include <vector>

#include <Eigen/Core>

#include "freefall/spectrum.hpp"

namespace freefall {

/// Damped-oscillator line in frequency, normalized to unit area over f in [0, inf):
/// 4 gamma Omega^2 / ((Omega^2 - w^2)^2 + gamma^2 w^2), w = 2 pi f.
double oscillator_line(double f, double omega, double gamma);

struct PeakGuess {
  double omega = 0.0;  // rad/s
  double gamma = 0.0;  // rad/s
  double area = 0.0;   // units^2
};

struct PeakEstimate {
  double omega = 0.0;
  double gamma = 0.0;
  double area = 0.0;
  double omega_se = 0.0;
  double gamma_se = 0.0;
  double area_se = 0.0;
};

struct PeakFit {
  std::vector<PeakEstimate> peaks;
  double floor = 0.0;
  double floor_se = 0.0;
  /// Covariance of the internal parameters (Omega/Omega_guess, ln gamma, ln area per peak, then
  /// floor/floor_guess).
  Eigen::MatrixXd covariance;
  double reduced_chi2 = 0.0;
  int iterations = 0;
  double f_min = 0.0;
  double f_max = 0.0;

  double model(double f) const;
};

struct PeakFitOptions {
  double f_min = 0.0;
  double f_max = std::numeric_limits<double>::infinity();
  bool fit_floor = true;
  int max_iterations = 200;
};

/// Joint fit of a flat floor plus one oscillator line per guess, by maximum Whittle likelihood
/// (each bin exponential-like about the model). Standard errors scale with the observed
/// relative scatter and the spectrum's bin correlation.
PeakFit fit_psd_peaks(const Spectrum& spectrum, const std::vector<PeakGuess>& guesses,
                      const PeakFitOptions& options = {});

}  // namespace freefall
