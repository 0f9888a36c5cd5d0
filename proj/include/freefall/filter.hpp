#pragma once

#include <complex>
#include <vector>

namespace freefall {

enum class EstimateKind { position, momentum };
enum class Direction { forward, backward };

/// Direct-form II transposed second-order section, a0 = 1.
struct Biquad {
  double b0 = 0.0, b1 = 0.0, b2 = 0.0;
  double a1 = 0.0, a2 = 0.0;

  std::vector<double> apply(const std::vector<double>& x) const;
  /// Frequency response at f [Hz] for sample rate fs.
  std::complex<double> response(double f, double fs) const;
  /// Integral of |H|^2 over [0, fs/2] in Hz, i.e. (fs / 2) * sum h[n]^2. Requires a stable filter.
  double noise_bandwidth(double fs) const;
};

/// Bilinear discretization, prewarped at omega, of
///   position: B s / (s^2 + B s + Omega^2)
///   momentum: -B Omega / (s^2 + B s + Omega^2)
/// with B = 8 Gamma_f, itself prewarped by the slope of the frequency map at Omega. Both have
/// unit magnitude at Omega. Requires Gamma_f < Omega / 4.
Biquad design_bandpass(double omega, double gamma_f, double sample_rate, EstimateKind kind);

/// Estimated position [input units] or momentum [input units * mass * Omega].
/// Backward: time-reverse, filter, time-reverse; the momentum sign is flipped so both
/// directions share the forward phase convention.
std::vector<double> bandpass_estimate(const std::vector<double>& values, double sample_rate,
                                      double omega, double gamma_f, EstimateKind kind,
                                      Direction direction, double mass = 1.0);

/// Noise-equivalent bandwidth of the analog position prototype in Hz: B / 4. The digital
/// filter deviates by the curvature of the frequency warp; see Biquad::noise_bandwidth.
double noise_equivalent_bandwidth(double gamma_f);

struct VarianceEstimate {
  double variance = 0.0;
  double standard_error = 0.0;
};

/// Sample variance with a batch-means standard error that accounts for correlation.
VarianceEstimate variance_with_se(const std::vector<double>& values, std::size_t batches = 20);

}  // namespace freefall
