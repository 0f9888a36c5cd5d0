#include "freefall/filter.hpp"

#include <algorithm>
#include <cmath>

#include "freefall/constants.hpp"
#include "freefall/errors.hpp"

namespace freefall {

std::vector<double> Biquad::apply(const std::vector<double>& x) const {
  std::vector<double> y(x.size());
  double z1 = 0.0, z2 = 0.0;
  for (std::size_t n = 0; n < x.size(); ++n) {
    const double out = b0 * x[n] + z1;
    z1 = b1 * x[n] - a1 * out + z2;
    z2 = b2 * x[n] - a2 * out;
    y[n] = out;
  }
  return y;
}

std::complex<double> Biquad::response(double f, double fs) const {
  const std::complex<double> zi = std::polar(1.0, -2.0 * constants::pi * f / fs);
  return (b0 + b1 * zi + b2 * zi * zi) / (1.0 + a1 * zi + a2 * zi * zi);
}

double Biquad::noise_bandwidth(double fs) const {
  if (!(std::abs(a2) < 1.0 && std::abs(a1) < 1.0 + a2)) throw DomainError("filter is not stable");
  // Impulse response until its energy tail is negligible.
  double z1 = 0.0, z2 = 0.0, sum = 0.0, recent = 0.0;
  for (std::size_t n = 0;; ++n) {
    const double x = n == 0 ? 1.0 : 0.0;
    const double out = b0 * x + z1;
    z1 = b1 * x - a1 * out + z2;
    z2 = b2 * x - a2 * out;
    sum += out * out;
    recent += out * out;
    if (n % 4096 == 4095) {
      if (recent < 1e-16 * sum) break;
      recent = 0.0;
    }
  }
  return 0.5 * fs * sum;
}

Biquad design_bandpass(double omega, double gamma_f, double sample_rate, EstimateKind kind) {
  if (!(gamma_f > 0.0)) throw DomainError("filter rate must be positive");
  if (!(gamma_f < omega / 4.0)) throw DomainError("filter rate must be below Omega / 4");
  if (!(omega < constants::pi * sample_rate)) throw DomainError("Omega above the Nyquist frequency");
  // Centre frequency and bandwidth are both prewarped, so the digital passband keeps width 8 gamma_f.
  const double half = omega / (2.0 * sample_rate);
  const double k = omega / std::tan(half);
  const double b = 8.0 * gamma_f * k / (2.0 * sample_rate * std::cos(half) * std::cos(half));
  const double o2 = omega * omega;
  const double a0 = k * k + b * k + o2;
  Biquad q;
  q.a1 = (2.0 * o2 - 2.0 * k * k) / a0;
  q.a2 = (k * k - b * k + o2) / a0;
  if (kind == EstimateKind::position) {
    q.b0 = b * k / a0;
    q.b1 = 0.0;
    q.b2 = -b * k / a0;
  } else {
    const double g = -b * omega / a0;
    q.b0 = g;
    q.b1 = 2.0 * g;
    q.b2 = g;
  }
  return q;
}

std::vector<double> bandpass_estimate(const std::vector<double>& values, double sample_rate,
                                      double omega, double gamma_f, EstimateKind kind,
                                      Direction direction, double mass) {
  const Biquad filt = design_bandpass(omega, gamma_f, sample_rate, kind);
  std::vector<double> out;
  if (direction == Direction::forward) {
    out = filt.apply(values);
  } else {
    std::vector<double> rev(values.rbegin(), values.rend());
    out = filt.apply(rev);
    std::reverse(out.begin(), out.end());
    if (kind == EstimateKind::momentum) {
      for (double& v : out) v = -v;
    }
  }
  if (kind == EstimateKind::momentum) {
    for (double& v : out) v *= mass * omega;
  }
  return out;
}

double noise_equivalent_bandwidth(double gamma_f) { return 2.0 * gamma_f; }

VarianceEstimate variance_with_se(const std::vector<double>& values, std::size_t batches) {
  if (values.size() < 2 * batches || batches < 2) throw DomainError("too few samples for batch means");
  const std::size_t len = values.size() / batches;
  const std::size_t used = len * batches;
  double mean = 0.0;
  for (std::size_t i = 0; i < used; ++i) mean += values[i];
  mean /= static_cast<double>(used);
  std::vector<double> batch_var(batches, 0.0);
  double total = 0.0;
  for (std::size_t b = 0; b < batches; ++b) {
    double s = 0.0;
    for (std::size_t i = b * len; i < (b + 1) * len; ++i) s += (values[i] - mean) * (values[i] - mean);
    batch_var[b] = s / static_cast<double>(len);
    total += s;
  }
  VarianceEstimate v;
  v.variance = total / static_cast<double>(used - 1);
  double spread = 0.0;
  for (double bv : batch_var) spread += (bv - v.variance) * (bv - v.variance);
  v.standard_error = std::sqrt(spread / static_cast<double>(batches - 1) / static_cast<double>(batches));
  return v;
}

}  // namespace freefall
