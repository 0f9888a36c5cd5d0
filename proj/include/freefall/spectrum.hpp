#pragma once

#include <cstddef>
#include <string>
#include <vector>

namespace freefall {

enum class Channel { X, Y };

std::string channel_name(Channel c);
Channel parse_channel(const std::string& name);

/// Uniformly sampled record. `markers` are sample indices delimiting protocol phases.
struct Trace {
  double sample_rate = 0.0;  // Hz
  std::vector<double> values;
  Channel channel = Channel::Y;
  std::vector<std::size_t> markers;

  double duration() const { return sample_rate > 0.0 ? values.size() / sample_rate : 0.0; }
  void validate() const;
};

/// One-sided power spectral density.
struct Spectrum {
  std::vector<double> frequencies;  // Hz
  std::vector<double> psd;          // units^2 / Hz
  double resolution_bandwidth = 0.0;
  std::size_t averages = 0;
  /// 1 + 2 sum_j |rho_j|^2 over the window's neighbouring-bin correlations rho_j. Fits that
  /// treat bins as independent scale their parameter covariance by this.
  double bin_correlation = 1.0;

  /// Sum of psd * df over frequencies in [f_lo, f_hi].
  double integrate(double f_lo, double f_hi) const;
  double integrate() const;
};

enum class Window { hann, rectangular };

std::string window_name(Window w);
Window parse_window(const std::string& name);

/// Welch estimate: mean-removed windowed segments, averaged periodograms, normalized so the
/// integral equals the variance.
Spectrum welch_psd(const std::vector<double>& values, double sample_rate,
                   std::size_t segment_length, double overlap = 0.5, Window window = Window::hann);
Spectrum welch_psd(const Trace& trace, std::size_t segment_length, double overlap = 0.5,
                   Window window = Window::hann);

}  // namespace freefall
