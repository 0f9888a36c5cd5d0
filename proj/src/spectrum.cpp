#include "freefall/spectrum.hpp"

#include <algorithm>
#include <cmath>
#include <complex>

#include <unsupported/Eigen/FFT>

#include "freefall/constants.hpp"
#include "freefall/errors.hpp"

namespace freefall {

std::string channel_name(Channel c) { return c == Channel::X ? "X" : "Y"; }

Channel parse_channel(const std::string& name) {
  if (name == "X" || name == "x") return Channel::X;
  if (name == "Y" || name == "y") return Channel::Y;
  throw DomainError("unknown channel '" + name + "'");
}

std::string window_name(Window w) { return w == Window::hann ? "hann" : "rectangular"; }

Window parse_window(const std::string& name) {
  if (name == "hann") return Window::hann;
  if (name == "rectangular" || name == "boxcar") return Window::rectangular;
  throw DomainError("unknown window '" + name + "'");
}

void Trace::validate() const {
  if (!(sample_rate > 0.0)) throw DomainError("sample rate must be positive");
  if (!std::is_sorted(markers.begin(), markers.end())) throw DomainError("markers must be ordered");
  if (!markers.empty() && markers.back() > values.size()) {
    throw DomainError("marker beyond the end of the trace");
  }
}

double Spectrum::integrate(double f_lo, double f_hi) const {
  double sum = 0.0;
  for (std::size_t i = 0; i < psd.size(); ++i) {
    if (frequencies[i] >= f_lo && frequencies[i] <= f_hi) sum += psd[i];
  }
  return sum * resolution_bandwidth;
}

double Spectrum::integrate() const {
  double sum = 0.0;
  for (double v : psd) sum += v;
  return sum * resolution_bandwidth;
}

Spectrum welch_psd(const std::vector<double>& values, double sample_rate,
                   std::size_t segment_length, double overlap, Window window) {
  if (!(sample_rate > 0.0)) throw DomainError("sample rate must be positive");
  if (segment_length < 8) throw DomainError("segment length must be at least 8 samples");
  if (segment_length > values.size()) throw DomainError("trace shorter than one segment");
  if (!(overlap >= 0.0 && overlap < 1.0)) throw DomainError("overlap must lie in [0, 1)");

  const std::size_t n = segment_length;
  std::vector<double> w(n, 1.0);
  if (window == Window::hann) {
    for (std::size_t i = 0; i < n; ++i) {
      w[i] = 0.5 - 0.5 * std::cos(2.0 * constants::pi * static_cast<double>(i) / static_cast<double>(n));
    }
  }
  double w2 = 0.0;
  for (double v : w) w2 += v * v;

  const auto hop = std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(n * (1.0 - overlap))));
  const std::size_t bins = n / 2 + 1;
  std::vector<double> acc(bins, 0.0);
  Eigen::FFT<double> fft;
  std::vector<double> seg(n);
  std::vector<std::complex<double>> spec;
  std::size_t count = 0;
  for (std::size_t start = 0; start + n <= values.size(); start += hop) {
    double mean = 0.0;
    for (std::size_t i = 0; i < n; ++i) mean += values[start + i];
    mean /= static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i) seg[i] = (values[start + i] - mean) * w[i];
    fft.fwd(spec, seg);
    for (std::size_t k = 0; k < bins; ++k) acc[k] += std::norm(spec[k]);
    ++count;
  }

  Spectrum s;
  s.averages = count;
  for (std::size_t j = 1; j <= 8 && j < n; ++j) {
    std::complex<double> rho = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      rho += w[i] * w[i] * std::polar(1.0, -2.0 * constants::pi * static_cast<double>(j * i) / static_cast<double>(n));
    }
    s.bin_correlation += 2.0 * std::norm(rho / w2);
  }
  s.resolution_bandwidth = sample_rate / static_cast<double>(n);
  s.frequencies.resize(bins);
  s.psd.resize(bins);
  const double scale = 1.0 / (sample_rate * w2 * static_cast<double>(count));
  for (std::size_t k = 0; k < bins; ++k) {
    const bool edge = k == 0 || (n % 2 == 0 && k == n / 2);
    s.frequencies[k] = static_cast<double>(k) * s.resolution_bandwidth;
    s.psd[k] = (edge ? 1.0 : 2.0) * acc[k] * scale;
  }
  return s;
}

Spectrum welch_psd(const Trace& trace, std::size_t segment_length, double overlap, Window window) {
  trace.validate();
  return welch_psd(trace.values, trace.sample_rate, segment_length, overlap, window);
}

}  // namespace freefall
