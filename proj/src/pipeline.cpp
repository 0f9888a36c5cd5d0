#include "freefall/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <mutex>
#include <thread>

#include "freefall/dynamics.hpp"
#include "freefall/errors.hpp"
#include "freefall/filter.hpp"
#include "freefall/langevin.hpp"

namespace freefall {

std::array<Trace, 2> synthesize_traces(const SynthesisConfig& c, std::uint64_t seed) {
  if (!(c.sample_rate > 0.0 && c.duration > 0.0 && c.mass > 0.0)) {
    throw DomainError("synthesis needs positive sample rate, duration and mass");
  }
  if (!(c.sample_rate > 2.0 * c.omega.maxCoeff() / (2.0 * constants::pi))) {
    throw DomainError("sample rate below twice the highest mode frequency");
  }
  const auto count = static_cast<std::size_t>(std::llround(c.duration * c.sample_rate));
  const double dt = 1.0 / c.sample_rate;
  std::array<std::vector<double>, 3> q;
  for (int j = 0; j < 3; ++j) {
    Rng rng = trajectory_rng(seed, static_cast<std::uint64_t>(j));
    q[j] = simulate_harmonic_exact(c.mass, c.omega(j), c.gamma(j), c.temperature(j), dt, count, rng);
  }
  std::array<Trace, 2> out;
  out[0].channel = Channel::X;
  out[1].channel = Channel::Y;
  for (int ch = 0; ch < 2; ++ch) {
    Rng rng = trajectory_rng(seed, 16 + static_cast<std::uint64_t>(ch));
    std::normal_distribution<double> normal(0.0, 1.0);
    Trace& t = out[ch];
    t.sample_rate = c.sample_rate;
    t.values.resize(count);
    for (std::size_t i = 0; i < count; ++i) {
      const double s = ch == 0 ? c.gain.x() * q[0][i] + c.gain.z() * q[2][i]
                               : c.gain.y() * q[1][i] + c.x_leak_into_y * c.gain.x() * q[0][i];
      t.values[i] = s + c.noise_sd(ch) * normal(rng);
    }
  }
  return out;
}

namespace {

PeakGuess guess_peak(const Spectrum& s, double omega, double gamma) {
  const double f = omega / (2.0 * constants::pi);
  const auto k = static_cast<std::size_t>(std::llround(f / s.resolution_bandwidth));
  const double height = s.psd.at(std::min(k, s.psd.size() - 1));
  return {omega, gamma, std::max(height * gamma / 4.0, 1e-300)};
}

}  // namespace

CalibrationReport analyze_calibration(const Trace& x, const Trace& y,
                                      const CalibrationAnalysis& a) {
  CalibrationReport rep;
  rep.psd_x = welch_psd(x, a.segment_length);
  rep.psd_y = welch_psd(y, a.segment_length);
  PeakFitOptions opt;
  opt.f_min = a.f_min;
  opt.f_max = a.f_max;
  rep.fit_x = fit_psd_peaks(rep.psd_x, {guess_peak(rep.psd_x, a.omega_guess.x(), a.gamma_guess),
                                        guess_peak(rep.psd_x, a.omega_guess.z(), a.gamma_guess)},
                            opt);
  std::vector<PeakGuess> gy{guess_peak(rep.psd_y, a.omega_guess.y(), a.gamma_guess)};
  if (a.fit_leak_peak) gy.push_back(guess_peak(rep.psd_y, a.omega_guess.x(), a.gamma_guess));
  rep.fit_y = fit_psd_peaks(rep.psd_y, gy, opt);

  const std::array<const PeakEstimate*, 3> peaks{&rep.fit_x.peaks[0], &rep.fit_y.peaks[0],
                                                 &rep.fit_x.peaks[1]};
  for (Axis ax : all_axes) {
    const int j = index(ax);
    AxisCalibration& c = rep.axes[j];
    c.axis = ax;
    c.channel = ax == Axis::y ? Channel::Y : Channel::X;
    c.peak = *peaks[j];
    c.radius = radius_from_damping(c.peak.gamma, a.pressure_pa, a.gas_temperature, a.molar_mass,
                                   a.density);
    c.mass = mass_from_radius(c.radius, a.density);
    c.volts_per_meter =
        calibrate(c.peak.area, c.mass, c.peak.omega, a.gas_temperature).volts_per_meter();
  }
  return rep;
}

double transduce(double q, Transduction kind, double saturation_length) {
  if (kind == Transduction::linear) return q;
  return saturation_length * std::sin(q / saturation_length);
}

RealizationResult realize_expansion(const RealizationConfig& c, std::size_t n, std::uint64_t seed,
                                    int threads, const ExpansionOptions& expansion) {
  if (n < 10) throw DomainError("at least 10 realizations are required");
  if (!(c.mass > 0.0 && c.omega > 0.0 && c.initial_temperature > 0.0 && c.sample_rate > 0.0)) {
    throw DomainError("realization needs positive mass, frequency, temperature and sample rate");
  }
  if (!(c.norm_window <= c.pre_window)) throw DomainError("normalization window exceeds pre window");
  const double dt = 1.0 / c.sample_rate;
  const auto n_pre = static_cast<std::size_t>(std::llround(c.pre_window * c.sample_rate));
  const auto n_norm = static_cast<std::size_t>(std::llround(c.norm_window * c.sample_rate));
  const auto n_post = static_cast<std::size_t>(std::llround(c.post_window * c.sample_rate));
  const double gamma = c.env.damping_gamma;
  const Eigen::Matrix2d fall_noise = propagate_covariance(
      Eigen::Matrix2d(Eigen::Matrix2d::Zero()), c.tau, c.mass, gamma, c.env.gas_temperature);
  GaussianState origin;
  const Eigen::Vector2d fall_mean = propagate_mean(origin, c.tau, Axis::y, c.mass, gamma, c.g);
  const double d = -fall_mean(0);

  std::vector<double> q_hat(n), p_hat(n);
  std::vector<double> sq_norm(n), sp_norm(n);
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto worker = [&]() {
    for (std::size_t i = next++; i < n; i = next++) {
      try {
        Rng rng = trajectory_rng(seed, i);
        std::normal_distribution<double> normal(0.0, 1.0);
        std::vector<double> p_pre;
        const std::vector<double> q_pre = simulate_harmonic_exact(
            c.mass, c.omega, c.feedback_gamma, c.initial_temperature, dt, n_pre, rng, nullptr, &p_pre);
        // Release from the last pre-window sample, fall, and recapture at the optimal offset.
        GaussianState release;
        release.mean << q_pre.back(), p_pre.back();
        const Eigen::Vector2d mean = propagate_mean(release, c.tau, Axis::y, c.mass, gamma, c.g);
        const Eigen::Vector2d z(normal(rng), normal(rng));
        Eigen::Matrix2d l = Eigen::Matrix2d::Zero();
        if (fall_noise(0, 0) > 0.0) {
          l(0, 0) = std::sqrt(fall_noise(0, 0));
          l(1, 0) = fall_noise(1, 0) / l(0, 0);
          l(1, 1) = std::sqrt(std::max(fall_noise(1, 1) - l(1, 0) * l(1, 0), 0.0));
        }
        Eigen::Vector2d start = mean + l * z;
        start(0) += d;
        const std::vector<double> q_post = simulate_harmonic_exact(
            c.mass, c.omega, gamma, c.env.gas_temperature, dt, n_post, rng, &start);

        auto measure = [&](const std::vector<double>& q) {
          std::vector<double> s(q.size());
          for (std::size_t k = 0; k < q.size(); ++k) {
            s[k] = transduce(q[k], c.transduction, c.saturation_length) + c.noise_sd * normal(rng);
          }
          return s;
        };
        const std::vector<double> s_pre = measure(q_pre);
        const std::vector<double> s_post = measure(q_post);
        const auto fq = bandpass_estimate(s_pre, c.sample_rate, c.omega, c.gamma_f,
                                          EstimateKind::position, Direction::forward, c.mass);
        const auto fp = bandpass_estimate(s_pre, c.sample_rate, c.omega, c.gamma_f,
                                          EstimateKind::momentum, Direction::forward, c.mass);
        double aq = 0.0, ap = 0.0;
        for (std::size_t k = n_pre - n_norm; k < n_pre; ++k) {
          aq += fq[k] * fq[k];
          ap += fp[k] * fp[k];
        }
        sq_norm[i] = aq / static_cast<double>(n_norm);
        sp_norm[i] = ap / static_cast<double>(n_norm);
        const auto bq = bandpass_estimate(s_post, c.sample_rate, c.omega, c.gamma_f,
                                          EstimateKind::position, Direction::backward, c.mass);
        const auto bp = bandpass_estimate(s_post, c.sample_rate, c.omega, c.gamma_f,
                                          EstimateKind::momentum, Direction::backward, c.mass);
        q_hat[i] = bq.front();
        p_hat[i] = bp.front();
      } catch (...) {
        std::lock_guard<std::mutex> lock(failure_mutex);
        if (!failure) failure = std::current_exception();
      }
    }
  };
  const int nthreads = std::max(1, threads);
  if (nthreads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int t = 0; t < nthreads; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  if (failure) std::rethrow_exception(failure);

  RealizationResult res;
  double mq = 0.0, mp = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    mq += sq_norm[i];
    mp += sp_norm[i];
  }
  res.q0 = std::sqrt(mq / static_cast<double>(n));
  res.p0 = std::sqrt(mp / static_cast<double>(n));
  res.q_hat = std::move(q_hat);
  res.p_hat = std::move(p_hat);
  res.expansion = ensemble_expansion(res.q_hat, res.p_hat, res.q0, res.p0, expansion);
  return res;
}

double oscillation_frequency(const std::vector<double>& values, double dt) {
  if (values.size() < 4) throw DomainError("record too short for a frequency estimate");
  double mean = 0.0;
  for (double v : values) mean += v;
  mean /= static_cast<double>(values.size());
  double first = -1.0, last = -1.0;
  std::size_t crossings = 0;
  for (std::size_t i = 1; i < values.size(); ++i) {
    const double a = values[i - 1] - mean;
    const double b = values[i] - mean;
    if (a < 0.0 && b >= 0.0) {
      const double t = (static_cast<double>(i - 1) + a / (a - b)) * dt;
      if (crossings == 0) first = t;
      last = t;
      ++crossings;
    }
  }
  if (crossings < 2) throw DomainError("fewer than two zero crossings");
  return 2.0 * constants::pi * static_cast<double>(crossings - 1) / (last - first);
}

std::vector<DuffingPoint> synthesize_duffing_points(const Eigen::Vector3d& xi, double omega0,
                                                    const std::vector<double>& rms,
                                                    const Eigen::Vector3d& fixed_mean_sq,
                                                    Axis row, double relative_noise,
                                                    std::uint64_t seed) {
  Rng rng = trajectory_rng(seed, 0);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<DuffingPoint> out;
  for (double r : rms) {
    Eigen::Vector3d msq = fixed_mean_sq;
    msq(index(row)) = r * r;
    const double w = duffing_frequency(omega0, msq, row, xi);
    out.push_back({r, w * (1.0 + relative_noise * normal(rng))});
  }
  return out;
}

}  // namespace freefall
