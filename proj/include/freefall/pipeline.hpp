#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include <Eigen/Core>

#include "freefall/calibration.hpp"
#include "freefall/duffing.hpp"
#include "freefall/expansion.hpp"
#include "freefall/peak_fit.hpp"
#include "freefall/physics.hpp"
#include "freefall/spectrum.hpp"

namespace freefall {

/// Thermal detector record: X = c_x q_x + c_z q_z, Y = c_y q_y + leak * c_x q_x, plus white noise.
struct SynthesisConfig {
  double sample_rate = 1.0e6;  // Hz
  double duration = 1.0;       // s
  double mass = 0.0;
  Eigen::Vector3d omega = Eigen::Vector3d::Zero();        // rad/s
  Eigen::Vector3d gamma = Eigen::Vector3d::Zero();        // rad/s
  Eigen::Vector3d temperature = Eigen::Vector3d::Zero();  // K, per mode
  Eigen::Vector3d gain = Eigen::Vector3d::Zero();         // V/m
  double x_leak_into_y = 0.0;
  Eigen::Vector2d noise_sd = Eigen::Vector2d::Zero();     // V rms per channel (X, Y)
};

/// Channels X and Y. Modes come from exact Ornstein-Uhlenbeck paths, one stream per mode.
std::array<Trace, 2> synthesize_traces(const SynthesisConfig& config, std::uint64_t seed);

struct AxisCalibration {
  Axis axis = Axis::x;
  Channel channel = Channel::X;
  PeakEstimate peak;
  double volts_per_meter = 0.0;
  double radius = 0.0;
  double mass = 0.0;
};

struct CalibrationReport {
  std::array<AxisCalibration, 3> axes;
  PeakFit fit_x;  // X channel: x, z
  PeakFit fit_y;  // Y channel: x leak, y
  Spectrum psd_x;
  Spectrum psd_y;
};

struct CalibrationAnalysis {
  Eigen::Vector3d omega_guess = Eigen::Vector3d::Zero();  // rad/s
  double gamma_guess = 0.0;                                // rad/s
  double pressure_pa = 0.0;
  double gas_temperature = 300.0;
  double molar_mass = constants::molar_mass_air;
  double density = constants::density_silica;
  std::size_t segment_length = 1 << 14;
  double f_min = 5.0e3;
  double f_max = 300.0e3;
  bool fit_leak_peak = true;
};

/// PSD, joint peak fits per channel, radius and mass from each linewidth, equipartition gain
/// from each peak area with that axis' mass.
CalibrationReport analyze_calibration(const Trace& x, const Trace& y,
                                      const CalibrationAnalysis& analysis);

enum class Transduction { linear, saturating };

/// One-axis (y) trap-to-trap realization seen through the detector and bandpass estimator.
struct RealizationConfig {
  double mass = 0.0;
  double omega = 0.0;               // trapped y frequency, rad/s
  double initial_temperature = 0.0; // feedback-cooled T0, K
  double feedback_gamma = 0.0;      // linewidth in the cooled pre-fall window, rad/s
  EnvironmentParams env;            // gas during the fall and after recapture
  double tau = 0.0;
  double sample_rate = 0.95e6;
  double pre_window = 2.0e-3;
  double norm_window = 1.0e-3;      // final part of the pre window used for q0, p0
  double post_window = 1.0e-3;
  double gamma_f = 2.0 * constants::pi * 500.0;
  Transduction transduction = Transduction::linear;
  double saturation_length = 1064e-9 / (2.0 * constants::pi);  // L in s = L sin(q / L)
  double noise_sd = 0.0;            // detector noise in meters
  double g = constants::g_default;
};

struct RealizationResult {
  std::vector<double> q_hat;  // backward estimates at recapture
  std::vector<double> p_hat;
  double q0 = 0.0;            // rms of forward estimates over the normalization window
  double p0 = 0.0;
  ExpansionEstimate expansion;
};

/// Detector map s(q): identity or L sin(q / L).
double transduce(double q, Transduction kind, double saturation_length);

RealizationResult realize_expansion(const RealizationConfig& config, std::size_t n,
                                    std::uint64_t seed, int threads = 1,
                                    const ExpansionOptions& expansion = {});

/// Angular frequency from linearly interpolated upward zero crossings of a mean-removed record.
double oscillation_frequency(const std::vector<double>& values, double dt);

/// Frequencies from the Duffing law at each rms amplitude, with relative Gaussian noise.
std::vector<DuffingPoint> synthesize_duffing_points(const Eigen::Vector3d& xi, double omega0,
                                                    const std::vector<double>& rms,
                                                    const Eigen::Vector3d& fixed_mean_sq,
                                                    Axis row, double relative_noise,
                                                    std::uint64_t seed);

}  // namespace freefall
