#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "freefall/physics.hpp"

namespace freefall {

/// U0 = 4 R^3 P / (c w_x w_y) * (eps - 1) / (eps + 2).
double trap_depth(const ParticleParams& particle, const TrapParams& trap);

/// Copy of `trap` with `depth` set from the optics.
TrapParams with_derived_depth(TrapParams trap, const ParticleParams& particle);

// Position arguments named `focus_y` place the focus at (0, focus_y, 0). Protocol-level
// functions take `displacement` d as a distance along the fall, i.e. focus_y = -d.

/// Normalized well profile exp(-2x^2/wx^2 - 2(y-f)^2/wy^2) / (1 + z^2/zR^2), in (0, 1].
double well_profile(const Eigen::Vector3d& q, const TrapParams& trap, double focus_y);

/// U(q) = U0 [1 - well_profile(q)]: zero at the focus, U0 far away.
double optical_potential(const Eigen::Vector3d& q, const TrapParams& trap, double focus_y);

/// Force -grad U.
Eigen::Vector3d optical_force(const Eigen::Vector3d& q, const TrapParams& trap, double focus_y);

/// Scaled complementary error function e^{x^2} erfc(x), stable for large x.
double erfcx(double x);

struct OverlapIntegrals {
  double I_x = 1.0;
  double I_y = 1.0;
  double I_z = 1.0;
};

/// Gaussian averages of the separable well factors for position variances `var_q` (x, y, z)
/// and a mean offset `delta_y` between the particle and the focus along y.
OverlapIntegrals overlap_integrals(const Eigen::Vector3d& var_q, const TrapParams& trap,
                                   double delta_y);

struct EnergyBreakdown {
  double kinetic = 0.0;    // J
  double potential = 0.0;  // J
  double total = 0.0;      // J
  double normalized = 0.0; // total / (k_B T0), with k_B T0 = m Omega_y^2 V_q0
};

/// Mean y energy at recapture: <p_y>^2/2m + V_p/2m + U0 (1 - I_y), with
/// Delta y = d + <q_y>(tau) (= d - g tau^2 / 2 without damping).
EnergyBreakdown mean_energy_y(const ParticleParams& particle, const GaussianState& state0_y,
                              const TrapParams& trap, double tau, double displacement,
                              const EnvironmentParams& env, double g = constants::g_default);

/// d = g tau^2 / 2.
double optimal_displacement(double tau, double g = constants::g_default);
/// AOM detuning reaching the optimal displacement, Delta f = d / c_f.
double optimal_detuning(double tau, double cf_m_per_hz, double g = constants::g_default);

/// U0 / (m g w_y).
double gravity_ratio(const ParticleParams& particle, const TrapParams& trap,
                     double g = constants::g_default);

enum class RecaptureMode {
  conditional,  // p_y given q_y from the correlated Gaussian, two-sided barrier
  marginal,     // marginal p_y statistics, one-sided: 1/2 [1 + erf((p_y + p_u)/sqrt(2 V_p))]
};

enum class IntegrationMethod { gauss_hermite, quasi_monte_carlo };

struct RecaptureOptions {
  RecaptureMode mode = RecaptureMode::conditional;
  int order = 32;
  double tolerance = 1e-4;
  std::uint64_t qmc_seed = 0x5eed;
  /// Largest ratio of x/z kinetic energy to U0 accepted on the analytic path.
  double transverse_kinetic_limit = 1e-2;
};

struct RecaptureReport {
  double kinetic = 0.0;
  double potential = 0.0;
  double mean_energy = 0.0;
  double recapture_probability = 1.0;
  double loss_probability = 0.0;
  double error_estimate = 0.0;
  IntegrationMethod method = IntegrationMethod::gauss_hermite;
};

/// Probability that p_y^2 <= 2 m (U0 - U(q)) at recapture, averaged over the position Gaussian.
/// `states` are the per-axis states at the recapture instant.
RecaptureReport recapture_probability(double mass, const AxisStates& states, const TrapParams& trap,
                                      double displacement, const RecaptureOptions& options = {});

struct ContourLine {
  double level = 0.0;
  std::vector<std::pair<double, double>> points;  // (tau_s, n0)
};

struct LossMap {
  std::vector<double> taus;
  std::vector<double> n0s;
  Eigen::MatrixXd loss;    // rows: n0, cols: tau
  Eigen::MatrixXd purity;
  Eigen::MatrixXd error;
  Eigen::Matrix<int, Eigen::Dynamic, Eigen::Dynamic> method;  // 0 GH, 1 QMC
  std::vector<ContourLine> contours;
};

struct LossMapOptions {
  RecaptureOptions recapture;
  std::vector<double> purity_levels{0.5, 0.25, 0.1};
  int threads = 1;
  double g = constants::g_default;
};

/// Loss probability and purity over (tau, n0), optimal displacement at every tau, the same
/// occupation on all three axes. Purity uses the y mode.
LossMap loss_map(const std::vector<double>& taus, const std::vector<double>& n0s,
                 const EnvironmentParams& env, const TrapParams& trap,
                 const ParticleParams& particle, const LossMapOptions& options = {});

/// Time at which the free-fall purity drops to `level`; nullopt if it is already below at
/// t = 0 or stays above it up to `t_max`.
std::optional<double> purity_crossing_time(double v0, double gamma_dec, double omega, double level,
                                           double t_max);

}  // namespace freefall
