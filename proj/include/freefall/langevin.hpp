#pragma once

#include <array>
#include <cstdint>
#include <random>
#include <vector>

#include <Eigen/Core>

#include "freefall/energetics.hpp"
#include "freefall/physics.hpp"

namespace freefall {

using Rng = std::mt19937_64;

/// Independent stream for trajectory `index` of a run seeded with `seed`.
Rng trajectory_rng(std::uint64_t seed, std::uint64_t index);

struct PhasePoint {
  Eigen::Vector3d q = Eigen::Vector3d::Zero();
  Eigen::Vector3d p = Eigen::Vector3d::Zero();
};

struct Trajectory {
  std::vector<double> times;
  std::array<std::vector<double>, 3> q;
  std::array<std::vector<double>, 3> p;
  std::uint64_t rng_seed = 0;
  std::uint64_t index = 0;
  bool lost = false;

  void push(double t, const PhasePoint& x);
};

/// Draws a phase point from independent per-axis Gaussian states.
PhasePoint sample_state(const AxisStates& states, Rng& rng);

enum class FreefallIntegrator {
  euler_maruyama,  // fixed step; trapezoidal position update
  exact,           // exact Gaussian transition of the linear SDE between record times
};

/// Free fall q' = p/m, p' = -m g e_y - gamma p + noise, recorded at every step.
Trajectory simulate_freefall(const PhasePoint& initial, double tau, double mass,
                             const EnvironmentParams& env, double dt, Rng& rng,
                             double g = constants::g_default);

/// Same dynamics, returning only the phase points at the ascending `record_times`.
std::vector<PhasePoint> freefall_samples(const PhasePoint& initial,
                                         const std::vector<double>& record_times, double mass,
                                         const EnvironmentParams& env, double dt, Rng& rng,
                                         FreefallIntegrator integrator = FreefallIntegrator::euler_maruyama,
                                         double g = constants::g_default);

struct TrappedOptions {
  double dt = 0.0;          // 0: 1e-3 of the shortest trap period
  std::size_t record_stride = 1;
  bool gravity = true;
  double g = constants::g_default;
  double loss_radius_waists = 5.0;
};

/// BAOAB Langevin integration in the full Gaussian potential, focus at the origin.
/// A particle beyond `loss_radius_waists` along any axis is flagged lost and integration stops.
Trajectory simulate_trapped(const PhasePoint& initial, const TrapParams& trap, double mass,
                            double duration, const EnvironmentParams& env, Rng& rng,
                            const TrappedOptions& options = {});

/// Exact sampled Ornstein-Uhlenbeck path of one linear mode: `count` positions spaced `dt`.
/// Starts from `start` (q, p) or, when absent, from a stationary thermal draw at `temperature`.
/// Momenta are written to `momenta` when given.
std::vector<double> simulate_harmonic_exact(double mass, double omega, double gamma,
                                            double temperature, double dt, std::size_t count,
                                            Rng& rng, const Eigen::Vector2d* start = nullptr,
                                            std::vector<double>* momenta = nullptr);

struct AxisMoments {
  Eigen::Vector2d mean = Eigen::Vector2d::Zero();
  Eigen::Vector2d mean_se = Eigen::Vector2d::Zero();
  Eigen::Matrix2d cov = Eigen::Matrix2d::Zero();
  Eigen::Matrix2d cov_se = Eigen::Matrix2d::Zero();
};

struct EnsembleStats {
  std::size_t n_traj = 0;
  std::uint64_t seed = 0;
  double tau = 0.0;
  double displacement = 0.0;
  std::array<AxisMoments, 3> axes;
  /// p_y^2/2m + U0 (1 - exp(-2 (q_y + d)^2 / w_y^2)) averaged over trajectories.
  double mean_energy_y = 0.0;
  double mean_energy_y_se = 0.0;
  double mean_energy_y_normalized = 0.0;  // per k_B T0 of the y mode
  double recapture_fraction = 0.0;
  double recapture_se = 0.0;
  double xi_q = 1.0;  // y axis, normalized by the initial rms
  double xi_p = 1.0;
  double purity_y = 0.0;
  double purity_y_se = 0.0;
};

struct EnsembleOptions {
  int threads = 1;
  double dt = 0.0;  // 0: largest tau / 1000
  FreefallIntegrator integrator = FreefallIntegrator::euler_maruyama;
  double g = constants::g_default;
  /// Use d = g tau^2 / 2 at every tau instead of protocol.displacement.
  bool optimal_displacement = false;
  /// Number of leading trajectories kept in full for dumping.
  std::size_t keep_trajectories = 0;
};

struct EnsembleRun {
  std::vector<EnsembleStats> stats;  // one per tau
  std::vector<Trajectory> trajectories;
  /// Phase point of trajectory i at tau k in samples[i * taus.size() + k].
  std::vector<PhasePoint> samples;
};

/// Runs n free falls sharing trajectories across `taus` (ascending), with the recapture test
/// p_y^2 <= 2 m (U0 - U(q)) at every tau. Deterministic for a fixed seed, any thread count.
EnsembleRun run_ensemble_grid(const Protocol& protocol, const std::vector<double>& taus,
                              std::size_t n, const EnvironmentParams& env, const TrapParams& trap,
                              const ParticleParams& particle, std::uint64_t seed,
                              const EnsembleOptions& options = {});

/// Single-tau ensemble at protocol.tau.
EnsembleStats run_ensemble(const Protocol& protocol, std::size_t n, const EnvironmentParams& env,
                           const TrapParams& trap, const ParticleParams& particle,
                           std::uint64_t seed, const EnsembleOptions& options = {});

/// Initial per-axis thermal states of a protocol.
AxisStates initial_states(const Protocol& protocol, const TrapParams& trap, double mass);

}  // namespace freefall
