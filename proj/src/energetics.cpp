#include "freefall/energetics.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <mutex>
#include <thread>

#include <boost/math/tools/roots.hpp>

#include "freefall/dynamics.hpp"
#include "freefall/quadrature.hpp"

namespace freefall {

double trap_depth(const ParticleParams& particle, const TrapParams& trap) {
  if (!(trap.waist_x > 0.0 && trap.waist_y > 0.0)) throw DomainError("waists must be positive");
  if (!(trap.power >= 0.0)) throw DomainError("trap power must be non-negative");
  const double r = particle.radius();
  const double eps = particle.permittivity_rel();
  return 4.0 * r * r * r * trap.power / (constants::speed_of_light * trap.waist_x * trap.waist_y) *
         (eps - 1.0) / (eps + 2.0);
}

TrapParams with_derived_depth(TrapParams trap, const ParticleParams& particle) {
  trap.depth = trap_depth(particle, trap);
  return trap;
}

double well_profile(const Eigen::Vector3d& q, const TrapParams& trap, double focus_y) {
  const double dy = q.y() - focus_y;
  const double zr = q.z() / trap.rayleigh_z;
  return std::exp(-2.0 * q.x() * q.x() / (trap.waist_x * trap.waist_x) -
                  2.0 * dy * dy / (trap.waist_y * trap.waist_y)) /
         (1.0 + zr * zr);
}

double optical_potential(const Eigen::Vector3d& q, const TrapParams& trap, double focus_y) {
  return trap.depth * (1.0 - well_profile(q, trap, focus_y));
}

Eigen::Vector3d optical_force(const Eigen::Vector3d& q, const TrapParams& trap, double focus_y) {
  const double e = trap.depth * well_profile(q, trap, focus_y);
  const double zr2 = trap.rayleigh_z * trap.rayleigh_z;
  return {-4.0 * q.x() / (trap.waist_x * trap.waist_x) * e,
          -4.0 * (q.y() - focus_y) / (trap.waist_y * trap.waist_y) * e,
          -2.0 * q.z() / (zr2 + q.z() * q.z()) * e};
}

double erfcx(double x) {
  if (x < 26.0) return std::exp(x * x) * std::erfc(x);
  // Asymptotic series; relative truncation error below 1e-14 here.
  const double inv2 = 1.0 / (2.0 * x * x);
  double term = 1.0;
  double sum = 1.0;
  for (int k = 1; k < 6; ++k) {
    term *= -(2.0 * k - 1.0) * inv2;
    sum += term;
  }
  return sum / (x * std::sqrt(constants::pi));
}

OverlapIntegrals overlap_integrals(const Eigen::Vector3d& var_q, const TrapParams& trap,
                                   double delta_y) {
  if ((var_q.array() < 0.0).any()) throw DomainError("position variances must be non-negative");
  OverlapIntegrals o;
  const double wx2 = trap.waist_x * trap.waist_x;
  const double wy2 = trap.waist_y * trap.waist_y;
  o.I_x = trap.waist_x / std::sqrt(wx2 + 4.0 * var_q.x());
  const double sy = wy2 + 4.0 * var_q.y();
  o.I_y = trap.waist_y * std::exp(-2.0 * delta_y * delta_y / sy) / std::sqrt(sy);
  if (var_q.z() == 0.0) {
    o.I_z = 1.0;
  } else {
    const double a = trap.rayleigh_z * trap.rayleigh_z / (2.0 * var_q.z());
    o.I_z = std::sqrt(constants::pi * a) * erfcx(std::sqrt(a));
  }
  return o;
}

EnergyBreakdown mean_energy_y(const ParticleParams& particle, const GaussianState& state0_y,
                              const TrapParams& trap, double tau, double displacement,
                              const EnvironmentParams& env, double g) {
  const double m = particle.mass();
  const GaussianState s = propagate(state0_y, tau, Axis::y, m, env, g);
  EnergyBreakdown e;
  e.kinetic = (s.mean_p() * s.mean_p() + s.var_p()) / (2.0 * m);
  const OverlapIntegrals o =
      overlap_integrals(Eigen::Vector3d(0.0, s.var_q(), 0.0), trap, s.mean_q() + displacement);
  e.potential = trap.depth * (1.0 - o.I_y);
  e.total = e.kinetic + e.potential;
  const double omega = trap.omega.y();
  if (!(omega > 0.0)) throw DomainError("Omega_y must be positive");
  e.normalized = e.total / (m * omega * omega * state0_y.var_q());
  return e;
}

double optimal_displacement(double tau, double g) {
  detail::require_time(tau);
  return 0.5 * g * tau * tau;
}

double optimal_detuning(double tau, double cf_m_per_hz, double g) {
  if (!(cf_m_per_hz > 0.0)) throw DomainError("c_f must be positive");
  return optimal_displacement(tau, g) / cf_m_per_hz;
}

double gravity_ratio(const ParticleParams& particle, const TrapParams& trap, double g) {
  return trap.depth / (particle.mass() * g * trap.waist_y);
}

RecaptureReport recapture_probability(double mass, const AxisStates& states, const TrapParams& trap,
                                      double displacement, const RecaptureOptions& options) {
  for (const auto& s : states) {
    if (!s.is_psd()) throw DomainError("state covariance is not positive semidefinite");
  }
  const double u0 = trap.depth;
  RecaptureReport report;
  for (Axis a : all_axes) {
    const auto& s = states[index(a)];
    const double ke = (s.mean_p() * s.mean_p() + s.var_p()) / (2.0 * mass);
    report.kinetic += ke;
    if (a != Axis::y && u0 > 0.0 && ke > options.transverse_kinetic_limit * u0) {
      throw DomainError(std::string("kinetic energy along ") + axis_name(a) +
                        " is not small compared with the trap depth");
    }
  }
  const double focus_y = -displacement;
  const OverlapIntegrals o = overlap_integrals(
      Eigen::Vector3d(states[0].var_q(), states[1].var_q(), states[2].var_q()), trap,
      states[1].mean_q() - focus_y);
  report.potential = u0 * (1.0 - o.I_x * o.I_y * o.I_z);
  report.mean_energy = report.kinetic + report.potential;

  const auto& sx = states[0];
  const auto& sy = states[1];
  const auto& sz = states[2];
  const double sig_x = std::sqrt(std::max(sx.var_q(), 0.0));
  const double sig_y = std::sqrt(std::max(sy.var_q(), 0.0));
  const double sig_z = std::sqrt(std::max(sz.var_q(), 0.0));
  const double p_scale = std::sqrt(2.0 * mass * u0);

  std::function<double(double, double, double)> integrand;
  if (options.mode == RecaptureMode::conditional) {
    const double slope = sig_y > 0.0 ? sy.cov_qp() / sig_y : 0.0;
    const double cond_var = sig_y > 0.0 ? std::max(sy.det() / sy.var_q(), 0.0) : sy.var_p();
    const double cond_sd = std::sqrt(cond_var);
    integrand = [&, slope, cond_sd](double zx, double zy, double zz) {
      const Eigen::Vector3d q(sx.mean_q() + sig_x * zx, sy.mean_q() + sig_y * zy,
                              sz.mean_q() + sig_z * zz);
      const double pu = p_scale * std::sqrt(well_profile(q, trap, focus_y));
      const double mu = sy.mean_p() + slope * zy;
      if (cond_sd == 0.0) return std::abs(mu) <= pu ? 1.0 : 0.0;
      return normal_cdf((pu - mu) / cond_sd) - normal_cdf((-pu - mu) / cond_sd);
    };
  } else {
    const double sd = std::sqrt(sy.var_p());
    integrand = [&, sd](double zx, double zy, double zz) {
      const Eigen::Vector3d q(sx.mean_q() + sig_x * zx, sy.mean_q() + sig_y * zy,
                              sz.mean_q() + sig_z * zz);
      const double pu = p_scale * std::sqrt(well_profile(q, trap, focus_y));
      if (sd == 0.0) return sy.mean_p() + pu >= 0.0 ? 1.0 : 0.0;
      return normal_cdf((sy.mean_p() + pu) / sd);
    };
  }

  // Gauss-Hermite needs its node spacing (about pi sigma / sqrt(n)) to resolve the waist.
  const int n = options.order;
  const double spacing = constants::pi / std::sqrt(static_cast<double>(n));
  const bool resolved = spacing * sig_x <= 0.5 * trap.waist_x &&
                        spacing * sig_y <= 0.5 * trap.waist_y &&
                        spacing * sig_z <= 0.5 * trap.rayleigh_z;
  bool done = false;
  if (resolved) {
    const double coarse = gauss_hermite_3d(integrand, n);
    const double fine = gauss_hermite_3d(integrand, 2 * n);
    const double err = std::abs(fine - coarse);
    if (err <= options.tolerance) {
      report.recapture_probability = fine;
      report.error_estimate = err;
      report.method = IntegrationMethod::gauss_hermite;
      done = true;
    }
  }
  if (!done) {
    QmcEstimate est;
    for (std::size_t points = 4096; points <= (std::size_t{1} << 18); points *= 4) {
      est = qmc_normal_3d(integrand, points, 16, options.qmc_seed);
      if (3.0 * est.standard_error <= options.tolerance) break;
    }
    if (3.0 * est.standard_error > options.tolerance) {
      throw IntegrationError("recapture integral did not reach the requested tolerance",
                             est.value, 3.0 * est.standard_error);
    }
    report.recapture_probability = est.value;
    report.error_estimate = 3.0 * est.standard_error;
    report.method = IntegrationMethod::quasi_monte_carlo;
  }
  report.recapture_probability = std::clamp(report.recapture_probability, 0.0, 1.0);
  report.loss_probability = 1.0 - report.recapture_probability;
  return report;
}

std::optional<double> purity_crossing_time(double v0, double gamma_dec, double omega, double level,
                                           double t_max) {
  if (!(level > 0.0 && level < 1.0)) throw DomainError("purity level must lie in (0, 1)");
  const auto f = [&](double t) { return purity(v0, gamma_dec, omega, t) - level; };
  if (f(0.0) <= 0.0 || f(t_max) > 0.0) return std::nullopt;
  boost::math::tools::eps_tolerance<double> tol(48);
  std::uintmax_t iters = 200;
  const auto [lo, hi] = boost::math::tools::toms748_solve(f, 0.0, t_max, tol, iters);
  return 0.5 * (lo + hi);
}

LossMap loss_map(const std::vector<double>& taus, const std::vector<double>& n0s,
                 const EnvironmentParams& env, const TrapParams& trap,
                 const ParticleParams& particle, const LossMapOptions& options) {
  if (taus.empty() || n0s.empty()) throw DomainError("loss map grids must be non-empty");
  if (!std::is_sorted(taus.begin(), taus.end()) || !std::is_sorted(n0s.begin(), n0s.end())) {
    throw DomainError("loss map grids must be ascending");
  }
  trap.validate();
  env.validate();
  LossMap map;
  map.taus = taus;
  map.n0s = n0s;
  const auto rows = static_cast<Eigen::Index>(n0s.size());
  const auto cols = static_cast<Eigen::Index>(taus.size());
  map.loss.resize(rows, cols);
  map.purity.resize(rows, cols);
  map.error.resize(rows, cols);
  map.method.resize(rows, cols);

  const double m = particle.mass();
  const double omega_y = trap.omega.y();
  const double gamma_dec = env.damping_gamma * constants::k_B * env.gas_temperature /
                           (constants::hbar * omega_y);

  const std::size_t total = n0s.size() * taus.size();
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto worker = [&]() {
    for (std::size_t k = next++; k < total; k = next++) {
      const auto r = static_cast<Eigen::Index>(k / taus.size());
      const auto c = static_cast<Eigen::Index>(k % taus.size());
      try {
        const double n0 = n0s[r];
        const double tau = taus[c];
        AxisStates states;
        for (Axis a : all_axes) {
          states[index(a)] =
              propagate(thermal_state(m, trap.omega(index(a)), Occupation{n0}), tau, a, m, env,
                        options.g);
        }
        const RecaptureReport rep = recapture_probability(
            m, states, trap, optimal_displacement(tau, options.g), options.recapture);
        map.loss(r, c) = rep.loss_probability;
        map.error(r, c) = rep.error_estimate;
        map.method(r, c) = rep.method == IntegrationMethod::gauss_hermite ? 0 : 1;
        map.purity(r, c) = purity(n0 + 0.5, gamma_dec, omega_y, tau);
      } catch (...) {
        std::lock_guard<std::mutex> lock(failure_mutex);
        if (!failure) failure = std::current_exception();
      }
    }
  };
  const int threads = std::max(1, options.threads);
  if (threads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  if (failure) std::rethrow_exception(failure);

  for (double level : options.purity_levels) {
    ContourLine line;
    line.level = level;
    for (double n0 : n0s) {
      if (auto t = purity_crossing_time(n0 + 0.5, gamma_dec, omega_y, level, taus.back())) {
        line.points.emplace_back(*t, n0);
      }
    }
    map.contours.push_back(std::move(line));
  }
  return map;
}

}  // namespace freefall
