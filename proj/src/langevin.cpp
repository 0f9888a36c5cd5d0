#include "freefall/langevin.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <mutex>
#include <thread>

#include <unsupported/Eigen/MatrixFunctions>

#include "freefall/dynamics.hpp"

namespace freefall {

namespace {

// Neumaier compensated summation.
class CompensatedSum {
 public:
  void add(double x) {
    const double t = sum_ + x;
    if (std::abs(sum_) >= std::abs(x)) {
      comp_ += (sum_ - t) + x;
    } else {
      comp_ += (x - t) + sum_;
    }
    sum_ = t;
  }
  double value() const { return sum_ + comp_; }

 private:
  double sum_ = 0.0;
  double comp_ = 0.0;
};

Eigen::Matrix2d cholesky2(const Eigen::Matrix2d& c) {
  Eigen::Matrix2d l = Eigen::Matrix2d::Zero();
  if (c(0, 0) > 0.0) {
    l(0, 0) = std::sqrt(c(0, 0));
    l(1, 0) = c(1, 0) / l(0, 0);
  }
  l(1, 1) = std::sqrt(std::max(c(1, 1) - l(1, 0) * l(1, 0), 0.0));
  return l;
}

void check_finite(const PhasePoint& x, std::size_t step) {
  if (!x.q.allFinite() || !x.p.allFinite()) throw SimulationError("non-finite phase point", step);
}

// Integrates the free fall through `record_times`; optionally keeps every step.
std::vector<PhasePoint> integrate_freefall(const PhasePoint& initial,
                                           const std::vector<double>& record_times, double mass,
                                           const EnvironmentParams& env, double dt, Rng& rng,
                                           FreefallIntegrator integrator, double g,
                                           Trajectory* full) {
  if (!(mass > 0.0)) throw DomainError("mass must be positive");
  std::normal_distribution<double> normal(0.0, 1.0);
  const double gamma = env.damping_gamma;
  const double sigma = std::sqrt(2.0 * mass * constants::k_B * env.gas_temperature * gamma);
  std::vector<PhasePoint> out;
  out.reserve(record_times.size());
  PhasePoint x = initial;
  double t = 0.0;
  std::size_t step = 0;
  if (full) full->push(t, x);
  for (double target : record_times) {
    if (target < t) throw DomainError("record times must be ascending and non-negative");
    const double span = target - t;
    if (span > 0.0) {
      if (integrator == FreefallIntegrator::exact) {
        for (Axis a : all_axes) {
          const int j = index(a);
          GaussianState point;
          point.mean << x.q(j), x.p(j);
          const Eigen::Vector2d mean = propagate_mean(point, span, a, mass, gamma, g);
          const Eigen::Matrix2d noise = propagate_covariance(
              Eigen::Matrix2d(Eigen::Matrix2d::Zero()), span, mass, gamma, env.gas_temperature);
          const Eigen::Vector2d z(normal(rng), normal(rng));
          const Eigen::Vector2d next = mean + cholesky2(noise) * z;
          x.q(j) = next(0);
          x.p(j) = next(1);
        }
        ++step;
        t = target;
        if (full) full->push(t, x);
      } else {
        if (!(dt > 0.0)) throw DomainError("time step must be positive");
        const auto steps = static_cast<std::size_t>(std::ceil(span / dt - 1e-9));
        const double h = span / static_cast<double>(steps);
        const double kick = sigma * std::sqrt(h);
        for (std::size_t s = 0; s < steps; ++s) {
          for (int j = 0; j < 3; ++j) {
            const double gj = j == 1 ? g : 0.0;
            const double p_new = x.p(j) - (mass * gj + gamma * x.p(j)) * h + kick * normal(rng);
            x.q(j) += 0.5 * (x.p(j) + p_new) / mass * h;
            x.p(j) = p_new;
          }
          ++step;
          t += h;
          check_finite(x, step);
          if (full) full->push(t, x);
        }
        t = target;
      }
    }
    check_finite(x, step);
    out.push_back(x);
  }
  return out;
}

}  // namespace

Rng trajectory_rng(std::uint64_t seed, std::uint64_t index) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(index), static_cast<std::uint32_t>(index >> 32)};
  return Rng(seq);
}

void Trajectory::push(double t, const PhasePoint& x) {
  times.push_back(t);
  for (int j = 0; j < 3; ++j) {
    q[j].push_back(x.q(j));
    p[j].push_back(x.p(j));
  }
}

PhasePoint sample_state(const AxisStates& states, Rng& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  PhasePoint x;
  for (int j = 0; j < 3; ++j) {
    const Eigen::Matrix2d l = cholesky2(states[j].cov);
    const Eigen::Vector2d z(normal(rng), normal(rng));
    const Eigen::Vector2d v = states[j].mean + l * z;
    x.q(j) = v(0);
    x.p(j) = v(1);
  }
  return x;
}

Trajectory simulate_freefall(const PhasePoint& initial, double tau, double mass,
                             const EnvironmentParams& env, double dt, Rng& rng, double g) {
  if (!(dt > 0.0)) throw DomainError("time step must be positive");
  if (!(tau >= dt)) throw DomainError("free-fall time must be at least one time step");
  Trajectory traj;
  integrate_freefall(initial, {tau}, mass, env, dt, rng, FreefallIntegrator::euler_maruyama, g,
                     &traj);
  return traj;
}

std::vector<PhasePoint> freefall_samples(const PhasePoint& initial,
                                         const std::vector<double>& record_times, double mass,
                                         const EnvironmentParams& env, double dt, Rng& rng,
                                         FreefallIntegrator integrator, double g) {
  return integrate_freefall(initial, record_times, mass, env, dt, rng, integrator, g, nullptr);
}

Trajectory simulate_trapped(const PhasePoint& initial, const TrapParams& trap, double mass,
                            double duration, const EnvironmentParams& env, Rng& rng,
                            const TrappedOptions& options) {
  if (!(mass > 0.0)) throw DomainError("mass must be positive");
  if (!(duration >= 0.0)) throw DomainError("duration must be non-negative");
  double dt = options.dt;
  if (dt <= 0.0) {
    const double omega_max = trap.omega.maxCoeff();
    if (!(omega_max > 0.0)) throw DomainError("trap frequencies must be positive");
    dt = 1e-3 * 2.0 * constants::pi / omega_max;
  }
  const auto steps = static_cast<std::size_t>(std::llround(duration / dt));
  const std::size_t stride = std::max<std::size_t>(1, options.record_stride);
  const double gamma = env.damping_gamma;
  const double c = std::exp(-gamma * dt);
  const double thermal_sd =
      std::sqrt(std::max(1.0 - c * c, 0.0) * mass * constants::k_B * env.gas_temperature);
  const Eigen::Vector3d limit = options.loss_radius_waists * trap.waists();
  const Eigen::Vector3d gravity(0.0, options.gravity ? -mass * options.g : 0.0, 0.0);
  std::normal_distribution<double> normal(0.0, 1.0);

  Trajectory traj;
  traj.times.reserve(steps / stride + 2);
  PhasePoint x = initial;
  traj.push(0.0, x);
  Eigen::Vector3d force = optical_force(x.q, trap, 0.0) + gravity;
  const double half = 0.5 * dt;
  for (std::size_t s = 1; s <= steps; ++s) {
    x.p += half * force;
    x.q += half / mass * x.p;
    for (int j = 0; j < 3; ++j) x.p(j) = c * x.p(j) + thermal_sd * normal(rng);
    x.q += half / mass * x.p;
    force = optical_force(x.q, trap, 0.0) + gravity;
    x.p += half * force;
    check_finite(x, s);
    if ((x.q.array().abs() > limit.array()).any()) {
      traj.lost = true;
      traj.push(static_cast<double>(s) * dt, x);
      break;
    }
    if (s % stride == 0) traj.push(static_cast<double>(s) * dt, x);
  }
  return traj;
}

std::vector<double> simulate_harmonic_exact(double mass, double omega, double gamma,
                                            double temperature, double dt, std::size_t count,
                                            Rng& rng, const Eigen::Vector2d* start,
                                            std::vector<double>* momenta) {
  if (!(mass > 0.0 && omega > 0.0 && dt > 0.0 && temperature >= 0.0 && gamma >= 0.0)) {
    throw DomainError("harmonic path needs positive mass, frequency, time step and temperature");
  }
  // Units q_u = 1 / (sqrt(m) Omega), p_u = sqrt(m): the drift is well conditioned and the
  // stationary covariance is k_B T times the identity.
  const Eigen::DiagonalMatrix<double, 2> unit(1.0 / (std::sqrt(mass) * omega), std::sqrt(mass));
  Eigen::Matrix2d a;
  a << 0.0, omega, -omega, -gamma;
  const Eigen::Matrix2d phi_u = (a * dt).exp();
  const double kt = constants::k_B * temperature;
  Eigen::Matrix2d q = kt * (Eigen::Matrix2d::Identity() - phi_u * phi_u.transpose());
  q(0, 1) = q(1, 0) = 0.5 * (q(0, 1) + q(1, 0));
  const Eigen::Matrix2d phi = unit * phi_u * unit.inverse();
  const Eigen::Matrix2d lq = unit * cholesky2(q);
  const Eigen::Matrix2d l0 = unit * cholesky2(kt * Eigen::Matrix2d::Identity());
  std::normal_distribution<double> normal(0.0, 1.0);
  Eigen::Vector2d x = start ? *start : Eigen::Vector2d(l0 * Eigen::Vector2d(normal(rng), normal(rng)));
  std::vector<double> out(count);
  if (momenta) momenta->resize(count);
  for (std::size_t i = 0; i < count; ++i) {
    out[i] = x(0);
    if (momenta) (*momenta)[i] = x(1);
    x = phi * x + lq * Eigen::Vector2d(normal(rng), normal(rng));
  }
  return out;
}

AxisStates initial_states(const Protocol& protocol, const TrapParams& trap, double mass) {
  AxisStates s;
  for (Axis a : all_axes) {
    s[index(a)] = thermal_state(mass, trap.omega(index(a)), protocol.init[index(a)]);
  }
  return s;
}

namespace {

EnsembleStats summarize(const std::vector<PhasePoint>& pts, const AxisStates& init,
                        const TrapParams& trap, double mass, double displacement) {
  const std::size_t n = pts.size();
  const double nd = static_cast<double>(n);
  EnsembleStats st;
  st.n_traj = n;
  st.displacement = displacement;

  for (int j = 0; j < 3; ++j) {
    CompensatedSum sq, sp;
    for (const auto& x : pts) {
      sq.add(x.q(j));
      sp.add(x.p(j));
    }
    const double mq = sq.value() / nd;
    const double mp = sp.value() / nd;
    CompensatedSum s_qq, s_pp, s_qp, s4_qq, s4_pp, s4_qp, s_qqqp, s_qppp, s_qqpp;
    for (const auto& x : pts) {
      const double dq = x.q(j) - mq;
      const double dp = x.p(j) - mp;
      s_qq.add(dq * dq);
      s_pp.add(dp * dp);
      s_qp.add(dq * dp);
      s4_qq.add(dq * dq * dq * dq);
      s4_pp.add(dp * dp * dp * dp);
      s_qqpp.add(dq * dq * dp * dp);
      s_qqqp.add(dq * dq * dq * dp);
      s_qppp.add(dq * dp * dp * dp);
    }
    AxisMoments& m = st.axes[j];
    m.mean << mq, mp;
    const double vq = s_qq.value() / (nd - 1.0);
    const double vp = s_pp.value() / (nd - 1.0);
    const double c = s_qp.value() / (nd - 1.0);
    m.cov << vq, c, c, vp;
    m.mean_se << std::sqrt(vq / nd), std::sqrt(vp / nd);
    const double m4q = s4_qq.value() / nd;
    const double m4p = s4_pp.value() / nd;
    const double m22 = s_qqpp.value() / nd;
    m.cov_se(0, 0) = std::sqrt(std::max(m4q - vq * vq, 0.0) / nd);
    m.cov_se(1, 1) = std::sqrt(std::max(m4p - vp * vp, 0.0) / nd);
    m.cov_se(0, 1) = m.cov_se(1, 0) = std::sqrt(std::max(m22 - c * c, 0.0) / nd);

    if (j == 1) {
      // Delta method for det = vq vp - c^2 with the joint covariance of (vq, vp, c).
      const double m31 = s_qqqp.value() / nd;
      const double m13 = s_qppp.value() / nd;
      Eigen::Matrix3d k;
      k(0, 0) = m4q - vq * vq;
      k(1, 1) = m4p - vp * vp;
      k(2, 2) = m22 - c * c;
      k(0, 1) = k(1, 0) = m22 - vq * vp;
      k(0, 2) = k(2, 0) = m31 - vq * c;
      k(1, 2) = k(2, 1) = m13 - vp * c;
      k /= nd;
      const Eigen::Vector3d grad(vp, vq, -2.0 * c);
      const double det = vq * vp - c * c;
      const double var_det = std::max(grad.dot(k * grad), 0.0);
      if (det > 0.0) {
        st.purity_y = constants::hbar / (2.0 * std::sqrt(det));
        st.purity_y_se = st.purity_y / (2.0 * det) * std::sqrt(var_det);
      }
    }
  }

  const GaussianState& y0 = init[1];
  GaussianState y_t;
  y_t.cov = st.axes[1].cov;
  GaussianState y_ref = GaussianState::from_moments(0.0, 0.0, y0.var_q(), y0.var_p(), 0.0);
  const ExpansionFactors xi = expansion_factors(y_ref, y_t);
  st.xi_q = xi.xi_q;
  st.xi_p = xi.xi_p;

  const double focus_y = -displacement;
  const double wy2 = trap.waist_y * trap.waist_y;
  CompensatedSum se, se2, recaptured;
  for (const auto& x : pts) {
    const double dy = x.q.y() - focus_y;
    const double h = x.p.y() * x.p.y() / (2.0 * mass) +
                     trap.depth * (1.0 - std::exp(-2.0 * dy * dy / wy2));
    se.add(h);
    const double barrier = 2.0 * mass * trap.depth * well_profile(x.q, trap, focus_y);
    if (x.p.y() * x.p.y() <= barrier) recaptured.add(1.0);
  }
  st.mean_energy_y = se.value() / nd;
  for (const auto& x : pts) {
    const double dy = x.q.y() - focus_y;
    const double h = x.p.y() * x.p.y() / (2.0 * mass) +
                     trap.depth * (1.0 - std::exp(-2.0 * dy * dy / wy2));
    se2.add((h - st.mean_energy_y) * (h - st.mean_energy_y));
  }
  st.mean_energy_y_se = std::sqrt(se2.value() / (nd - 1.0) / nd);
  const double omega_y = trap.omega.y();
  const double kt0 = mass * omega_y * omega_y * y0.var_q();
  st.mean_energy_y_normalized = st.mean_energy_y / kt0;
  st.recapture_fraction = recaptured.value() / nd;
  st.recapture_se = std::sqrt(st.recapture_fraction * (1.0 - st.recapture_fraction) / nd);
  return st;
}

}  // namespace

EnsembleRun run_ensemble_grid(const Protocol& protocol, const std::vector<double>& taus,
                              std::size_t n, const EnvironmentParams& env, const TrapParams& trap,
                              const ParticleParams& particle, std::uint64_t seed,
                              const EnsembleOptions& options) {
  if (n < 2) throw DomainError("an ensemble needs at least two trajectories");
  if (taus.empty()) throw DomainError("tau grid must be non-empty");
  if (!std::is_sorted(taus.begin(), taus.end()) || taus.front() < 0.0) {
    throw DomainError("tau grid must be ascending and non-negative");
  }
  protocol.validate();
  env.validate();
  const double mass = particle.mass();
  const AxisStates init = initial_states(protocol, trap, mass);
  const double dt = options.dt > 0.0 ? options.dt : (taus.back() > 0.0 ? taus.back() / 1000.0 : 1.0);
  const std::size_t nt = taus.size();

  std::vector<PhasePoint> samples(n * nt);
  EnsembleRun run;
  const std::size_t keep = std::min(options.keep_trajectories, n);
  run.trajectories.resize(keep);

  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto worker = [&]() {
    for (std::size_t i = next++; i < n; i = next++) {
      try {
        Rng rng = trajectory_rng(seed, i);
        const PhasePoint x0 = sample_state(init, rng);
        Trajectory* full = i < keep ? &run.trajectories[i] : nullptr;
        if (full) {
          full->rng_seed = seed;
          full->index = i;
        }
        const auto pts = integrate_freefall(x0, taus, mass, env, dt, rng, options.integrator,
                                            options.g, full);
        std::copy(pts.begin(), pts.end(), samples.begin() + static_cast<std::ptrdiff_t>(i * nt));
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

  std::vector<PhasePoint> at_tau(n);
  for (std::size_t k = 0; k < nt; ++k) {
    for (std::size_t i = 0; i < n; ++i) at_tau[i] = samples[i * nt + k];
    const double d = options.optimal_displacement ? optimal_displacement(taus[k], options.g)
                                                  : protocol.displacement;
    EnsembleStats st = summarize(at_tau, init, trap, mass, d);
    st.tau = taus[k];
    st.seed = seed;
    run.stats.push_back(std::move(st));
  }
  run.samples = std::move(samples);
  return run;
}

EnsembleStats run_ensemble(const Protocol& protocol, std::size_t n, const EnvironmentParams& env,
                           const TrapParams& trap, const ParticleParams& particle,
                           std::uint64_t seed, const EnsembleOptions& options) {
  return run_ensemble_grid(protocol, {protocol.tau}, n, env, trap, particle, seed, options)
      .stats.front();
}

}  // namespace freefall
