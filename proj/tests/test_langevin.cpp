#include <cmath>

#include "doctest.h"

#include "freefall/dynamics.hpp"
#include "freefall/energetics.hpp"
#include "freefall/langevin.hpp"
#include "freefall/pipeline.hpp"

using namespace freefall;

namespace {

constexpr double two_pi = 2.0 * constants::pi;

struct Base {
  ParticleParams particle{59e-9, 2200.0};
  TrapParams trap;
  EnvironmentParams env;
  Protocol protocol;

  Base() {
    trap.omega = Eigen::Vector3d(two_pi * 116e3, two_pi * 141.2e3, two_pi * 41e3);
    trap.depth = 5.4e5 * constants::k_B * 34.1e-3;
    env = EnvironmentParams::from_gas(particle, mbar_to_pa(3e-6), 300.0);
  }
};

EnvironmentParams vacuum() {
  EnvironmentParams env;
  env.damping_gamma = 0.0;
  return env;
}

// Gaussian beam with trap frequencies consistent with its depth and waists.
TrapParams duffing_trap(double mass) {
  TrapParams t;
  t.waist_x = 1.08e-6;
  t.waist_y = 0.85e-6;
  t.rayleigh_z = 2.50e-6;
  t.depth = 2.6908e-19;
  t.omega = Eigen::Vector3d(std::sqrt(4.0 * t.depth / (mass * t.waist_x * t.waist_x)),
                            std::sqrt(4.0 * t.depth / (mass * t.waist_y * t.waist_y)),
                            std::sqrt(2.0 * t.depth / (mass * t.rayleigh_z * t.rayleigh_z)));
  return t;
}

}  // namespace

TEST_CASE("trajectory streams") {
  Rng a = trajectory_rng(7, 3);
  Rng b = trajectory_rng(7, 3);
  Rng c = trajectory_rng(7, 4);
  Rng d = trajectory_rng(8, 3);
  const auto first = a();
  CHECK(first == b());
  CHECK(first != c());
  CHECK(first != d());
}

TEST_CASE("noiseless ballistic fall") {
  const double m = 1.9e-18;
  Rng rng = trajectory_rng(1, 0);
  const auto tr = simulate_freefall(PhasePoint{}, 0.25e-3, m, vacuum(), 1e-8, rng);
  CHECK(std::abs(tr.q[1].back() + 0.5 * 9.806 * 0.25e-3 * 0.25e-3) < 0.1e-9);
  CHECK(tr.q[0].back() == 0.0);
  CHECK(tr.q[2].back() == 0.0);
  CHECK(tr.times.size() == 25001u);
  CHECK(tr.p[1].back() == doctest::Approx(-m * 9.806 * 0.25e-3).epsilon(1e-9));

  PhasePoint bad;
  bad.q(0) = std::nan("");
  CHECK_THROWS_AS(simulate_freefall(bad, 1e-6, m, vacuum(), 1e-8, rng), SimulationError);
  CHECK_THROWS_AS(simulate_freefall(PhasePoint{}, 1e-6, m, vacuum(), 0.0, rng), DomainError);
}

TEST_CASE("sampled initial states") {
  Base b;
  const double m = b.particle.mass();
  const AxisStates init = initial_states(b.protocol, b.trap, m);
  Rng rng = trajectory_rng(2, 0);
  const int n = 40000;
  Eigen::Vector3d sq = Eigen::Vector3d::Zero(), sp = Eigen::Vector3d::Zero();
  for (int i = 0; i < n; ++i) {
    const PhasePoint x = sample_state(init, rng);
    sq += x.q.cwiseAbs2();
    sp += x.p.cwiseAbs2();
  }
  for (int a = 0; a < 3; ++a) {
    // Relative SE of a variance estimate is sqrt(2 / n) ~ 0.7%.
    CHECK(sq(a) / n == doctest::Approx(init[a].var_q()).epsilon(0.03));
    CHECK(sp(a) / n == doctest::Approx(init[a].var_p()).epsilon(0.03));
  }
}

TEST_CASE("ensemble moments against the closed form") {
  Base b;
  const double m = b.particle.mass();
  const std::vector<double> taus{0.05e-3, 0.1e-3, 0.25e-3};
  EnsembleOptions opt;
  opt.optimal_displacement = true;
  const auto run = run_ensemble_grid(b.protocol, taus, 6000, b.env, b.trap, b.particle, 21, opt);
  const AxisStates init = initial_states(b.protocol, b.trap, m);
  for (std::size_t k = 0; k < taus.size(); ++k) {
    const auto& st = run.stats[k];
    for (Axis a : all_axes) {
      const auto expect = propagate(init[index(a)], taus[k], a, m, b.env);
      const auto& got = st.axes[index(a)];
      for (int r = 0; r < 2; ++r) {
        CHECK(std::abs(got.mean(r) - expect.mean(r)) < 3.0 * got.mean_se(r));
        for (int c = r; c < 2; ++c) {
          INFO("tau " << taus[k] << " axis " << axis_name(a) << " entry " << r << c);
          CHECK(std::abs(got.cov(r, c) - expect.cov(r, c)) < 3.0 * got.cov_se(r, c));
        }
      }
    }
  }
}

TEST_CASE("exact and Euler-Maruyama integrators agree in distribution") {
  Base b;
  // Heavier damping so the noise matters on this time scale.
  b.env = b.env.with_pressure(mbar_to_pa(1e-1));
  const std::vector<double> taus{0.1e-3, 0.2e-3};
  EnsembleOptions em;
  EnsembleOptions ex;
  ex.integrator = FreefallIntegrator::exact;
  const auto r1 = run_ensemble_grid(b.protocol, taus, 5000, b.env, b.trap, b.particle, 3, em);
  const auto r2 = run_ensemble_grid(b.protocol, taus, 5000, b.env, b.trap, b.particle, 4, ex);
  for (std::size_t k = 0; k < taus.size(); ++k) {
    const auto& a = r1.stats[k].axes[1];
    const auto& c = r2.stats[k].axes[1];
    CHECK(std::abs(a.cov(0, 0) - c.cov(0, 0)) < 3.0 * std::hypot(a.cov_se(0, 0), c.cov_se(0, 0)));
    CHECK(std::abs(a.cov(1, 1) - c.cov(1, 1)) < 3.0 * std::hypot(a.cov_se(1, 1), c.cov_se(1, 1)));
    CHECK(std::abs(a.mean(0) - c.mean(0)) < 3.0 * std::hypot(a.mean_se(0), c.mean_se(0)));
  }
}

TEST_CASE("ensemble bookkeeping") {
  Base b;
  const auto st = run_ensemble(b.protocol, 100, b.env, b.trap, b.particle, 5);
  CHECK(st.recapture_fraction == 1.0);
  CHECK(st.n_traj == 100u);
  CHECK(st.xi_q == doctest::Approx(1.0).epsilon(0.3));

  EnsembleOptions one;
  EnsembleOptions four;
  four.threads = 4;
  const std::vector<double> taus{0.0, 0.1e-3, 0.2e-3};
  const auto a = run_ensemble_grid(b.protocol, taus, 64, b.env, b.trap, b.particle, 9, one);
  const auto c = run_ensemble_grid(b.protocol, taus, 64, b.env, b.trap, b.particle, 9, four);
  for (std::size_t k = 0; k < taus.size(); ++k) {
    for (int ax = 0; ax < 3; ++ax) {
      CHECK(a.stats[k].axes[ax].mean == c.stats[k].axes[ax].mean);
      CHECK(a.stats[k].axes[ax].cov == c.stats[k].axes[ax].cov);
    }
    CHECK(a.stats[k].mean_energy_y == c.stats[k].mean_energy_y);
  }
  REQUIRE(a.samples.size() == 64u * taus.size());
  CHECK(a.samples[5 * taus.size() + 2].q == c.samples[5 * taus.size() + 2].q);

  CHECK_THROWS_AS(run_ensemble_grid(b.protocol, {}, 64, b.env, b.trap, b.particle, 9), DomainError);
  CHECK_THROWS_AS(run_ensemble_grid(b.protocol, {2e-4, 1e-4}, 64, b.env, b.trap, b.particle, 9),
                  DomainError);
  CHECK_THROWS_AS(run_ensemble_grid(b.protocol, taus, 1, b.env, b.trap, b.particle, 9), DomainError);
}

TEST_CASE("trapped motion at small amplitude oscillates at the trap frequency") {
  const double m = mass_from_radius(59e-9, 2200.0);
  const TrapParams t = duffing_trap(m);
  PhasePoint x0;
  x0.q(1) = 1e-9;
  Rng rng = trajectory_rng(1, 0);
  TrappedOptions opt;
  opt.gravity = false;
  const double period = two_pi / t.omega.y();
  const auto tr = simulate_trapped(x0, t, m, 150.0 * period, vacuum(), rng, opt);
  CHECK_FALSE(tr.lost);
  const double dt = tr.times[1] - tr.times[0];
  CHECK(oscillation_frequency(tr.q[1], dt) == doctest::Approx(t.omega.y()).epsilon(1e-3));
}

TEST_CASE("unbound particles are flagged lost") {
  const double m = mass_from_radius(59e-9, 2200.0);
  const TrapParams t = duffing_trap(m);
  PhasePoint x0;
  x0.p(1) = std::sqrt(2.0 * m * 1.5 * t.depth);
  Rng rng = trajectory_rng(1, 0);
  const auto tr = simulate_trapped(x0, t, m, 1e-3, vacuum(), rng);
  CHECK(tr.lost);
}

TEST_CASE("exact harmonic paths are stationary") {
  const double m = 1.9e-18;
  const double omega = two_pi * 100e3;
  const double gamma = two_pi * 2e3;
  const double temperature = 300.0;
  Rng rng = trajectory_rng(12, 0);
  const double dt = 1e-6;
  const std::size_t n = 400000;
  std::vector<double> p;
  const auto q = simulate_harmonic_exact(m, omega, gamma, temperature, dt, n, rng, nullptr, &p);
  double vq = 0.0, vp = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    vq += q[i] * q[i];
    vp += p[i] * p[i];
  }
  vq /= n;
  vp /= n;
  // About n dt gamma / 2 ~ 2500 independent stretches: a few percent.
  CHECK(vq == doctest::Approx(constants::k_B * temperature / (m * omega * omega)).epsilon(0.06));
  CHECK(vp == doctest::Approx(constants::k_B * temperature * m).epsilon(0.06));

  // Lag-one autocorrelation of the damped oscillator.
  double c1 = 0.0;
  for (std::size_t i = 0; i + 1 < n; ++i) c1 += q[i] * q[i + 1];
  c1 /= (n - 1) * vq;
  const double w1 = std::sqrt(omega * omega - 0.25 * gamma * gamma);
  const double expect = std::exp(-0.5 * gamma * dt) * (std::cos(w1 * dt) + 0.5 * gamma / w1 * std::sin(w1 * dt));
  CHECK(c1 == doctest::Approx(expect).epsilon(0.01));

  CHECK_THROWS_AS(simulate_harmonic_exact(m, omega, gamma, temperature, 0.0, 10, rng), DomainError);
}
