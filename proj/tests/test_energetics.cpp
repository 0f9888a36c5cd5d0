#include <cmath>
#include <random>

#include <Eigen/Dense>
#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <boost/math/tools/minima.hpp>

#include "doctest.h"

#include "freefall/dynamics.hpp"
#include "freefall/energetics.hpp"

using namespace freefall;

namespace {

constexpr double two_pi = 2.0 * constants::pi;
constexpr double kT0 = constants::k_B * 34.1e-3;

struct Base {
  ParticleParams particle{59e-9, 2200.0};
  TrapParams trap;
  EnvironmentParams env;

  Base() {
    trap.omega = Eigen::Vector3d(two_pi * 116e3, two_pi * 141.2e3, two_pi * 41e3);
    trap.depth = 5.4e5 * kT0;
    env = EnvironmentParams::from_gas(particle, mbar_to_pa(3e-6), 300.0);
  }
  double m() const { return particle.mass(); }
};

// E[f(X)], X ~ N(mu, var), by adaptive Gauss-Kronrod on +-12 sigma.
template <typename F>
double gaussian_average(F f, double mu, double var) {
  const double sd = std::sqrt(var);
  auto integrand = [&](double x) {
    const double z = (x - mu) / sd;
    return f(x) * std::exp(-0.5 * z * z) / (sd * std::sqrt(two_pi));
  };
  return boost::math::quadrature::gauss_kronrod<double, 61>::integrate(
      integrand, mu - 12.0 * sd, mu + 12.0 * sd, 15, 1e-13);
}

AxisStates states_at(const Base& b, double n0, double tau) {
  AxisStates s;
  for (Axis a : all_axes) {
    s[index(a)] = propagate(thermal_state(b.m(), b.trap.omega(index(a)), Occupation{n0}), tau, a,
                            b.m(), b.env);
  }
  return s;
}

}  // namespace

TEST_CASE("trap depth from the dipole polarizability") {
  const ParticleParams p(60e-9, 2200.0, 2.1);
  TrapParams t;
  t.waist_x = t.waist_y = 0.6e-6;
  t.power = 0.130;
  // alpha = 4 pi eps0 R^3 (eps-1)/(eps+2), I0 = 2P / (pi wx wy), U0 = alpha I0 / (2 c eps0).
  const double alpha_over_eps0 = 4.0 * constants::pi * std::pow(60e-9, 3) * 1.1 / 4.1;
  const double i0 = 2.0 * 0.130 / (constants::pi * 0.36e-12);
  const double expect = alpha_over_eps0 * i0 / (2.0 * constants::speed_of_light);
  CHECK(trap_depth(p, t) == doctest::Approx(expect).epsilon(1e-12));
  CHECK(trap_depth(p, t) / kT0 == doctest::Approx(5.4e5).epsilon(0.15));

  t.power = 0.0;
  CHECK(trap_depth(p, t) == 0.0);
  t.power = 0.130;
  CHECK(trap_depth(ParticleParams(120e-9, 2200.0), t) == doctest::Approx(8.0 * trap_depth(p, t)));
  CHECK(with_derived_depth(t, p).depth == doctest::Approx(trap_depth(p, t)));
}

TEST_CASE("potential shape") {
  TrapParams t;
  t.waist_x = 0.6e-6;
  t.waist_y = 0.7e-6;
  t.rayleigh_z = 2.0e-6;
  t.depth = 1e-19;
  const double d = 300e-9;
  CHECK(optical_potential({0.0, -d, 0.0}, t, -d) == 0.0);
  CHECK(optical_potential({0.0, 0.0, 1.0}, t, -d) == doctest::Approx(t.depth).epsilon(1e-9));
  CHECK(optical_potential({0.0, -d + t.waist_y / std::sqrt(2.0), 0.0}, t, -d) ==
        doctest::Approx(t.depth * (1.0 - std::exp(-1.0))));

  // Force is minus the numerical gradient.
  const Eigen::Vector3d q(0.2e-6, -0.1e-6, 0.5e-6);
  const Eigen::Vector3d f = optical_force(q, t, -d);
  for (int k = 0; k < 3; ++k) {
    const double h = 1e-12;
    Eigen::Vector3d a = q, b = q;
    a(k) += h;
    b(k) -= h;
    const double grad = (optical_potential(a, t, -d) - optical_potential(b, t, -d)) / (2.0 * h);
    CHECK(-grad == doctest::Approx(f(k)).epsilon(1e-5));
  }
}

TEST_CASE("erfcx") {
  for (double x : {-3.0, -0.5, 0.0, 0.3, 2.0, 8.0}) {
    CHECK(erfcx(x) == doctest::Approx(std::exp(x * x) * std::erfc(x)).epsilon(1e-12));
  }
  // Large-x asymptote 1 / (x sqrt(pi)).
  CHECK(erfcx(1e4) == doctest::Approx(1.0 / (1e4 * std::sqrt(constants::pi))).epsilon(1e-8));
}

TEST_CASE("overlap integrals against direct quadrature") {
  TrapParams t;
  t.waist_x = 0.6e-6;
  t.waist_y = 0.6e-6;
  t.rayleigh_z = 2.3e-6;
  const auto zero = overlap_integrals(Eigen::Vector3d::Zero(), t, 0.0);
  CHECK(zero.I_x == 1.0);
  CHECK(zero.I_y == 1.0);
  CHECK(zero.I_z == 1.0);
  CHECK(overlap_integrals({0.0, 0.75 * t.waist_y * t.waist_y, 0.0}, t, 0.0).I_y ==
        doctest::Approx(0.5));
  CHECK(overlap_integrals({0.0, 0.0, t.rayleigh_z * t.rayleigh_z}, t, 0.0).I_z ==
        doctest::Approx(0.656).epsilon(1e-3));

  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 20; ++trial) {
    const Eigen::Vector3d var(std::pow(1e-6 * u(rng), 2), std::pow(1e-6 * u(rng), 2),
                              std::pow(4e-6 * u(rng), 2) + 1e-20);
    const double delta = 1e-6 * (u(rng) - 0.5);
    const auto got = overlap_integrals(var, t, delta);
    const double ix = gaussian_average(
        [&](double x) { return std::exp(-2.0 * x * x / (t.waist_x * t.waist_x)); }, 0.0, var(0) + 1e-30);
    const double iy = gaussian_average(
        [&](double y) { return std::exp(-2.0 * y * y / (t.waist_y * t.waist_y)); }, delta, var(1) + 1e-30);
    const double iz = gaussian_average(
        [&](double z) { return 1.0 / (1.0 + z * z / (t.rayleigh_z * t.rayleigh_z)); }, 0.0, var(2));
    CHECK(got.I_x == doctest::Approx(ix).epsilon(1e-8));
    CHECK(got.I_y == doctest::Approx(iy).epsilon(1e-8));
    CHECK(got.I_z == doctest::Approx(iz).epsilon(1e-8));
  }
}

TEST_CASE("displacement helpers") {
  CHECK(optimal_displacement(0.0) == 0.0);
  CHECK(optimal_displacement(0.25e-3) == doctest::Approx(306.4e-9).epsilon(1e-3));
  CHECK(optimal_detuning(0.25e-3, 95e-9 / 1e6) == doctest::Approx(3.2e6).epsilon(0.01));
  CHECK_THROWS_AS(optimal_displacement(-1.0), DomainError);
}

TEST_CASE("mean recapture energy") {
  const Base b;
  const auto s0 = thermal_state(b.m(), b.trap.omega.y(), Temperature{34.1e-3});
  const auto e0 = mean_energy_y(b.particle, s0, b.trap, 0.0, 0.0, b.env);
  // Half kT0 kinetic plus U0 (1 - I_y) ~ U0 * 2 q0^2 / w^2.
  CHECK(e0.kinetic / kT0 == doctest::Approx(0.5).epsilon(1e-9));
  CHECK(e0.potential == doctest::Approx(b.trap.depth * 2.0 * s0.var_q() / (b.trap.waist_y * b.trap.waist_y)).epsilon(0.01));
  CHECK(e0.normalized == doctest::Approx(1.5).epsilon(0.05));
  CHECK(e0.total == doctest::Approx(e0.kinetic + e0.potential));

  // At fixed tau the minimum over d sits at the fallen distance.
  for (double tau : {0.05e-3, 0.25e-3, 1e-3}) {
    const auto f = [&](double d) {
      return mean_energy_y(b.particle, s0, b.trap, tau, d, b.env).total;
    };
    const double guess = optimal_displacement(tau);
    const auto [dmin, emin] =
        boost::math::tools::brent_find_minima(f, 0.5 * guess, 1.5 * guess, 40);
    (void)emin;
    CHECK(dmin == doctest::Approx(guess).epsilon(1e-6));
  }

  // Kinetic term from gravity alone reaches the depth near 54 ms.
  const double tau_u0 = std::sqrt(2.0 * b.trap.depth / b.m()) / 9.806;
  const auto e_long = mean_energy_y(b.particle, s0, b.trap, tau_u0, optimal_displacement(tau_u0), b.env);
  CHECK(e_long.kinetic / b.trap.depth == doctest::Approx(1.0).epsilon(0.01));
  CHECK(tau_u0 == doctest::Approx(54e-3).epsilon(0.05));
}

TEST_CASE("recapture at tau = 0 is certain") {
  const Base b;
  AxisStates s;
  for (Axis a : all_axes) s[index(a)] = thermal_state(b.m(), b.trap.omega(index(a)), Temperature{34.1e-3});
  const auto r = recapture_probability(b.m(), s, b.trap, 0.0);
  CHECK(r.loss_probability < 1e-6);
  CHECK(r.method == IntegrationMethod::gauss_hermite);
}

TEST_CASE("no trap means no recapture") {
  Base b;
  const auto s = states_at(b, 5e3, 0.25e-3);
  b.trap.depth = 0.0;
  CHECK(recapture_probability(b.m(), s, b.trap, optimal_displacement(0.25e-3)).recapture_probability ==
        doctest::Approx(0.0).epsilon(1e-12));
  RecaptureOptions marginal;
  marginal.mode = RecaptureMode::marginal;
  const auto r = recapture_probability(b.m(), s, b.trap, optimal_displacement(0.25e-3), marginal);
  const double expect = 0.5 * std::erfc(-s[1].mean_p() / std::sqrt(2.0 * s[1].var_p()));
  CHECK(r.recapture_probability == doctest::Approx(expect).epsilon(1e-6));
  CHECK(r.recapture_probability < 1e-3);
}

TEST_CASE("property: recapture grows with depth") {
  Base b;
  const double tau = 0.25e-3;
  const auto s = states_at(b, 5e3, tau);
  double prev = -1.0;
  for (double scale : {0.0, 1e-4, 1e-3, 3e-3, 1e-2, 0.1, 1.0}) {
    TrapParams t = b.trap;
    t.depth = scale * b.trap.depth;
    const double p = recapture_probability(b.m(), s, t, optimal_displacement(tau)).recapture_probability;
    CHECK(p >= prev - 2e-4);
    prev = p;
  }
  CHECK(prev > 0.95);
}

TEST_CASE("quadrature and quasi Monte Carlo agree") {
  Base b;
  // Shallow trap: the mean fall momentum alone nearly reaches the barrier, so about half is lost.
  b.trap.depth *= 3.6e-6;
  const auto s = states_at(b, 1.0, 0.1e-3);
  RecaptureOptions gh;
  gh.order = 32;
  RecaptureOptions coarse;
  coarse.order = 1;
  const auto a = recapture_probability(b.m(), s, b.trap, optimal_displacement(0.1e-3), gh);
  const auto q = recapture_probability(b.m(), s, b.trap, optimal_displacement(0.1e-3), coarse);
  CHECK(a.method == IntegrationMethod::gauss_hermite);
  CHECK(q.method == IntegrationMethod::quasi_monte_carlo);
  CHECK(std::abs(a.recapture_probability - q.recapture_probability) < 2e-4);
  CHECK(a.recapture_probability > 0.1);
  CHECK(a.recapture_probability < 0.9);
}

TEST_CASE("recapture against direct sampling") {
  Base b;
  const double tau = 0.5e-3;
  const auto s = states_at(b, 2e6, tau);
  const double d = optimal_displacement(tau);
  const double p = recapture_probability(b.m(), s, b.trap, d).recapture_probability;
  std::mt19937_64 rng(99);
  std::normal_distribution<double> n01;
  const int n = 200000;
  int kept = 0;
  for (int i = 0; i < n; ++i) {
    Eigen::Vector3d q;
    double py = 0.0;
    for (int a = 0; a < 3; ++a) {
      const Eigen::LLT<Eigen::Matrix2d> llt(s[a].cov);
      const Eigen::Vector2d x = s[a].mean + llt.matrixL() * Eigen::Vector2d(n01(rng), n01(rng));
      q(a) = x(0);
      if (a == 1) py = x(1);
    }
    if (py * py <= 2.0 * b.m() * (b.trap.depth - optical_potential(q, b.trap, -d))) ++kept;
  }
  const double frac = static_cast<double>(kept) / n;
  const double se = std::sqrt(frac * (1.0 - frac) / n);
  CHECK(p > 0.01);
  CHECK(p < 0.99);
  CHECK(std::abs(frac - p) < 3.0 * se);
}

TEST_CASE("transverse kinetic energy guard") {
  Base b;
  AxisStates s = states_at(b, 1.0, 0.0);
  s[0].mean(1) = std::sqrt(2.0 * b.m() * 0.5 * b.trap.depth);
  CHECK_THROWS_AS(recapture_probability(b.m(), s, b.trap, 0.0), DomainError);
}

TEST_CASE("loss map") {
  Base b;
  LossMapOptions opt;
  const std::vector<double> taus{0.0, 0.25e-3, 0.5e-3, 1e-3};
  const std::vector<double> n0s{1.0, 1e3, 5e4};
  const auto map = loss_map(taus, n0s, b.env, b.trap, b.particle, opt);
  for (std::size_t r = 0; r < n0s.size(); ++r) {
    CHECK(map.loss(r, 0) < 1e-6);
    CHECK(map.purity(r, 0) == doctest::Approx(1.0 / (2.0 * n0s[r] + 1.0)));
    for (std::size_t c = 1; c < taus.size(); ++c) {
      CHECK(map.loss(r, c) >= map.loss(r, c - 1) - 2.0 * opt.recapture.tolerance);
      CHECK(map.purity(r, c) <= map.purity(r, c - 1));
    }
  }
  opt.threads = 3;
  const auto again = loss_map(taus, n0s, b.env, b.trap, b.particle, opt);
  CHECK(again.loss == map.loss);
  CHECK_THROWS_AS(loss_map({}, n0s, b.env, b.trap, b.particle), DomainError);
  CHECK_THROWS_AS(loss_map({1e-3, 0.0}, n0s, b.env, b.trap, b.particle), DomainError);
}

TEST_CASE("purity crossing") {
  const double omega = two_pi * 141.2e3;
  const double gd = 2.0e3;
  const auto t = purity_crossing_time(1.5, gd, omega, 0.1, 1.0);
  REQUIRE(t.has_value());
  CHECK(purity(1.5, gd, omega, *t) == doctest::Approx(0.1).epsilon(1e-9));
  CHECK_FALSE(purity_crossing_time(1.5, gd, omega, 0.5, 1.0).has_value());  // starts at 1/3
  CHECK_FALSE(purity_crossing_time(1.5, gd, omega, 0.1, 1e-9).has_value());
  CHECK_THROWS_AS(purity_crossing_time(1.5, gd, omega, 1.5, 1.0), DomainError);
}
