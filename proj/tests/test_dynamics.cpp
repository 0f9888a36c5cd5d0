#include <cmath>
#include <random>

#include <Eigen/Dense>
#include <unsupported/Eigen/MatrixFunctions>

#include "doctest.h"

#include "freefall/dynamics.hpp"
#include "freefall/physics.hpp"

using namespace freefall;

namespace {

constexpr double two_pi = 2.0 * constants::pi;

// Van Loan: the lower-right / upper-right blocks of exp([[-A, W], [0, A^T]] t) give the
// transition matrix and the accumulated noise covariance without any closed form.
struct VanLoan {
  Eigen::Matrix2d phi;
  Eigen::Matrix2d noise;
};

VanLoan van_loan(double t, double mass, double gamma, double diffusion) {
  Eigen::Matrix2d a;
  a << 0.0, 1.0 / mass, 0.0, -gamma;
  Eigen::Matrix2d w = Eigen::Matrix2d::Zero();
  w(1, 1) = diffusion;
  Eigen::Matrix4d m = Eigen::Matrix4d::Zero();
  m.topLeftCorner<2, 2>() = -a;
  m.topRightCorner<2, 2>() = w;
  m.bottomRightCorner<2, 2>() = a.transpose();
  const Eigen::Matrix4d e = (m * t).exp();
  VanLoan out;
  out.phi = e.bottomRightCorner<2, 2>().transpose();
  out.noise = out.phi * e.topRightCorner<2, 2>();
  return out;
}

// Independent Epstein form: gamma = (1 + pi/8) sqrt(8 m_gas / (pi k_B T)) P / (rho R).
double epstein_gamma(double radius, double density, double pressure, double temperature,
                     double molar_mass) {
  const double m_gas = molar_mass / constants::N_A;
  return (1.0 + constants::pi / 8.0) * std::sqrt(8.0 * m_gas / (constants::pi * constants::k_B * temperature)) *
         pressure / (density * radius);
}

}  // namespace

TEST_CASE("particle mass") {
  CHECK(mass_from_radius(60e-9, 2200.0) == doctest::Approx(1.99e-18).epsilon(0.005));
  CHECK(mass_from_radius(57e-9, 2200.0) == doctest::Approx(1.71e-18).epsilon(0.005));
  CHECK(mass_from_radius(1e-15, 2200.0) < 1e-40);
  CHECK_THROWS_AS(mass_from_radius(0.0, 2200.0), DomainError);
  CHECK_THROWS_AS(mass_from_radius(60e-9, -1.0), DomainError);
  CHECK_THROWS_AS(ParticleParams(-1e-9, 2200.0), DomainError);
}

TEST_CASE("gas damping against an independent Epstein form") {
  const ParticleParams p(59e-9, 2200.0);
  for (double mbar : {3e-6, 1e-2, 9.6}) {
    const double expect = epstein_gamma(59e-9, 2200.0, mbar_to_pa(mbar), 300.0, 28.97e-3);
    CHECK(gas_damping_rate(p, mbar_to_pa(mbar), 300.0) == doctest::Approx(expect).epsilon(1e-3));
  }
  // Table value 9.43(4) kHz; +-10% for the fit.
  CHECK(gas_damping_rate(p, mbar_to_pa(9.6), 300.0) / two_pi ==
        doctest::Approx(9.43e3).epsilon(0.10));
  CHECK(gas_damping_rate(p, 0.0, 300.0) == 0.0);
  const double base = gas_damping_rate(p, mbar_to_pa(3e-6), 300.0);
  CHECK(base == doctest::Approx(gas_damping_rate(p, mbar_to_pa(9.6), 300.0) * 3e-6 / 9.6));
  CHECK(base / two_pi == doctest::Approx(2.9e-3).epsilon(0.05));

  const auto env = EnvironmentParams::from_gas(p, mbar_to_pa(9.6), 300.0);
  CHECK(env.with_pressure(mbar_to_pa(3e-6)).damping_gamma == doctest::Approx(base));
}

TEST_CASE("thermal states") {
  const double m = 1.9e-18;
  const double omega = two_pi * 141.2e3;
  const auto s = thermal_state(m, omega, Temperature{34.1e-3});
  CHECK(std::sqrt(s.var_q()) == doctest::Approx(0.56e-9).epsilon(0.02));
  CHECK(std::sqrt(s.var_p()) == doctest::Approx(std::sqrt(m * constants::k_B * 34.1e-3)));
  CHECK(s.cov_qp() == 0.0);

  const auto g = thermal_state(m, omega, Occupation{0.0});
  CHECK(g.var_q() * g.var_p() == doctest::Approx(0.25 * constants::hbar * constants::hbar));

  // Both conventions agree when T and n0 describe the same state.
  const double v0 = half_occupation(Temperature{34.1e-3}, omega);
  const auto t = thermal_state(m, omega, Occupation{v0 - 0.5});
  CHECK(t.var_q() == doctest::Approx(s.var_q()));
  CHECK(temperature_of(Occupation{v0 - 0.5}, omega) == doctest::Approx(34.1e-3));
  CHECK_THROWS_AS(thermal_state(m, omega, Occupation{-1.0}), DomainError);
}

TEST_CASE("transition matrix") {
  const double m = 1.9e-18;
  CHECK(transition_matrix(0.0, m, 0.3).isIdentity());
  const auto ballistic = transition_matrix(2.0e-4, m, 0.0);
  CHECK(ballistic(0, 1) == doctest::Approx(2.0e-4 / m));
  CHECK(ballistic(1, 1) == 1.0);

  const double t = 0.25e-3;
  const double gamma = 0.0176;
  CHECK(gamma * t == doctest::Approx(4.4e-6));
  CHECK(transition_matrix(t, m, gamma)(0, 1) == doctest::Approx(t / m * (1.0 - gamma * t / 2.0)).epsilon(1e-10));

  for (double gt : {1e-9, 1e-3, 0.4, 2.0, 7.0}) {
    const VanLoan vl = van_loan(1.0, 1.0, gt, 0.0);
    CHECK((transition_matrix(1.0, 1.0, gt) - vl.phi).norm() < 1e-12);
  }
  CHECK_THROWS_AS(transition_matrix(-1.0, m, 0.0), DomainError);
  CHECK_THROWS_AS(transition_matrix(1.0, -m, 0.0), DomainError);
}

TEST_CASE("kernels are continuous where the series hands over to the closed form") {
  for (double x : {1e-8, 0.1, 1.0}) {
    const double lo = x * (1.0 - 1e-9);
    const double hi = x * (1.0 + 1e-9);
    CHECK(detail::relax(lo) == doctest::Approx(detail::relax(hi)).epsilon(1e-9));
    CHECK(detail::drift_kernel(lo) == doctest::Approx(detail::drift_kernel(hi)).epsilon(1e-9));
    CHECK(detail::noise_qq_kernel(lo) == doctest::Approx(detail::noise_qq_kernel(hi)).epsilon(1e-8));
    CHECK(detail::noise_qp_kernel(lo) == doctest::Approx(detail::noise_qp_kernel(hi)).epsilon(1e-8));
  }
  CHECK(detail::drift_kernel(0.0) == doctest::Approx(-0.5));
  CHECK(detail::noise_qq_kernel(0.0) == doctest::Approx(1.0 / 3.0));
  CHECK(detail::noise_qp_kernel(0.0) == doctest::Approx(0.5));
}

TEST_CASE("mean follows gravity") {
  const double m = 2.0e-18;
  GaussianState s;
  const auto y = propagate_mean(s, 0.25e-3, Axis::y, m, 0.0, 9.806);
  CHECK(y(0) == doctest::Approx(-306.4e-9).epsilon(1e-3));
  CHECK(y(1) == doctest::Approx(-4.9e-21).epsilon(1e-3));
  const auto x = propagate_mean(s, 0.25e-3, Axis::x, m, 0.0, 9.806);
  CHECK(x(0) == 0.0);
  CHECK(x(1) == 0.0);

  // Damped mean against RK4 of q' = p/m, p' = -m g - gamma p.
  for (double gamma : {1e-9, 3.0e3, 4.0e4}) {
    s.mean << 2e-9, 3e-22;
    const double t_end = 1e-4;
    const int steps = 20000;
    const double h = t_end / steps;
    Eigen::Vector2d x0 = s.mean;
    auto f = [&](const Eigen::Vector2d& v) {
      return Eigen::Vector2d(v(1) / m, -m * 9.806 - gamma * v(1));
    };
    for (int k = 0; k < steps; ++k) {
      const Eigen::Vector2d k1 = f(x0);
      const Eigen::Vector2d k2 = f(x0 + 0.5 * h * k1);
      const Eigen::Vector2d k3 = f(x0 + 0.5 * h * k2);
      const Eigen::Vector2d k4 = f(x0 + h * k3);
      x0 += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    }
    const auto got = propagate_mean(s, t_end, Axis::y, m, gamma, 9.806);
    CHECK(got(0) == doctest::Approx(x0(0)).epsilon(1e-9));
    CHECK(got(1) == doctest::Approx(x0(1)).epsilon(1e-9));
  }
}

TEST_CASE("covariance against Van Loan") {
  // Unit mass, unit time: the kernels see every gamma t regime.
  const Eigen::Matrix2d cov0 = (Eigen::Matrix2d() << 0.7, 0.1, 0.1, 0.4).finished();
  // exp(-A t) grows like e^{gamma t}, so the oracle itself is only trusted up to gamma t ~ 5.
  for (double gt : {0.0, 1e-7, 1e-3, 0.3, 0.99, 1.01, 5.0}) {
    const double temperature = 1.0 / constants::k_B;  // diffusion 2 gamma
    const auto got = propagate_covariance(cov0, 1.0, 1.0, gt, temperature);
    const VanLoan vl = van_loan(1.0, 1.0, gt, 2.0 * gt);
    const Eigen::Matrix2d expect = vl.phi * cov0 * vl.phi.transpose() + vl.noise;
    INFO("gamma t = " << gt);
    CHECK((got - expect).cwiseAbs().maxCoeff() < 1e-11 * expect.cwiseAbs().maxCoeff());
  }
}

TEST_CASE("overdamped covariance") {
  // gamma t = 40, m = kT = t = 1: V_p relaxes to kT m; V_q = (Phi S0 Phi^T)_qq + 2 gamma (1 - 2/x + 1/2x) / x^2.
  const Eigen::Matrix2d cov0 = (Eigen::Matrix2d() << 0.7, 0.1, 0.1, 0.4).finished();
  const auto c = propagate_covariance(cov0, 1.0, 1.0, 40.0, 1.0 / constants::k_B);
  const double phi01 = 1.0 / 40.0;
  CHECK(c(0, 0) == doctest::Approx(0.7 + 2.0 * phi01 * 0.1 + phi01 * phi01 * 0.4 +
                                   80.0 * (1.0 - 2.0 / 40.0 + 1.0 / 80.0) / 1600.0));
  CHECK(c(1, 1) == doctest::Approx(1.0));
}

TEST_CASE("ballistic covariance") {
  const double m = 1.9e-18;
  const double t = 3e-4;
  const Eigen::Matrix2d c0 = (Eigen::Matrix2d() << 2e-19, 0.0, 0.0, 5e-43).finished();
  const auto c = propagate_covariance(c0, t, m, 0.0, 300.0);
  CHECK(c(0, 0) == doctest::Approx(2e-19 + 5e-43 * t * t / (m * m)));
  CHECK(c(1, 1) == doctest::Approx(5e-43));
  CHECK(c(0, 1) == doctest::Approx(5e-43 * t / m));
  CHECK(propagate_covariance(c0, 0.0, m, 0.02, 300.0).isApprox(c0));
  const Eigen::Matrix2d bad = (Eigen::Matrix2d() << 1.0, 2.0, 2.0, 1.0).finished();
  CHECK_THROWS_AS(propagate_covariance(bad, t, m, 0.0, 300.0), DomainError);
}

TEST_CASE("closed form against first-order reheating at base conditions") {
  const ParticleParams p(59e-9, 2200.0);
  const double m = p.mass();
  const double omega = two_pi * 141.2e3;
  const auto env = EnvironmentParams::from_gas(p, mbar_to_pa(3e-6), 300.0);
  const auto s0 = thermal_state(m, omega, Temperature{34.1e-3});
  const auto rates = decoherence_rates(env.damping_gamma, 300.0, omega, Temperature{34.1e-3});
  const double t = 0.25e-3;
  const auto exact = propagate_covariance(s0, t, m, env.damping_gamma, 300.0);
  const auto first = first_order_covariance(s0.var_q(), s0.var_p(), omega, rates.Gamma_reheat, t);
  CHECK(exact.var_q() / s0.var_q() == doctest::Approx(first.var_q() / s0.var_q()).epsilon(0.005));
  CHECK(rates.Gamma_reheat / two_pi == doctest::Approx(24.0).epsilon(0.1));
}

TEST_CASE("property: composition and positivity") {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 200; ++trial) {
    const double m = 0.5 + u(rng);
    const double gamma = std::pow(10.0, -6.0 + 7.0 * u(rng));
    const double temperature = 0.2 / constants::k_B * u(rng);
    const double vq = 0.1 + u(rng);
    const double vp = 0.1 + u(rng);
    const double c = (2.0 * u(rng) - 1.0) * 0.9 * std::sqrt(vq * vp);
    const Eigen::Matrix2d c0 = (Eigen::Matrix2d() << vq, c, c, vp).finished();
    const double t1 = 2.0 * u(rng);
    const double t2 = 2.0 * u(rng);
    const auto direct = propagate_covariance(c0, t1 + t2, m, gamma, temperature);
    const auto stepped = propagate_covariance(propagate_covariance(c0, t1, m, gamma, temperature),
                                              t2, m, gamma, temperature);
    CHECK((direct - stepped).cwiseAbs().maxCoeff() < 1e-10 * direct.cwiseAbs().maxCoeff());
    GaussianState s;
    s.cov = direct;
    CHECK(s.is_psd());
    // Noise never shrinks the state below the deterministic map.
    const Eigen::Matrix2d phi = transition_matrix(t1 + t2, m, gamma);
    const Eigen::Matrix2d excess = direct - phi * c0 * phi.transpose();
    CHECK(excess(0, 0) >= -1e-14);
    CHECK(excess.determinant() >= -1e-14);
  }
}

TEST_CASE("expansion law") {
  const double omega = two_pi * 141.2e3;
  CHECK(expansion_q(0.0, omega, 10.0) == 1.0);
  CHECK(expansion_q(0.25e-3, omega, two_pi * 24.0) == doctest::Approx(225.0).epsilon(0.01));
  CHECK(expansion_q(1.9e-3, omega, 0.0) == doctest::Approx(1680.0).epsilon(0.01));

  GaussianState s0 = GaussianState::from_moments(0, 0, 2.0, 3.0, 0.0);
  const auto same = expansion_factors(s0, s0);
  CHECK(same.xi_q == doctest::Approx(1.0));
  CHECK(same.xi_p == doctest::Approx(1.0));
  GaussianState st = GaussianState::from_moments(0, 0, 4.0 * 2.0, 0.25 * 3.0, 0.0);
  const auto f = expansion_factors(s0, st);
  CHECK(f.xi_q == doctest::Approx(2.0));
  CHECK(f.xi_p == doctest::Approx(0.5));
  CHECK_THROWS_AS(expansion_factors(GaussianState{}, st), DomainError);

  // Propagated thermal state: semi-axes from the exact covariance follow the law.
  const double m = 1.9e-18;
  const auto th = thermal_state(m, omega, Temperature{34.1e-3});
  const auto later = propagate_covariance(th, 1.9e-3, m, 0.0, 300.0);
  CHECK(expansion_factors(th, later).xi_q == doctest::Approx(expansion_q(1.9e-3, omega, 0.0)).epsilon(1e-6));
  CHECK(expansion_factors(th, later).xi_p == doctest::Approx(1.0 / expansion_q(1.9e-3, omega, 0.0)).epsilon(1e-6));
}

TEST_CASE("purity") {
  const double omega = two_pi * 141.2e3;
  for (double n0 : {0.0, 1.0, 7.5, 5e3}) {
    CHECK(purity(n0 + 0.5, 1e5, omega, 0.0) == doctest::Approx(1.0 / (2.0 * n0 + 1.0)));
  }
  CHECK(purity(0.5, 0.0, omega, 1e-3) == doctest::Approx(1.0));
  CHECK_THROWS_AS(purity(0.2, 1.0, omega, 0.0), DomainError);

  // Same number from the determinant of a thermal covariance.
  const double m = 1.9e-18;
  const auto s = thermal_state(m, omega, Occupation{1.0});
  CHECK(purity_from_covariance(s.cov) == doctest::Approx(1.0 / 3.0));

  // Without damping of the mean state the closed form tracks the exact determinant as gamma -> 0.
  const double gamma = 1e-6;
  const double temperature = 300.0;
  const double gd = gamma * constants::k_B * temperature / (constants::hbar * omega);
  for (double t : {1e-5, 1e-4, 1e-3}) {
    const auto st = propagate_covariance(s, t, m, gamma, temperature);
    CHECK(purity_from_covariance(st.cov) == doctest::Approx(purity(1.5, gd, omega, t)).epsilon(1e-4));
  }

  // P is non-increasing in t.
  double prev = 1.0;
  for (double t = 0.0; t < 5e-3; t += 1e-4) {
    const double p = purity(1.5, 40.0, omega, t);
    CHECK(p <= prev);
    prev = p;
  }
}

TEST_CASE("coherence length") {
  CHECK(coherence_length(0.5, 1e-9) == doctest::Approx(1.414e-9).epsilon(1e-3));
  const double qzpf = 1e-12;
  CHECK(coherence_length(1.0, qzpf / std::sqrt(2.0)) == doctest::Approx(2.0 * qzpf));
  CHECK(coherence_length(0.1, 15.9e-9) == doctest::Approx(4.5e-9).epsilon(0.01));
  CHECK_THROWS_AS(coherence_length(1.5, 1e-9), DomainError);
  CHECK_THROWS_AS(coherence_length(0.5, 0.0), DomainError);
}
