#include <cmath>
#include <vector>

#include "doctest.h"

#include "freefall/duffing.hpp"
#include "freefall/errors.hpp"
#include "freefall/pipeline.hpp"

using namespace freefall;

namespace {

constexpr double two_pi = 2.0 * constants::pi;

TrapParams beam() {
  TrapParams t;
  t.waist_x = 1.08e-6;
  t.waist_y = 0.85e-6;
  t.rayleigh_z = 2.50e-6;
  return t;
}

// Paraxial focused beam with elliptical waist, in units of U0:
// U = -(w0^2 / w(z)^2) exp(-2 x^2 / wx(z)^2 - 2 y^2 / wy(z)^2), w(z)^2 = w0^2 (1 + z^2 / zR^2).
double beam_potential(const TrapParams& t, double x, double y, double z) {
  const double s = 1.0 + z * z / (t.rayleigh_z * t.rayleigh_z);
  return -std::exp(-2.0 * x * x / (t.waist_x * t.waist_x * s) - 2.0 * y * y / (t.waist_y * t.waist_y * s)) / s;
}

// Fourth-order Taylor coefficients of the force along `row`, by finite differences of the
// potential: F_j = -m Omega_j^2 q_j (1 + sum_i xi_ji q_i^2).
Eigen::Vector3d finite_difference_row(const TrapParams& t, int j) {
  const Eigen::Vector3d w = t.waists();
  auto u = [&](int a, double sa, int b, double sb) {
    Eigen::Vector3d q = Eigen::Vector3d::Zero();
    q(a) += sa * w(a);
    q(b) += sb * w(b);
    return beam_potential(t, q(0), q(1), q(2));
  };
  const double h = 0.02;
  const double h2 = h * h;
  const double h4 = h2 * h2;
  // Curvature along j in units of U0 / w_j^2.
  const double ujj = (u(j, h, j, 0) - 2.0 * u(j, 0, j, 0) + u(j, -h, j, 0)) / h2;
  Eigen::Vector3d xi;
  for (int i = 0; i < 3; ++i) {
    if (i == j) {
      const double d4 = (u(j, 2 * h, j, 0) - 4.0 * u(j, h, j, 0) + 6.0 * u(j, 0, j, 0) - 4.0 * u(j, -h, j, 0) +
                         u(j, -2 * h, j, 0)) /
                        h4;
      xi(i) = d4 / (6.0 * ujj) / (w(j) * w(j));
    } else {
      const double d22 = (u(i, h, j, h) + u(i, h, j, -h) + u(i, -h, j, h) + u(i, -h, j, -h) - 2.0 * u(i, h, j, 0) -
                          2.0 * u(i, -h, j, 0) - 2.0 * u(i, 0, j, h) - 2.0 * u(i, 0, j, -h) + 4.0 * u(i, 0, j, 0)) /
                         h4;
      xi(i) = d22 / (2.0 * ujj) / (w(i) * w(i));
    }
  }
  return xi;
}

// Period of y'' = -Omega^2 y (1 + xi y^2) released from rest at amplitude a, by RK4 and
// linear interpolation of the zero crossings.
double duffing_ode_frequency(double omega, double xi, double a) {
  const double dt = two_pi / omega / 2000.0;
  double y = a, v = 0.0, t = 0.0;
  auto acc = [&](double q) { return -omega * omega * q * (1.0 + xi * q * q); };
  std::vector<double> crossings;
  while (crossings.size() < 21) {
    const double k1y = v, k1v = acc(y);
    const double k2y = v + 0.5 * dt * k1v, k2v = acc(y + 0.5 * dt * k1y);
    const double k3y = v + 0.5 * dt * k2v, k3v = acc(y + 0.5 * dt * k2y);
    const double k4y = v + dt * k3v, k4v = acc(y + dt * k3y);
    const double yn = y + dt / 6.0 * (k1y + 2.0 * k2y + 2.0 * k3y + k4y);
    v += dt / 6.0 * (k1v + 2.0 * k2v + 2.0 * k3v + k4v);
    if ((y > 0.0) != (yn > 0.0)) crossings.push_back(t + dt * y / (y - yn));
    y = yn;
    t += dt;
  }
  return two_pi * 10.0 / (crossings.back() - crossings.front());
}

}  // namespace

TEST_CASE("Gaussian tensor matches the expanded beam potential") {
  const TrapParams t = beam();
  const Eigen::Vector3d xi = gaussian_duffing_tensor(t);
  CHECK(xi(0) == doctest::Approx(-2.0 / (1.08e-6 * 1.08e-6)));
  CHECK(xi(1) == doctest::Approx(-2.78e12).epsilon(0.01));
  for (Axis row : all_axes) {
    const Eigen::Vector3d fd = finite_difference_row(t, index(row));
    const Eigen::Vector3d lib = duffing_row(row, xi);
    for (int i = 0; i < 3; ++i) {
      INFO("row " << axis_name(row) << " column " << i);
      CHECK(lib(i) == doctest::Approx(fd(i)).epsilon(2e-3));
    }
  }
}

TEST_CASE("Duffing frequency shift") {
  const double omega0 = two_pi * 141.2e3;
  const Eigen::Vector3d xi(0.0, -2.78e12, 0.0);
  const double w = duffing_frequency(omega0, Eigen::Vector3d(0.0, 1e-14, 0.0), Axis::y, xi);
  CHECK(w / omega0 - 1.0 == doctest::Approx(-2.09e-2).epsilon(0.01));

  // z couples to x with twice the coefficient that x couples to z.
  const Eigen::Vector3d xz(-1e12, 0.0, -3e11);
  const Eigen::Vector3d msq(1e-14, 0.0, 1e-14);
  CHECK(duffing_frequency(1.0, msq, Axis::z, xz) - 1.0 == doctest::Approx(0.75 * (-2e12 - 3e11) * 1e-14));
  CHECK(duffing_frequency(1.0, msq, Axis::x, xz) - 1.0 == doctest::Approx(0.75 * (-1e12 - 3e11) * 1e-14));
}

TEST_CASE("Duffing frequency agrees with the integrated oscillator") {
  const double omega = two_pi * 141.2e3;
  const double xi = -2.78e12;
  for (double a : {40e-9, 80e-9}) {
    // A released oscillation has <y^2> = a^2 / 2.
    const double predicted = duffing_frequency(omega, Eigen::Vector3d(0.0, 0.5 * a * a, 0.0), Axis::y,
                                               Eigen::Vector3d(0.0, xi, 0.0));
    const double shift = predicted - omega;
    const double measured = duffing_ode_frequency(omega, xi, a) - omega;
    // The rule is first order in xi a^2, so the remainder is a few percent of the shift.
    CHECK(measured == doctest::Approx(shift).epsilon(0.05));
  }
}

TEST_CASE("fit recovers the swept axis and flags the others") {
  const double omega0 = two_pi * 141.2e3;
  const Eigen::Vector3d truth(-1.71e12, -2.78e12, -3.2e11);
  const Eigen::Vector3d fixed(std::pow(20e-9, 2), 0.0, std::pow(60e-9, 2));
  std::vector<double> rms;
  for (int i = 0; i < 12; ++i) rms.push_back(20e-9 + 10e-9 * i);
  const auto pts = synthesize_duffing_points(truth, omega0, rms, fixed, Axis::y, 2e-4, 3);
  const auto fit = fit_duffing(pts, omega0, fixed);
  CHECK(fit.rank == 2);
  CHECK(fit.identifiable[1]);
  CHECK_FALSE(fit.identifiable[0]);
  CHECK_FALSE(fit.identifiable[2]);
  CHECK(std::isinf(fit.xi_se(0)));
  CHECK(std::abs(fit.xi(1) - truth(1)) < 4.0 * fit.xi_se(1));
  CHECK(fit.xi(1) == doctest::Approx(truth(1)).epsilon(0.05));
  // Only the combination fixed by the held axes is determined.
  CHECK(fit.xi(0) * fixed(0) + fit.xi(2) * fixed(2) ==
        doctest::Approx(truth(0) * fixed(0) + truth(2) * fixed(2)).epsilon(0.2));
  CHECK_FALSE(fit.hardening);
  CHECK(fit.waists()(1) == doctest::Approx(0.85e-6).epsilon(0.03));

  // Noise-free data: exact recovery of xi_y.
  const auto exact = fit_duffing(synthesize_duffing_points(truth, omega0, rms, fixed, Axis::y, 0.0, 3), omega0, fixed);
  CHECK(exact.xi(1) == doctest::Approx(truth(1)).epsilon(1e-8));
  CHECK(exact.rms_residual < 1e-6 * omega0);
}

TEST_CASE("swept axis with nothing held is fully identifiable only along its own row") {
  const double omega0 = two_pi * 41e3;
  const Eigen::Vector3d truth(-1.7e12, -2.8e12, -3.2e11);
  std::vector<double> rms{50e-9, 100e-9, 150e-9, 200e-9, 250e-9};
  const auto pts = synthesize_duffing_points(truth, omega0, rms, Eigen::Vector3d::Zero(), Axis::z, 0.0, 1);
  const auto fit = fit_duffing(pts, omega0, Eigen::Vector3d::Zero(), {Axis::z, 1e-6});
  CHECK(fit.rank == 1);
  CHECK(fit.identifiable[2]);
  CHECK(fit.xi(2) == doctest::Approx(truth(2)).epsilon(1e-8));
}

TEST_CASE("hardening and invalid input") {
  const double omega0 = two_pi * 100e3;
  const Eigen::Vector3d truth(0.0, 1e12, 0.0);
  std::vector<double> rms{20e-9, 40e-9, 60e-9, 80e-9, 100e-9};
  const auto fit = fit_duffing(synthesize_duffing_points(truth, omega0, rms, Eigen::Vector3d::Zero(), Axis::y, 0.0, 1),
                               omega0, Eigen::Vector3d::Zero());
  CHECK(fit.hardening);
  CHECK(std::isnan(fit.waists()(1)));

  const std::vector<DuffingPoint> flat(6, DuffingPoint{50e-9, omega0});
  CHECK_THROWS_AS(fit_duffing(flat, omega0, Eigen::Vector3d::Zero()), DomainError);
  CHECK_THROWS_AS(fit_duffing({{1e-8, 1.0}, {2e-8, 1.0}}, omega0, Eigen::Vector3d::Zero()), DomainError);
  std::vector<DuffingPoint> bad(rms.size());
  for (std::size_t i = 0; i < rms.size(); ++i) bad[i] = {rms[i], omega0};
  bad[2].omega = -1.0;
  CHECK_THROWS_AS(fit_duffing(bad, omega0, Eigen::Vector3d::Zero()), DomainError);
  CHECK_THROWS_AS(fit_duffing(flat, 0.0, Eigen::Vector3d::Zero()), DomainError);
}
