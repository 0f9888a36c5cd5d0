#pragma once

#include <array>
#include <optional>
#include <variant>

#include <Eigen/Core>

#include "freefall/constants.hpp"
#include "freefall/errors.hpp"

namespace freefall {

enum class Axis : int { x = 0, y = 1, z = 2 };

inline constexpr std::array<Axis, 3> all_axes{Axis::x, Axis::y, Axis::z};

constexpr int index(Axis a) noexcept { return static_cast<int>(a); }
constexpr char axis_name(Axis a) noexcept { return "xyz"[index(a)]; }

constexpr double mbar_to_pa(double mbar) noexcept { return mbar * constants::pascal_per_mbar; }
constexpr double pa_to_mbar(double pa) noexcept { return pa / constants::pascal_per_mbar; }

/// Homogeneous dielectric sphere. Mass is derived from radius and density on construction.
class ParticleParams {
 public:
  ParticleParams(double radius, double density,
                 double permittivity_rel = constants::permittivity_silica);

  double radius() const noexcept { return radius_; }
  double density() const noexcept { return density_; }
  double mass() const noexcept { return mass_; }
  double permittivity_rel() const noexcept { return permittivity_rel_; }

 private:
  double radius_;
  double density_;
  double mass_;
  double permittivity_rel_;
};

/// Gaussian-beam tweezer. `depth` is U0 in joules, either set explicitly or
/// derived from the optics with `with_derived_depth` (energetics.hpp).
struct TrapParams {
  double waist_x = 0.6e-6;
  double waist_y = 0.6e-6;
  double rayleigh_z = 2.3e-6;
  double power = 0.130;
  Eigen::Vector3d omega = Eigen::Vector3d::Zero();  // angular frequencies (x, y, z)
  double depth = 0.0;

  /// (w_x, w_y, z_R); the third entry plays the role of a waist for the z axis.
  Eigen::Vector3d waists() const { return {waist_x, waist_y, rayleigh_z}; }
  void validate() const;
};

/// Background gas. Damping is linear in pressure at fixed gas and particle.
struct EnvironmentParams {
  double pressure = 0.0;         // Pa
  double gas_temperature = 300.0;  // K
  double molar_mass = constants::molar_mass_air;
  double damping_gamma = 0.0;    // rad / s

  /// Derives the damping from the Epstein drag of `particle`.
  static EnvironmentParams from_gas(const ParticleParams& particle, double pressure_pa,
                                    double gas_temperature,
                                    double molar_mass = constants::molar_mass_air);

  /// Same gas, different pressure; damping rescaled linearly.
  EnvironmentParams with_pressure(double pressure_pa) const;
  void validate() const;
};

/// Per-axis Gaussian phase-space state: mean (q, p) and symmetric covariance.
template <typename Scalar>
struct GaussianState1D {
  using Vector = Eigen::Matrix<Scalar, 2, 1>;
  using Matrix = Eigen::Matrix<Scalar, 2, 2>;

  Vector mean = Vector::Zero();
  Matrix cov = Matrix::Zero();

  static GaussianState1D from_moments(Scalar mean_q, Scalar mean_p, Scalar var_q, Scalar var_p,
                                      Scalar cov_qp) {
    GaussianState1D s;
    s.mean << mean_q, mean_p;
    s.cov << var_q, cov_qp, cov_qp, var_p;
    return s;
  }

  Scalar mean_q() const { return mean(0); }
  Scalar mean_p() const { return mean(1); }
  Scalar var_q() const { return cov(0, 0); }
  Scalar var_p() const { return cov(1, 1); }
  Scalar cov_qp() const { return cov(0, 1); }
  Scalar det() const { return cov(0, 0) * cov(1, 1) - cov(0, 1) * cov(1, 0); }

  /// Positive semidefinite up to a tolerance relative to the diagonal scale.
  bool is_psd(Scalar rel_tol = Scalar(1e-12)) const {
    using std::abs;
    using std::sqrt;
    const Scalar scale = sqrt(abs(cov(0, 0) * cov(1, 1)));
    return cov(0, 0) >= -rel_tol * abs(cov(0, 0)) && cov(1, 1) >= -rel_tol * abs(cov(1, 1)) &&
           det() >= -rel_tol * scale * scale * Scalar(16);
  }
};

using GaussianState = GaussianState1D<double>;
using AxisStates = std::array<GaussianState, 3>;

/// Mean phonon occupation n0 (strong type).
struct Occupation {
  double n = 0.0;
};

/// Effective mode temperature T0 in kelvin (strong type).
struct Temperature {
  double kelvin = 0.0;
};

using InitialCondition = std::variant<Occupation, Temperature>;

/// n0 + 1/2 = k_B T / (hbar Omega). No Bose-Einstein form.
double half_occupation(const InitialCondition& init, double omega);
double temperature_of(const InitialCondition& init, double omega);

struct Protocol {
  double tau = 0.0;           // free-fall time [s]
  double displacement = 0.0;  // trap-to-trap distance d along y [m]
  std::optional<double> detuning;  // AOM detuning [Hz] when d was specified that way
  std::optional<double> cf;        // detuning-to-displacement factor [m / Hz]
  std::array<InitialCondition, 3> init{Temperature{12.9e-3}, Temperature{34.1e-3},
                                       Temperature{42e-3}};

  static Protocol from_detuning(double tau, double detuning_hz, double cf_m_per_hz,
                                const std::array<InitialCondition, 3>& init);
  void validate() const;
};

/// m = (4/3) pi R^3 rho.
double mass_from_radius(double radius, double density);

/// Epstein damping: gamma = 0.619 * 9 / (sqrt(2 pi) rho R) * sqrt(M / (N_A k_B T)) * P.
double gas_damping_rate(const ParticleParams& particle, double pressure_pa,
                        double gas_temperature, double molar_mass = constants::molar_mass_air);
inline double gas_damping_rate(const ParticleParams& particle, const EnvironmentParams& env) {
  return gas_damping_rate(particle, env.pressure, env.gas_temperature, env.molar_mass);
}

/// Centered thermal state of a mode at `omega`; n0 = 0 is the ground state.
GaussianState thermal_state(double mass, double omega, const InitialCondition& init);

}  // namespace freefall
