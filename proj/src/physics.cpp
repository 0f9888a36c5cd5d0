#include "freefall/physics.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <type_traits>

namespace freefall {

namespace {

void require_positive(double v, const char* what) {
  if (!(v > 0.0) || !std::isfinite(v)) {
    throw DomainError(std::string(what) + " must be positive and finite, got " +
                      std::to_string(v));
  }
}

void require_non_negative(double v, const char* what) {
  if (!(v >= 0.0) || !std::isfinite(v)) {
    throw DomainError(std::string(what) + " must be non-negative, got " + std::to_string(v));
  }
}

}  // namespace

ParticleParams::ParticleParams(double radius, double density, double permittivity_rel)
    : radius_(radius),
      density_(density),
      mass_(mass_from_radius(radius, density)),
      permittivity_rel_(permittivity_rel) {
  require_positive(permittivity_rel, "relative permittivity");
}

void TrapParams::validate() const {
  require_positive(waist_x, "waist_x");
  require_positive(waist_y, "waist_y");
  require_positive(rayleigh_z, "rayleigh_z");
  require_non_negative(power, "trap power");
  for (int j = 0; j < 3; ++j) require_positive(omega(j), "trap frequency");
  require_non_negative(depth, "trap depth");
}

EnvironmentParams EnvironmentParams::from_gas(const ParticleParams& particle, double pressure_pa,
                                              double gas_temperature, double molar_mass) {
  EnvironmentParams env;
  env.pressure = pressure_pa;
  env.gas_temperature = gas_temperature;
  env.molar_mass = molar_mass;
  env.damping_gamma = gas_damping_rate(particle, pressure_pa, gas_temperature, molar_mass);
  return env;
}

EnvironmentParams EnvironmentParams::with_pressure(double pressure_pa) const {
  require_non_negative(pressure_pa, "pressure");
  EnvironmentParams env = *this;
  env.pressure = pressure_pa;
  if (pressure > 0.0) {
    env.damping_gamma = damping_gamma * (pressure_pa / pressure);
  } else if (pressure_pa > 0.0 && damping_gamma == 0.0) {
    throw DomainError("cannot rescale damping from zero pressure");
  }
  return env;
}

void EnvironmentParams::validate() const {
  require_non_negative(pressure, "pressure");
  require_positive(gas_temperature, "gas temperature");
  require_positive(molar_mass, "molar mass");
  require_non_negative(damping_gamma, "damping rate");
}

double half_occupation(const InitialCondition& init, double omega) {
  require_positive(omega, "mode frequency");
  return std::visit(
      [omega](const auto& c) -> double {
        using T = std::decay_t<decltype(c)>;
        if constexpr (std::is_same_v<T, Occupation>) {
          require_non_negative(c.n, "occupation");
          return c.n + 0.5;
        } else {
          require_positive(c.kelvin, "temperature");
          return constants::k_B * c.kelvin / (constants::hbar * omega);
        }
      },
      init);
}

double temperature_of(const InitialCondition& init, double omega) {
  return half_occupation(init, omega) * constants::hbar * omega / constants::k_B;
}

Protocol Protocol::from_detuning(double tau, double detuning_hz, double cf_m_per_hz,
                                 const std::array<InitialCondition, 3>& init) {
  Protocol p;
  p.tau = tau;
  p.detuning = detuning_hz;
  p.cf = cf_m_per_hz;
  p.displacement = cf_m_per_hz * detuning_hz;
  p.init = init;
  p.validate();
  return p;
}

void Protocol::validate() const {
  require_non_negative(tau, "free-fall time");
  if (detuning && cf) {
    const double d = *cf * *detuning;
    if (std::abs(d - displacement) > 1e-12 * std::max(std::abs(d), 1e-15)) {
      throw DomainError("displacement inconsistent with detuning * c_f");
    }
  }
}

double mass_from_radius(double radius, double density) {
  require_positive(radius, "radius");
  require_positive(density, "density");
  return 4.0 / 3.0 * constants::pi * radius * radius * radius * density;
}

double gas_damping_rate(const ParticleParams& particle, double pressure_pa, double gas_temperature,
                        double molar_mass) {
  require_non_negative(pressure_pa, "pressure");
  require_positive(gas_temperature, "gas temperature");
  require_positive(molar_mass, "molar mass");
  const double prefactor = constants::epstein_factor * 9.0 /
                           (std::sqrt(2.0 * constants::pi) * particle.density() * particle.radius());
  const double thermal = std::sqrt(molar_mass / (constants::N_A * constants::k_B * gas_temperature));
  return prefactor * thermal * pressure_pa;
}

GaussianState thermal_state(double mass, double omega, const InitialCondition& init) {
  require_positive(mass, "mass");
  const double v0 = half_occupation(init, omega);
  const double var_q = constants::hbar / (mass * omega) * v0;
  const double var_p = constants::hbar * mass * omega * v0;
  return GaussianState::from_moments(0.0, 0.0, var_q, var_p, 0.0);
}

}  // namespace freefall
