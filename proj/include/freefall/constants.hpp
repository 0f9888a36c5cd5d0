#pragma once

#include <numbers>

namespace freefall::constants {

// CODATA 2018 exact / recommended values, SI units.
inline constexpr double hbar = 1.054571817e-34;      // J s
inline constexpr double k_B = 1.380649e-23;          // J / K
inline constexpr double N_A = 6.02214076e23;         // 1 / mol
inline constexpr double speed_of_light = 299792458.0;  // m / s
inline constexpr double pi = std::numbers::pi;

// Local gravitational acceleration quoted for the experiment.
inline constexpr double g_default = 9.806;  // m / s^2

inline constexpr double pascal_per_mbar = 100.0;
inline constexpr double molar_mass_air = 28.97e-3;  // kg / mol
inline constexpr double density_silica = 2200.0;    // kg / m^3
inline constexpr double permittivity_silica = 2.1;

// Epstein drag prefactor (diffuse reflection, free molecular flow).
inline constexpr double epstein_factor = 0.619;

}  // namespace freefall::constants
