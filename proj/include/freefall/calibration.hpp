#pragma once

#include <vector>

#include "freefall/constants.hpp"
#include "freefall/peak_fit.hpp"
#include "freefall/spectrum.hpp"

namespace freefall {

/// Detector gain with s = c q, stored in V/m. Both directions are named to avoid inversion.
class CalibrationFactor {
 public:
  static CalibrationFactor from_volts_per_meter(double c);
  static CalibrationFactor from_meters_per_volt(double k);

  double volts_per_meter() const noexcept { return c_; }
  double meters_per_volt() const noexcept { return 1.0 / c_; }
  double to_meters(double volts) const noexcept { return volts / c_; }
  double to_volts(double meters) const noexcept { return meters * c_; }

 private:
  explicit CalibrationFactor(double c) : c_(c) {}
  double c_;
};

/// Equipartition: c^2 = area m Omega^2 / (k_B T_gas), area in V^2.
CalibrationFactor calibrate(double area, double mass, double omega, double gas_temperature);
std::vector<CalibrationFactor> calibrate(const PeakFit& fit, double mass, double gas_temperature);

/// Epstein drag inverted: R = 0.619 * 9 / (sqrt(2 pi) rho) * sqrt(M / (N_A k_B T)) * P / gamma.
double radius_from_damping(double gamma, double pressure_pa, double gas_temperature,
                           double molar_mass = constants::molar_mass_air,
                           double density = constants::density_silica);

/// T0 = T_gas * area_feedback / area_reference.
double effective_temperature(double area_feedback, double area_reference, double gas_temperature);

/// Fits the same peaks in both spectra and returns T0 per guessed mode. Throws if a peak is not
/// resolved (fitted area not at least three standard errors) in either spectrum.
std::vector<double> effective_temperature(const Spectrum& feedback, const Spectrum& reference,
                                          const std::vector<PeakGuess>& feedback_guesses,
                                          const std::vector<PeakGuess>& reference_guesses,
                                          double gas_temperature,
                                          const PeakFitOptions& options = {});

}  // namespace freefall
