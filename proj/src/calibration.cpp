#include "freefall/calibration.hpp"

#include <cmath>

#include "freefall/errors.hpp"

namespace freefall {

CalibrationFactor CalibrationFactor::from_volts_per_meter(double c) {
  if (!(c > 0.0) || !std::isfinite(c)) throw DomainError("calibration factor must be positive");
  return CalibrationFactor(c);
}

CalibrationFactor CalibrationFactor::from_meters_per_volt(double k) {
  if (!(k > 0.0) || !std::isfinite(k)) throw DomainError("calibration factor must be positive");
  return CalibrationFactor(1.0 / k);
}

CalibrationFactor calibrate(double area, double mass, double omega, double gas_temperature) {
  if (!(area > 0.0 && mass > 0.0 && omega > 0.0 && gas_temperature > 0.0)) {
    throw DomainError("calibration needs positive area, mass, frequency and temperature");
  }
  return CalibrationFactor::from_volts_per_meter(
      std::sqrt(area * mass * omega * omega / (constants::k_B * gas_temperature)));
}

std::vector<CalibrationFactor> calibrate(const PeakFit& fit, double mass, double gas_temperature) {
  std::vector<CalibrationFactor> out;
  for (const auto& p : fit.peaks) out.push_back(calibrate(p.area, mass, p.omega, gas_temperature));
  return out;
}

double radius_from_damping(double gamma, double pressure_pa, double gas_temperature,
                           double molar_mass, double density) {
  if (!(gamma > 0.0)) throw DomainError("damping must be positive");
  if (!(pressure_pa >= 0.0 && gas_temperature > 0.0 && molar_mass > 0.0 && density > 0.0)) {
    throw DomainError("gas parameters must be positive");
  }
  return constants::epstein_factor * 9.0 / (std::sqrt(2.0 * constants::pi) * density) *
         std::sqrt(molar_mass / (constants::N_A * constants::k_B * gas_temperature)) *
         pressure_pa / gamma;
}

double effective_temperature(double area_feedback, double area_reference, double gas_temperature) {
  if (!(area_feedback >= 0.0 && area_reference > 0.0 && gas_temperature > 0.0)) {
    throw DomainError("effective temperature needs positive reference area and temperature");
  }
  return gas_temperature * area_feedback / area_reference;
}

std::vector<double> effective_temperature(const Spectrum& feedback, const Spectrum& reference,
                                          const std::vector<PeakGuess>& feedback_guesses,
                                          const std::vector<PeakGuess>& reference_guesses,
                                          double gas_temperature, const PeakFitOptions& options) {
  if (feedback_guesses.size() != reference_guesses.size()) {
    throw DomainError("feedback and reference guesses must list the same modes");
  }
  const PeakFit fb = fit_psd_peaks(feedback, feedback_guesses, options);
  const PeakFit ref = fit_psd_peaks(reference, reference_guesses, options);
  std::vector<double> out;
  for (std::size_t k = 0; k < fb.peaks.size(); ++k) {
    for (const PeakEstimate* p : {&fb.peaks[k], &ref.peaks[k]}) {
      if (!(p->area > 3.0 * p->area_se)) throw DomainError("peak not resolved above the floor");
    }
    out.push_back(effective_temperature(fb.peaks[k].area, ref.peaks[k].area, gas_temperature));
  }
  return out;
}

}  // namespace freefall
