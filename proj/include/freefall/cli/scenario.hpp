#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "json.hpp"

#include "freefall/expansion.hpp"
#include "freefall/langevin.hpp"
#include "freefall/physics.hpp"
#include "freefall/pipeline.hpp"

namespace freefall::cli {

/// Bad scenario text or value. `where` is "line:column" for syntax errors and a JSON pointer
/// such as "/trap/waist_x_m" for field errors.
class ConfigError : public std::runtime_error {
 public:
  ConfigError(const std::string& message, std::string where)
      : std::runtime_error(where + ": " + message), where_(std::move(where)) {}
  const std::string& where() const noexcept { return where_; }

 private:
  std::string where_;
};

/// Read access to one JSON object that tracks consumed keys, so unknown keys can be rejected.
class Node {
 public:
  Node(const nlohmann::json& value, std::string path);

  const std::string& path() const noexcept { return path_; }
  std::string field(const std::string& key) const { return path_ + "/" + key; }
  bool has(const std::string& key) const;

  Node child(const std::string& key) const;
  std::optional<Node> optional_child(const std::string& key) const;

  double number(const std::string& key) const;
  double number(const std::string& key, double fallback) const;
  std::optional<double> optional_number(const std::string& key) const;
  double positive(const std::string& key) const;
  double positive(const std::string& key, double fallback) const;
  std::uint64_t count(const std::string& key, std::uint64_t fallback) const;
  bool boolean(const std::string& key, bool fallback) const;
  std::string string(const std::string& key, const std::string& fallback) const;
  std::vector<double> numbers(const std::string& key) const;
  std::vector<double> numbers(const std::string& key, const std::vector<double>& fallback) const;
  Eigen::Vector3d vector3(const std::string& key) const;
  std::optional<Eigen::Vector3d> optional_vector3(const std::string& key) const;

  /// Throws on any key that was never read.
  void finish() const;

 private:
  const nlohmann::json& get(const std::string& key) const;

  const nlohmann::json* value_;
  std::string path_;
  mutable std::set<std::string> seen_;
};

struct EnsembleConfig {
  std::size_t size = 100;
  std::vector<double> taus;  // s
  double dt = 0.0;
  FreefallIntegrator integrator = FreefallIntegrator::euler_maruyama;
  bool optimal_displacement = false;
  std::size_t dump_trajectories = 0;
};

struct SweepEnergyConfig {
  std::vector<double> displacements;  // m
  std::vector<double> taus;           // s
  std::size_t monte_carlo_size = 0;   // 0 skips the Monte Carlo columns
};

struct ExpansionConfig {
  std::vector<double> taus;
  std::size_t realizations = 100;
  Transduction transduction = Transduction::linear;
  double saturation_length = 1064e-9 / (2.0 * constants::pi);
  double sample_rate = 0.95e6;
  double filter_linewidth_hz = 500.0;
  double feedback_linewidth_hz = 100.0;
  double pre_window = 2.0e-3;
  double norm_window = 1.0e-3;
  double post_window = 1.0e-3;
  double detector_noise = 0.0;  // m
  IntervalMethod interval_method = IntervalMethod::chi_square;
  int bootstrap_resamples = 2000;
};

struct LossmapConfig {
  double tau_min = 0.0;
  double tau_max = 0.0;
  std::size_t tau_points = 50;
  double n0_min = 0.0;
  double n0_max = 0.0;
  std::size_t n0_points = 50;
  bool n0_log = true;
  std::vector<double> purity_levels{0.5, 0.25, 0.1};
  RecaptureMode mode = RecaptureMode::conditional;
  int order = 32;
  double tolerance = 1e-4;
};

struct CalibrationSynthesis {
  double duration = 1.0;
  double sample_rate = 1.0e6;
  Eigen::Vector3d gain = Eigen::Vector3d::Zero();  // V/m
  std::optional<Eigen::Vector3d> temperature;       // K, default gas temperature
  std::optional<Eigen::Vector3d> linewidth_hz;      // default gas damping
  double x_leak_into_y = 0.0;
  Eigen::Vector2d noise = Eigen::Vector2d::Zero();  // V rms
};

struct CalibrateConfig {
  std::optional<CalibrationSynthesis> synthesize;
  std::string trace_x;
  std::string trace_y;
  bool write_traces = false;
  std::size_t segment_length = 1 << 14;
  double f_min = 5.0e3;
  double f_max = 300.0e3;
  std::optional<Eigen::Vector3d> frequency_guess_hz;
  std::optional<double> linewidth_guess_hz;
  bool fit_leak_peak = true;
};

struct EstimateSynthesis {
  double duration = 10.0e-3;
  double sample_rate = 1.0e6;
  double temperature = 0.0;  // K
  double linewidth_hz = 100.0;
  double noise = 0.0;        // m
};

struct EstimateConfig {
  std::string trace;
  std::optional<EstimateSynthesis> synthesize;
  std::optional<double> frequency_hz;
  double filter_linewidth_hz = 500.0;
  bool forward = true;
  bool backward = true;
  std::size_t batches = 20;
  double gain = 1.0;  // V/m; 1 for traces already in meters
};

struct DuffingSynthesis {
  Eigen::Vector3d xi_per_um2 = Eigen::Vector3d::Zero();
  std::vector<double> rms;  // m
  double relative_noise = 1e-3;
};

struct DuffingConfig {
  std::string points;
  std::optional<DuffingSynthesis> synthesize;
  std::optional<double> frequency0_hz;
  Eigen::Vector3d fixed_rms = Eigen::Vector3d::Zero();  // m; the fitted row's entry is ignored
  Axis row = Axis::y;
  double start_waist = 1.0e-6;
  std::vector<double> trapped_rms;  // amplitudes checked by direct integration
  double trapped_duration = 2.0e-3;
};

struct Scenario {
  nlohmann::json raw;
  std::string source;
  std::string hash;  // 16 hex digits, FNV-1a of the canonical JSON

  ParticleParams particle{59e-9, constants::density_silica};
  TrapParams trap;
  EnvironmentParams env;
  Protocol protocol;
  double g = constants::g_default;
  std::uint64_t seed = 1;
  std::string output_dir;

  std::optional<EnsembleConfig> ensemble;
  std::optional<SweepEnergyConfig> sweep_energy;
  std::optional<ExpansionConfig> expansion;
  std::optional<LossmapConfig> lossmap;
  std::optional<CalibrateConfig> calibrate;
  std::optional<EstimateConfig> estimate;
  std::optional<DuffingConfig> duffing;
};

Scenario parse_scenario(const std::string& text, const std::string& source = "<scenario>");
Scenario load_scenario(const std::filesystem::path& path);

std::string fnv1a_hex(const std::string& bytes);

}  // namespace freefall::cli
