#include "freefall/cli/scenario.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

#include "freefall/energetics.hpp"

namespace freefall::cli {

using nlohmann::json;

namespace {

const char* type_name(const json& v) { return v.type_name(); }

std::string line_column(const std::string& text, std::size_t byte) {
  std::size_t line = 1, column = 1;
  for (std::size_t i = 0; i < byte && i < text.size(); ++i) {
    if (text[i] == '\n') {
      ++line;
      column = 1;
    } else {
      ++column;
    }
  }
  return "line " + std::to_string(line) + ", column " + std::to_string(column);
}

template <typename F>
void rethrow_as_config(const std::string& where, F&& f) {
  try {
    f();
  } catch (const DomainError& e) {
    throw ConfigError(e.what(), where);
  }
}

}  // namespace

Node::Node(const json& value, std::string path) : value_(&value), path_(std::move(path)) {
  if (!value.is_object()) {
    throw ConfigError(std::string("expected an object, found ") + type_name(value),
                      path_.empty() ? "/" : path_);
  }
}

bool Node::has(const std::string& key) const { return value_->contains(key); }

const json& Node::get(const std::string& key) const {
  seen_.insert(key);
  auto it = value_->find(key);
  if (it == value_->end()) throw ConfigError("required field missing", field(key));
  return *it;
}

Node Node::child(const std::string& key) const { return Node(get(key), field(key)); }

std::optional<Node> Node::optional_child(const std::string& key) const {
  if (!has(key)) return std::nullopt;
  return child(key);
}

double Node::number(const std::string& key) const {
  const json& v = get(key);
  if (!v.is_number()) {
    throw ConfigError(std::string("expected a number, found ") + type_name(v), field(key));
  }
  return v.get<double>();
}

double Node::number(const std::string& key, double fallback) const {
  return has(key) ? number(key) : fallback;
}

std::optional<double> Node::optional_number(const std::string& key) const {
  if (!has(key)) return std::nullopt;
  return number(key);
}

double Node::positive(const std::string& key) const {
  const double v = number(key);
  if (!(v > 0.0)) throw ConfigError("must be positive", field(key));
  return v;
}

double Node::positive(const std::string& key, double fallback) const {
  return has(key) ? positive(key) : fallback;
}

std::uint64_t Node::count(const std::string& key, std::uint64_t fallback) const {
  if (!has(key)) return fallback;
  const json& v = get(key);
  if (!v.is_number_integer() || (v.is_number_integer() && v.get<std::int64_t>() < 0)) {
    throw ConfigError("expected a non-negative integer", field(key));
  }
  return v.get<std::uint64_t>();
}

bool Node::boolean(const std::string& key, bool fallback) const {
  if (!has(key)) return fallback;
  const json& v = get(key);
  if (!v.is_boolean()) {
    throw ConfigError(std::string("expected true or false, found ") + type_name(v), field(key));
  }
  return v.get<bool>();
}

std::string Node::string(const std::string& key, const std::string& fallback) const {
  if (!has(key)) return fallback;
  const json& v = get(key);
  if (!v.is_string()) {
    throw ConfigError(std::string("expected a string, found ") + type_name(v), field(key));
  }
  return v.get<std::string>();
}

std::vector<double> Node::numbers(const std::string& key) const {
  const json& v = get(key);
  if (!v.is_array()) {
    throw ConfigError(std::string("expected an array, found ") + type_name(v), field(key));
  }
  std::vector<double> out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (!v[i].is_number()) {
      throw ConfigError("expected a number", field(key) + "/" + std::to_string(i));
    }
    out.push_back(v[i].get<double>());
  }
  return out;
}

std::vector<double> Node::numbers(const std::string& key, const std::vector<double>& fallback) const {
  return has(key) ? numbers(key) : fallback;
}

Eigen::Vector3d Node::vector3(const std::string& key) const {
  const auto v = numbers(key);
  if (v.size() != 3) throw ConfigError("expected three entries (x, y, z)", field(key));
  return {v[0], v[1], v[2]};
}

std::optional<Eigen::Vector3d> Node::optional_vector3(const std::string& key) const {
  if (!has(key)) return std::nullopt;
  return vector3(key);
}

void Node::finish() const {
  for (auto it = value_->begin(); it != value_->end(); ++it) {
    if (!seen_.count(it.key())) throw ConfigError("unknown field", field(it.key()));
  }
}

std::string fnv1a_hex(const std::string& bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

namespace {

std::vector<double> tau_grid(const Node& n, const std::string& key) {
  auto taus = n.numbers(key);
  if (taus.empty()) throw ConfigError("need at least one time", n.field(key));
  for (std::size_t i = 0; i < taus.size(); ++i) {
    if (!(taus[i] >= 0.0)) throw ConfigError("times must be non-negative", n.field(key));
    if (i > 0 && !(taus[i] > taus[i - 1])) {
      throw ConfigError("times must be strictly ascending", n.field(key));
    }
  }
  return taus;
}

Axis parse_axis(const Node& n, const std::string& key, Axis fallback) {
  const std::string s = n.string(key, std::string(1, axis_name(fallback)));
  if (s == "x") return Axis::x;
  if (s == "y") return Axis::y;
  if (s == "z") return Axis::z;
  throw ConfigError("expected x, y or z", n.field(key));
}

void parse_particle(const Node& n, Scenario& s) {
  const double radius = n.positive("radius_m");
  const double density = n.positive("density_kg_m3", constants::density_silica);
  const double eps = n.positive("permittivity", constants::permittivity_silica);
  n.finish();
  s.particle = ParticleParams(radius, density, eps);
}

void parse_trap(const Node& n, Scenario& s) {
  TrapParams t;
  t.waist_x = n.positive("waist_x_m", t.waist_x);
  t.waist_y = n.positive("waist_y_m", t.waist_y);
  t.rayleigh_z = n.positive("rayleigh_z_m", t.rayleigh_z);
  t.power = n.number("power_w", t.power);
  t.omega = 2.0 * constants::pi * n.vector3("frequency_hz");
  const auto depth = n.optional_number("depth_j");
  n.finish();
  rethrow_as_config(n.path(), [&] {
    t.validate();
    t = depth ? t : with_derived_depth(t, s.particle);
    if (depth) t.depth = *depth;
    t.validate();
    if (!(t.depth > 0.0)) throw DomainError("trap depth must be positive");
  });
  s.trap = t;
}

void parse_environment(const Node& n, Scenario& s) {
  const double pressure = mbar_to_pa(n.number("pressure_mbar"));
  const double temperature = n.positive("gas_temperature_k", 300.0);
  const double molar = n.positive("molar_mass_kg_mol", constants::molar_mass_air);
  const auto damping = n.optional_number("damping_rad_s");
  n.finish();
  rethrow_as_config(n.path(), [&] {
    if (pressure < 0.0) throw DomainError("pressure must be non-negative");
    s.env = EnvironmentParams::from_gas(s.particle, pressure, temperature, molar);
    if (damping) s.env.damping_gamma = *damping;
    s.env.validate();
  });
}

void parse_protocol(const Node& n, Scenario& s) {
  Protocol p;
  p.tau = n.number("tau_s", 0.0);
  const bool optimal = n.boolean("optimal_displacement", false);
  if (n.has("detuning_hz")) {
    const double detuning = n.number("detuning_hz");
    const double cf = n.positive("cf_m_per_hz");
    p.detuning = detuning;
    p.cf = cf;
    p.displacement = detuning * cf;
    if (n.has("displacement_m")) {
      p.displacement = n.number("displacement_m");
    }
  } else {
    p.displacement = n.number("displacement_m", 0.0);
  }
  if (optimal) p.displacement = optimal_displacement(p.tau, s.g);
  if (auto init = n.optional_child("initial")) {
    const bool by_t = init->has("temperature_k");
    const bool by_n = init->has("occupation");
    if (by_t == by_n) {
      throw ConfigError("give exactly one of temperature_k or occupation", init->path());
    }
    const Eigen::Vector3d v = by_t ? init->vector3("temperature_k") : init->vector3("occupation");
    for (int j = 0; j < 3; ++j) {
      if (!(v(j) >= 0.0)) throw ConfigError("entries must be non-negative", init->path());
      p.init[j] = by_t ? InitialCondition(Temperature{v(j)}) : InitialCondition(Occupation{v(j)});
    }
    init->finish();
  }
  n.finish();
  rethrow_as_config(n.path(), [&] { p.validate(); });
  s.protocol = p;
}

EnsembleConfig parse_ensemble(const Node& n) {
  EnsembleConfig e;
  e.size = n.count("size", e.size);
  if (e.size < 2) throw ConfigError("need at least 2 trajectories", n.field("size"));
  e.taus = tau_grid(n, "tau_grid_s");
  e.dt = n.number("dt_s", 0.0);
  if (e.dt < 0.0) throw ConfigError("must be non-negative", n.field("dt_s"));
  const std::string integrator = n.string("integrator", "euler_maruyama");
  if (integrator == "euler_maruyama") {
    e.integrator = FreefallIntegrator::euler_maruyama;
  } else if (integrator == "exact") {
    e.integrator = FreefallIntegrator::exact;
  } else {
    throw ConfigError("expected euler_maruyama or exact", n.field("integrator"));
  }
  e.optimal_displacement = n.boolean("optimal_displacement", false);
  e.dump_trajectories = n.count("dump_trajectories", 0);
  n.finish();
  return e;
}

SweepEnergyConfig parse_sweep(const Node& n) {
  SweepEnergyConfig c;
  c.displacements = n.numbers("displacements_m");
  if (c.displacements.empty()) {
    throw ConfigError("need at least one displacement", n.field("displacements_m"));
  }
  c.taus = tau_grid(n, "tau_grid_s");
  if (c.taus.size() < 3) throw ConfigError("need at least three times", n.field("tau_grid_s"));
  c.monte_carlo_size = n.count("monte_carlo_size", 0);
  if (c.monte_carlo_size == 1) throw ConfigError("need 0 or at least 2", n.field("monte_carlo_size"));
  n.finish();
  return c;
}

ExpansionConfig parse_expansion(const Node& n) {
  ExpansionConfig c;
  c.taus = tau_grid(n, "tau_grid_s");
  c.realizations = n.count("realizations", c.realizations);
  if (c.realizations < 10) throw ConfigError("need at least 10", n.field("realizations"));
  const std::string t = n.string("transduction", "linear");
  if (t == "linear") {
    c.transduction = Transduction::linear;
  } else if (t == "saturating") {
    c.transduction = Transduction::saturating;
  } else {
    throw ConfigError("expected linear or saturating", n.field("transduction"));
  }
  c.saturation_length = n.positive("saturation_length_m", c.saturation_length);
  c.sample_rate = n.positive("sample_rate_hz", c.sample_rate);
  c.filter_linewidth_hz = n.positive("filter_linewidth_hz", c.filter_linewidth_hz);
  c.feedback_linewidth_hz = n.positive("feedback_linewidth_hz", c.feedback_linewidth_hz);
  c.pre_window = n.positive("pre_window_s", c.pre_window);
  c.norm_window = n.positive("norm_window_s", c.norm_window);
  c.post_window = n.positive("post_window_s", c.post_window);
  c.detector_noise = n.number("detector_noise_m", 0.0);
  const std::string ci = n.string("interval_method", "chi_square");
  if (ci == "chi_square") {
    c.interval_method = IntervalMethod::chi_square;
  } else if (ci == "bootstrap") {
    c.interval_method = IntervalMethod::bootstrap;
  } else {
    throw ConfigError("expected chi_square or bootstrap", n.field("interval_method"));
  }
  c.bootstrap_resamples = static_cast<int>(n.count("bootstrap_resamples", 2000));
  if (c.norm_window > c.pre_window) {
    throw ConfigError("longer than pre_window_s", n.field("norm_window_s"));
  }
  n.finish();
  return c;
}

LossmapConfig parse_lossmap(const Node& n) {
  LossmapConfig c;
  c.tau_min = n.number("tau_min_s");
  c.tau_max = n.positive("tau_max_s");
  c.tau_points = n.count("tau_points", c.tau_points);
  c.n0_min = n.number("n0_min");
  c.n0_max = n.positive("n0_max");
  c.n0_points = n.count("n0_points", c.n0_points);
  const std::string spacing = n.string("n0_spacing", "log");
  if (spacing != "log" && spacing != "linear") {
    throw ConfigError("expected log or linear", n.field("n0_spacing"));
  }
  c.n0_log = spacing == "log";
  c.purity_levels = n.numbers("purity_levels", c.purity_levels);
  const std::string mode = n.string("recapture_mode", "conditional");
  if (mode == "conditional") {
    c.mode = RecaptureMode::conditional;
  } else if (mode == "marginal") {
    c.mode = RecaptureMode::marginal;
  } else {
    throw ConfigError("expected conditional or marginal", n.field("recapture_mode"));
  }
  c.order = static_cast<int>(n.count("quadrature_order", 32));
  c.tolerance = n.positive("tolerance", c.tolerance);
  n.finish();
  if (!(c.tau_min >= 0.0 && c.tau_min < c.tau_max)) {
    throw ConfigError("need 0 <= tau_min_s < tau_max_s", n.field("tau_min_s"));
  }
  if (!(c.n0_min >= 0.0 && c.n0_min < c.n0_max) || (c.n0_log && !(c.n0_min > 0.0))) {
    throw ConfigError("need 0 <= n0_min < n0_max (n0_min > 0 for log spacing)", n.field("n0_min"));
  }
  if (c.tau_points < 2) throw ConfigError("need at least 2", n.field("tau_points"));
  if (c.n0_points < 2) throw ConfigError("need at least 2", n.field("n0_points"));
  for (double p : c.purity_levels) {
    if (!(p > 0.0 && p < 1.0)) throw ConfigError("levels must lie in (0, 1)", n.field("purity_levels"));
  }
  return c;
}

CalibrateConfig parse_calibrate(const Node& n) {
  CalibrateConfig c;
  if (auto s = n.optional_child("synthesize")) {
    CalibrationSynthesis y;
    y.duration = s->positive("duration_s", y.duration);
    y.sample_rate = s->positive("sample_rate_hz", y.sample_rate);
    y.gain = s->vector3("gain_v_per_m");
    y.temperature = s->optional_vector3("mode_temperature_k");
    y.linewidth_hz = s->optional_vector3("linewidth_hz");
    y.x_leak_into_y = s->number("x_leak_into_y", 0.0);
    const auto noise = s->numbers("noise_v", {0.0, 0.0});
    if (noise.size() != 2) throw ConfigError("expected two entries (X, Y)", s->field("noise_v"));
    y.noise << noise[0], noise[1];
    s->finish();
    c.synthesize = y;
  }
  c.trace_x = n.string("trace_x", "");
  c.trace_y = n.string("trace_y", "");
  if (c.synthesize.has_value() == (!c.trace_x.empty() || !c.trace_y.empty())) {
    throw ConfigError("give either synthesize or both trace_x and trace_y", n.path());
  }
  if (!c.synthesize && (c.trace_x.empty() || c.trace_y.empty())) {
    throw ConfigError("both trace_x and trace_y are required", n.path());
  }
  c.write_traces = n.boolean("write_traces", false);
  c.segment_length = n.count("segment_length", c.segment_length);
  c.f_min = n.number("f_min_hz", c.f_min);
  c.f_max = n.positive("f_max_hz", c.f_max);
  c.frequency_guess_hz = n.optional_vector3("frequency_guess_hz");
  c.linewidth_guess_hz = n.optional_number("linewidth_guess_hz");
  c.fit_leak_peak = n.boolean("fit_leak_peak", true);
  n.finish();
  return c;
}

EstimateConfig parse_estimate(const Node& n) {
  EstimateConfig c;
  if (auto s = n.optional_child("synthesize")) {
    EstimateSynthesis y;
    y.duration = s->positive("duration_s", y.duration);
    y.sample_rate = s->positive("sample_rate_hz", y.sample_rate);
    y.temperature = s->positive("temperature_k");
    y.linewidth_hz = s->positive("linewidth_hz", y.linewidth_hz);
    y.noise = s->number("noise_m", 0.0);
    s->finish();
    c.synthesize = y;
  }
  c.trace = n.string("trace", "");
  if (c.synthesize.has_value() == !c.trace.empty()) {
    throw ConfigError("give exactly one of trace or synthesize", n.path());
  }
  c.frequency_hz = n.optional_number("frequency_hz");
  c.filter_linewidth_hz = n.positive("filter_linewidth_hz", c.filter_linewidth_hz);
  const std::string dir = n.string("direction", "both");
  if (dir != "both" && dir != "forward" && dir != "backward") {
    throw ConfigError("expected forward, backward or both", n.field("direction"));
  }
  c.forward = dir != "backward";
  c.backward = dir != "forward";
  c.batches = n.count("variance_batches", c.batches);
  if (c.batches < 2) throw ConfigError("need at least 2", n.field("variance_batches"));
  c.gain = n.positive("gain_v_per_m", 1.0);
  n.finish();
  return c;
}

DuffingConfig parse_duffing(const Node& n) {
  DuffingConfig c;
  if (auto s = n.optional_child("synthesize")) {
    DuffingSynthesis y;
    y.xi_per_um2 = s->vector3("xi_per_um2");
    y.rms = s->numbers("rms_m");
    y.relative_noise = s->number("relative_noise", y.relative_noise);
    s->finish();
    c.synthesize = y;
  }
  c.points = n.string("points", "");
  if (c.synthesize.has_value() == !c.points.empty()) {
    throw ConfigError("give exactly one of points or synthesize", n.path());
  }
  c.frequency0_hz = n.optional_number("frequency0_hz");
  c.fixed_rms = n.optional_vector3("fixed_rms_m").value_or(Eigen::Vector3d::Zero());
  c.row = parse_axis(n, "row", Axis::y);
  c.start_waist = n.positive("start_waist_m", c.start_waist);
  c.trapped_rms = n.numbers("trapped_rms_m", {});
  c.trapped_duration = n.positive("trapped_duration_s", c.trapped_duration);
  n.finish();
  return c;
}

}  // namespace

Scenario parse_scenario(const std::string& text, const std::string& source) {
  Scenario s;
  s.source = source;
  try {
    s.raw = json::parse(text, nullptr, true, true);
  } catch (const json::parse_error& e) {
    std::string msg = e.what();
    const auto colon = msg.rfind(": ");
    if (colon != std::string::npos) msg = msg.substr(colon + 2);
    throw ConfigError(msg, source + ", " + line_column(text, e.byte > 0 ? e.byte - 1 : 0));
  }
  s.hash = fnv1a_hex(s.raw.dump());

  const Node root(s.raw, "");
  s.seed = root.count("seed", 1);
  s.output_dir = root.string("output_dir", "");
  s.g = root.positive("gravity_m_s2", constants::g_default);
  parse_particle(root.child("particle"), s);
  parse_trap(root.child("trap"), s);
  parse_environment(root.child("environment"), s);
  if (auto p = root.optional_child("protocol")) parse_protocol(*p, s);
  if (auto e = root.optional_child("ensemble")) s.ensemble = parse_ensemble(*e);
  if (auto a = root.optional_child("analysis")) {
    if (auto b = a->optional_child("sweep_energy")) s.sweep_energy = parse_sweep(*b);
    if (auto b = a->optional_child("expansion")) s.expansion = parse_expansion(*b);
    if (auto b = a->optional_child("lossmap")) s.lossmap = parse_lossmap(*b);
    if (auto b = a->optional_child("calibrate")) s.calibrate = parse_calibrate(*b);
    if (auto b = a->optional_child("estimate")) s.estimate = parse_estimate(*b);
    if (auto b = a->optional_child("duffing")) s.duffing = parse_duffing(*b);
    a->finish();
  }
  root.finish();
  return s;
}

Scenario load_scenario(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open scenario file", path.string());
  std::ostringstream text;
  text << in.rdbuf();
  return parse_scenario(text.str(), path.string());
}

}  // namespace freefall::cli
