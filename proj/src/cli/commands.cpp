#include "freefall/cli/commands.hpp"

#include <cmath>
#include <cstdlib>
#include <fstream>
#include <map>
#include <sstream>

#include <Eigen/Dense>
#include <boost/math/tools/minima.hpp>

#include "freefall/dynamics.hpp"
#include "freefall/energetics.hpp"
#include "freefall/filter.hpp"
#include "freefall/langevin.hpp"
#include "freefall/pipeline.hpp"
#include "freefall/trace_io.hpp"

namespace freefall::cli {

bool CommandReport::ok() const {
  for (const auto& c : checks) {
    if (!c.passed) return false;
  }
  return true;
}

std::filesystem::path resolve_out_dir(const Scenario& scenario, const RunOptions& options) {
  if (options.out_dir) return *options.out_dir;
  if (const char* env = std::getenv(out_dir_env); env && *env) return env;
  if (!scenario.output_dir.empty()) return scenario.output_dir;
  return ".";
}

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t k) {
  auto mix = [](std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  };
  return mix(seed ^ mix(k + 1));
}

namespace {

constexpr double two_pi = 2.0 * constants::pi;

struct Context {
  const Scenario& scenario;
  ArtifactWriter& out;
  std::vector<CheckResult>& checks;
  std::uint64_t seed;
  int threads;

  void check(const std::string& name, bool passed, const std::string& detail = {}) {
    checks.push_back({name, passed, detail});
  }
};

template <typename T>
const T& require(const std::optional<T>& block, const std::string& where) {
  if (!block) throw ConfigError("block required by this command", where);
  return *block;
}

bool all_finite(const std::vector<double>& v) {
  for (double x : v) {
    if (!std::isfinite(x)) return false;
  }
  return true;
}

Trace read_trace(const std::string& path, Channel channel) {
  const std::filesystem::path p(path);
  Trace t = p.extension() == ".bin" ? read_trace_binary(p) : read_trace_csv(p, channel);
  t.channel = channel;
  return t;
}

// ---------------------------------------------------------------------------------------------
// simulate

struct Parabola {
  Eigen::Vector3d coef = Eigen::Vector3d::Zero();  // offset, velocity, acceleration
  Eigen::Vector3d se = Eigen::Vector3d::Zero();
};

// q(t) = c0 + c1 t + c2 t^2 / 2 fitted to every trajectory; the ensemble estimate is the mean
// of the per-trajectory coefficients and the error their standard error. The trajectories
// are shared across t, so per-t standard errors would not be independent.
Parabola fit_parabola(const std::vector<double>& t, const std::vector<PhasePoint>& samples,
                      std::size_t n, Axis axis) {
  const auto nt = static_cast<Eigen::Index>(t.size());
  Eigen::MatrixXd a(nt, 3);
  for (Eigen::Index k = 0; k < nt; ++k) {
    a(k, 0) = 1.0;
    a(k, 1) = t[k];
    a(k, 2) = 0.5 * t[k] * t[k];
  }
  const Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(a);
  Eigen::MatrixXd coefs(3, static_cast<Eigen::Index>(n));
  Eigen::VectorXd q(nt);
  for (std::size_t i = 0; i < n; ++i) {
    for (Eigen::Index k = 0; k < nt; ++k) q(k) = samples[i * t.size() + k].q(index(axis));
    coefs.col(static_cast<Eigen::Index>(i)) = qr.solve(q);
  }
  Parabola p;
  p.coef = coefs.rowwise().mean();
  const Eigen::MatrixXd centered = coefs.colwise() - p.coef;
  const double dn = static_cast<double>(n);
  p.se = (centered.rowwise().squaredNorm() / (dn - 1.0) / dn).cwiseSqrt();
  return p;
}

void cmd_simulate(Context& ctx) {
  const Scenario& s = ctx.scenario;
  const EnsembleConfig& e = require(s.ensemble, "/ensemble");
  if (e.taus.empty()) throw ConfigError("must not be empty", "/ensemble/tau_grid_s");
  if (e.taus.size() < 3) {
    throw ConfigError("need at least three times for the parabola fit", "/ensemble/tau_grid_s");
  }
  EnsembleOptions opt;
  opt.threads = ctx.threads;
  opt.dt = e.dt;
  opt.integrator = e.integrator;
  opt.g = s.g;
  opt.optimal_displacement = e.optimal_displacement;
  opt.keep_trajectories = e.dump_trajectories;
  const EnsembleRun run = run_ensemble_grid(s.protocol, e.taus, e.size, s.env, s.trap, s.particle,
                                            ctx.seed, opt);

  nlohmann::json stats = nlohmann::json::array();
  Table means;
  means.columns = {"tau_s", "mean_q_x_m", "se_q_x_m", "mean_q_y_m", "se_q_y_m", "mean_q_z_m", "se_q_z_m"};
  bool finite = true;
  for (const auto& st : run.stats) {
    nlohmann::json axes = nlohmann::json::object();
    for (Axis a : all_axes) {
      const auto& m = st.axes[index(a)];
      axes[std::string(1, axis_name(a))] = {
          {"mean_q_m", m.mean(0)}, {"mean_q_se_m", m.mean_se(0)},
          {"mean_p_kg_m_s", m.mean(1)}, {"mean_p_se_kg_m_s", m.mean_se(1)},
          {"var_q_m2", m.cov(0, 0)}, {"var_q_se_m2", m.cov_se(0, 0)},
          {"var_p_kg2_m2_s2", m.cov(1, 1)}, {"var_p_se_kg2_m2_s2", m.cov_se(1, 1)},
          {"cov_qp_kg_m2_s", m.cov(0, 1)}, {"cov_qp_se_kg_m2_s", m.cov_se(0, 1)}};
      finite = finite && m.cov.allFinite() && m.mean.allFinite();
    }
    stats.push_back({{"tau_s", st.tau},
                     {"displacement_m", st.displacement},
                     {"n_trajectories", st.n_traj},
                     {"axes", axes},
                     {"mean_energy_y_j", st.mean_energy_y},
                     {"mean_energy_y_se_j", st.mean_energy_y_se},
                     {"mean_energy_y_normalized", st.mean_energy_y_normalized},
                     {"recapture_fraction", st.recapture_fraction},
                     {"recapture_fraction_se", st.recapture_se},
                     {"xi_q", st.xi_q},
                     {"xi_p", st.xi_p},
                     {"purity_y", st.purity_y},
                     {"purity_y_se", st.purity_y_se}});
    means.add({st.tau, st.axes[0].mean(0), st.axes[0].mean_se(0), st.axes[1].mean(0),
               st.axes[1].mean_se(0), st.axes[2].mean(0), st.axes[2].mean_se(0)});
    ctx.check("recapture fraction in [0, 1] at tau=" + format_double(st.tau),
              st.recapture_fraction >= 0.0 && st.recapture_fraction <= 1.0);
  }
  ctx.check("ensemble moments finite", finite);
  ctx.out.json("ensemble_stats", {{"n_trajectories", e.size},
                                  {"integrator", e.integrator == FreefallIntegrator::exact ? "exact" : "euler_maruyama"},
                                  {"taus", stats}});
  ctx.out.table("mean_displacement", means);

  Table fit;
  fit.columns = {"axis", "acceleration_m_s2", "acceleration_se_m_s2", "velocity_m_s",
                 "velocity_se_m_s", "offset_m", "offset_se_m"};
  for (Axis a : all_axes) {
    const Parabola p = fit_parabola(e.taus, run.samples, e.size, a);
    fit.add({std::string(1, axis_name(a)), p.coef(2), p.se(2), p.coef(1), p.se(1), p.coef(0),
             p.se(0)});
    ctx.check(std::string("parabola fit finite on ") + axis_name(a), p.coef.allFinite());
  }
  ctx.out.table("parabola_fit", fit);

  if (!run.trajectories.empty()) {
    Table dump;
    dump.columns = {"trajectory", "time_s", "q_x_m", "q_y_m", "q_z_m",
                    "p_x_kg_m_s", "p_y_kg_m_s", "p_z_kg_m_s"};
    for (const auto& tr : run.trajectories) {
      for (std::size_t k = 0; k < tr.times.size(); ++k) {
        dump.add({static_cast<std::int64_t>(tr.index), tr.times[k], tr.q[0][k], tr.q[1][k],
                  tr.q[2][k], tr.p[0][k], tr.p[1][k], tr.p[2][k]});
      }
    }
    ctx.out.csv("trajectories", dump);
  }
}

// ---------------------------------------------------------------------------------------------
// sweep-energy

void cmd_sweep_energy(Context& ctx) {
  const Scenario& s = ctx.scenario;
  const SweepEnergyConfig& c = require(s.sweep_energy, "/analysis/sweep_energy");
  const double omega = s.trap.omega(index(Axis::y));
  const GaussianState state0 = thermal_state(s.particle.mass(), omega, s.protocol.init[index(Axis::y)]);
  const double kt0 = s.particle.mass() * omega * omega * state0.var_q();
  auto analytic = [&](double tau, double d) {
    return mean_energy_y(s.particle, state0, s.trap, tau, d, s.env, s.g).normalized;
  };

  Table sweep;
  sweep.columns = {"displacement_m", "tau_s", "energy_normalized"};
  if (c.monte_carlo_size > 0) {
    sweep.columns.push_back("mc_energy_normalized");
    sweep.columns.push_back("mc_energy_normalized_se");
  }
  Table minima;
  minima.columns = {"displacement_m", "tau_star_grid_s", "tau_star_s", "tau_star_expected_s",
                    "energy_min_normalized"};

  for (std::size_t di = 0; di < c.displacements.size(); ++di) {
    const double d = c.displacements[di];
    std::vector<double> energy;
    for (double tau : c.taus) energy.push_back(analytic(tau, d));
    ctx.check("analytic energy finite at d=" + format_double(d), all_finite(energy));

    std::vector<EnsembleStats> mc;
    if (c.monte_carlo_size > 0) {
      Protocol p = s.protocol;
      p.displacement = d;
      p.detuning.reset();
      p.cf.reset();
      EnsembleOptions opt;
      opt.threads = ctx.threads;
      opt.g = s.g;
      if (s.ensemble) {
        opt.dt = s.ensemble->dt;
        opt.integrator = s.ensemble->integrator;
      }
      mc = run_ensemble_grid(p, c.taus, c.monte_carlo_size, s.env, s.trap, s.particle,
                             derive_seed(ctx.seed, di), opt)
               .stats;
    }
    for (std::size_t k = 0; k < c.taus.size(); ++k) {
      std::vector<Cell> row{d, c.taus[k], energy[k]};
      if (!mc.empty()) {
        row.emplace_back(mc[k].mean_energy_y / kt0);
        row.emplace_back(mc[k].mean_energy_y_se / kt0);
      }
      sweep.add(std::move(row));
    }

    const auto it = std::min_element(energy.begin(), energy.end());
    const auto k = static_cast<std::size_t>(it - energy.begin());
    double tau_star = c.taus[k];
    double e_min = *it;
    if (k > 0 && k + 1 < c.taus.size()) {
      // Brent's tolerance has an absolute part, so search in units of the bracket end.
      const double unit = c.taus[k + 1];
      const auto r = boost::math::tools::brent_find_minima(
          [&](double u) { return analytic(u * unit, d); }, c.taus[k - 1] / unit, 1.0, 52);
      tau_star = r.first * unit;
      e_min = r.second;
    }
    const double expected = std::sqrt(2.0 * std::max(d, 0.0) / s.g);
    minima.add({d, c.taus[k], tau_star, expected, e_min});
    if (expected >= c.taus.front() && expected <= c.taus.back()) {
      double spacing = 0.0;
      for (std::size_t i = 1; i < c.taus.size(); ++i) spacing = std::max(spacing, c.taus[i] - c.taus[i - 1]);
      ctx.check("energy minimum near sqrt(2d/g) at d=" + format_double(d),
                std::abs(c.taus[k] - expected) <= spacing);
    }
  }
  ctx.out.table("energy_sweep", sweep);
  ctx.out.table("energy_minima", minima);
}

// ---------------------------------------------------------------------------------------------
// expansion

void cmd_expansion(Context& ctx) {
  const Scenario& s = ctx.scenario;
  const ExpansionConfig& c = require(s.expansion, "/analysis/expansion");
  if (c.taus.empty()) throw ConfigError("must not be empty", "/analysis/expansion/tau_grid_s");
  const double m = s.particle.mass();
  const double omega = s.trap.omega(index(Axis::y));
  const InitialCondition& init = s.protocol.init[index(Axis::y)];
  const GaussianState state0 = thermal_state(m, omega, init);

  RealizationConfig rc;
  rc.mass = m;
  rc.omega = omega;
  rc.initial_temperature = temperature_of(init, omega);
  rc.feedback_gamma = two_pi * c.feedback_linewidth_hz;
  rc.env = s.env;
  rc.sample_rate = c.sample_rate;
  rc.pre_window = c.pre_window;
  rc.norm_window = c.norm_window;
  rc.post_window = c.post_window;
  rc.gamma_f = two_pi * c.filter_linewidth_hz;
  rc.transduction = c.transduction;
  rc.saturation_length = c.saturation_length;
  rc.noise_sd = c.detector_noise;
  rc.g = s.g;

  Table t;
  t.columns = {"tau_s", "xi_q_analytic", "xi_p_analytic", "xi_q", "xi_q_lo", "xi_q_hi",
               "xi_p", "xi_p_lo", "xi_p_hi", "q0_m", "p0_kg_m_s", "realizations", "ci_method"};
  for (std::size_t k = 0; k < c.taus.size(); ++k) {
    const double tau = c.taus[k];
    const ExpansionFactors a = expansion_factors(state0, propagate(state0, tau, Axis::y, m, s.env, s.g));
    rc.tau = tau;
    ExpansionOptions eo;
    eo.method = c.interval_method;
    eo.bootstrap_resamples = c.bootstrap_resamples;
    eo.seed = derive_seed(ctx.seed, 1000 + k);
    const RealizationResult r = realize_expansion(rc, c.realizations, derive_seed(ctx.seed, k),
                                                  ctx.threads, eo);
    const auto& x = r.expansion;
    t.add({tau, a.xi_q, a.xi_p, x.xi_q, x.xi_q_ci.lo, x.xi_q_ci.hi, x.xi_p, x.xi_p_ci.lo,
           x.xi_p_ci.hi, r.q0, r.p0, static_cast<std::int64_t>(x.samples), x.ci_method});
    ctx.check("expansion finite at tau=" + format_double(tau),
              std::isfinite(a.xi_q) && std::isfinite(x.xi_q) && std::isfinite(x.xi_p));
  }
  ctx.out.table("expansion", t);
}

// ---------------------------------------------------------------------------------------------
// lossmap

std::vector<double> spaced(double lo, double hi, std::size_t n, bool log) {
  std::vector<double> v(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double u = static_cast<double>(i) / static_cast<double>(n - 1);
    v[i] = log ? lo * std::pow(hi / lo, u) : lo + u * (hi - lo);
  }
  v.back() = hi;
  return v;
}

void cmd_lossmap(Context& ctx) {
  const Scenario& s = ctx.scenario;
  const LossmapConfig& c = require(s.lossmap, "/analysis/lossmap");
  const auto taus = spaced(c.tau_min, c.tau_max, c.tau_points, false);
  const auto n0s = spaced(c.n0_min, c.n0_max, c.n0_points, c.n0_log);
  LossMapOptions opt;
  opt.recapture.mode = c.mode;
  opt.recapture.order = c.order;
  opt.recapture.tolerance = c.tolerance;
  opt.recapture.qmc_seed = ctx.seed;
  opt.purity_levels = c.purity_levels;
  opt.threads = ctx.threads;
  opt.g = s.g;
  const LossMap map = loss_map(taus, n0s, s.env, s.trap, s.particle, opt);

  Table grid;
  grid.columns = {"tau_s", "n0", "loss_probability", "purity"};
  bool in_range = true;
  for (std::size_t i = 0; i < n0s.size(); ++i) {
    for (std::size_t k = 0; k < taus.size(); ++k) {
      const auto r = static_cast<Eigen::Index>(i), q = static_cast<Eigen::Index>(k);
      const double loss = map.loss(r, q), pur = map.purity(r, q);
      in_range = in_range && loss >= -1e-12 && loss <= 1.0 + 1e-12 && pur > 0.0 && pur <= 1.0 + 1e-12;
      grid.add({taus[k], n0s[i], loss, pur});
    }
  }
  ctx.check("loss in [0, 1] and purity in (0, 1]", in_range);
  ctx.out.table("lossmap", grid);

  Table contours;
  contours.columns = {"purity_level", "tau_s", "n0"};
  for (const auto& line : map.contours) {
    for (const auto& [tau, n0] : line.points) contours.add({line.level, tau, n0});
  }
  ctx.out.table("lossmap_contours", contours);

  std::int64_t qmc = 0;
  for (Eigen::Index i = 0; i < map.method.size(); ++i) qmc += map.method.data()[i];
  ctx.out.json("lossmap_summary",
               {{"tau_points", taus.size()},
                {"n0_points", n0s.size()},
                {"n0_spacing", c.n0_log ? "log" : "linear"},
                {"recapture_mode", c.mode == RecaptureMode::conditional ? "conditional" : "marginal"},
                {"quadrature_order", c.order},
                {"tolerance", c.tolerance},
                {"max_error_estimate", map.error.maxCoeff()},
                {"quasi_monte_carlo_cells", qmc},
                {"purity_levels", c.purity_levels},
                {"displacement", "g tau^2 / 2 at every tau"}});
}

// ---------------------------------------------------------------------------------------------
// calibrate

Table spectrum_table(const Spectrum& sp, const PeakFit& fit) {
  Table t;
  t.columns = {"frequency_hz", "psd_v2_hz", "model_v2_hz"};
  for (std::size_t k = 0; k < sp.psd.size(); ++k) {
    const double f = sp.frequencies[k];
    const bool in_fit = f >= fit.f_min && f <= fit.f_max;
    t.add({f, sp.psd[k], in_fit ? fit.model(f) : std::nan("")});
  }
  return t;
}

nlohmann::json fit_json(const PeakFit& fit, const Spectrum& sp) {
  nlohmann::json peaks = nlohmann::json::array();
  for (const auto& p : fit.peaks) {
    peaks.push_back({{"frequency_hz", p.omega / two_pi}, {"frequency_se_hz", p.omega_se / two_pi},
                     {"linewidth_hz", p.gamma / two_pi}, {"linewidth_se_hz", p.gamma_se / two_pi},
                     {"area_v2", p.area}, {"area_se_v2", p.area_se}});
  }
  return {{"peaks", peaks},
          {"floor_v2_hz", fit.floor},
          {"floor_se_v2_hz", fit.floor_se},
          {"reduced_chi2", fit.reduced_chi2},
          {"iterations", fit.iterations},
          {"f_min_hz", fit.f_min},
          {"f_max_hz", fit.f_max},
          {"resolution_bandwidth_hz", sp.resolution_bandwidth},
          {"averages", sp.averages},
          {"window", "hann"},
          {"weighting", "Whittle likelihood"}};
}

void cmd_calibrate(Context& ctx) {
  const Scenario& s = ctx.scenario;
  const CalibrateConfig& c = require(s.calibrate, "/analysis/calibrate");
  std::array<Trace, 2> traces;
  nlohmann::json truth;
  if (c.synthesize) {
    const CalibrationSynthesis& y = *c.synthesize;
    SynthesisConfig sc;
    sc.sample_rate = y.sample_rate;
    sc.duration = y.duration;
    sc.mass = s.particle.mass();
    sc.omega = s.trap.omega;
    sc.gamma = y.linewidth_hz ? Eigen::Vector3d(two_pi * *y.linewidth_hz)
                              : Eigen::Vector3d::Constant(s.env.damping_gamma);
    sc.temperature = y.temperature.value_or(Eigen::Vector3d::Constant(s.env.gas_temperature));
    sc.gain = y.gain;
    sc.x_leak_into_y = y.x_leak_into_y;
    sc.noise_sd = y.noise;
    traces = synthesize_traces(sc, ctx.seed);
    truth = {{"radius_m", s.particle.radius()},
             {"mass_kg", s.particle.mass()},
             {"frequency_hz", {s.trap.omega(0) / two_pi, s.trap.omega(1) / two_pi, s.trap.omega(2) / two_pi}},
             {"linewidth_hz", {sc.gamma(0) / two_pi, sc.gamma(1) / two_pi, sc.gamma(2) / two_pi}},
             {"gain_v_per_m", {y.gain(0), y.gain(1), y.gain(2)}}};
    if (c.write_traces) {
      ctx.out.trace("trace_x", traces[0]);
      ctx.out.trace("trace_y", traces[1]);
    }
  } else {
    traces[0] = read_trace(c.trace_x, Channel::X);
    traces[1] = read_trace(c.trace_y, Channel::Y);
  }

  CalibrationAnalysis a;
  a.omega_guess = c.frequency_guess_hz ? Eigen::Vector3d(two_pi * *c.frequency_guess_hz) : s.trap.omega;
  a.gamma_guess = c.linewidth_guess_hz ? two_pi * *c.linewidth_guess_hz : s.env.damping_gamma;
  if (!(a.gamma_guess > 0.0)) {
    throw ConfigError("no linewidth guess and zero gas damping", "/analysis/calibrate/linewidth_guess_hz");
  }
  a.pressure_pa = s.env.pressure;
  a.gas_temperature = s.env.gas_temperature;
  a.molar_mass = s.env.molar_mass;
  a.density = s.particle.density();
  a.segment_length = c.segment_length;
  a.f_min = c.f_min;
  a.f_max = c.f_max;
  a.fit_leak_peak = c.fit_leak_peak;
  const CalibrationReport rep = analyze_calibration(traces[0], traces[1], a);

  Table t;
  t.columns = {"axis", "channel", "frequency_hz", "frequency_se_hz", "linewidth_hz",
               "linewidth_se_hz", "area_v2", "area_se_v2", "gain_v_per_m", "radius_m", "mass_kg"};
  bool finite = true;
  for (const auto& ax : rep.axes) {
    const auto& p = ax.peak;
    t.add({std::string(1, axis_name(ax.axis)), channel_name(ax.channel), p.omega / two_pi,
           p.omega_se / two_pi, p.gamma / two_pi, p.gamma_se / two_pi, p.area, p.area_se,
           ax.volts_per_meter, ax.radius, ax.mass});
    finite = finite && std::isfinite(ax.volts_per_meter) && std::isfinite(ax.radius);
  }
  ctx.check("calibration finite", finite);
  ctx.out.table("calibration", t);
  ctx.out.csv("psd_x", spectrum_table(rep.psd_x, rep.fit_x));
  ctx.out.csv("psd_y", spectrum_table(rep.psd_y, rep.fit_y));
  nlohmann::json side = {{"fit_x", fit_json(rep.fit_x, rep.psd_x)},
                         {"fit_y", fit_json(rep.fit_y, rep.psd_y)},
                         {"pressure_mbar", pa_to_mbar(s.env.pressure)},
                         {"gas_temperature_k", s.env.gas_temperature},
                         {"density_kg_m3", s.particle.density()},
                         {"segment_length", c.segment_length}};
  if (!truth.is_null()) side["synthesis_truth"] = truth;
  ctx.out.json("calibration_fit", side);
}

// ---------------------------------------------------------------------------------------------
// estimate

void cmd_estimate(Context& ctx) {
  const Scenario& s = ctx.scenario;
  const EstimateConfig& c = require(s.estimate, "/analysis/estimate");
  const double omega = c.frequency_hz ? two_pi * *c.frequency_hz : s.trap.omega(index(Axis::y));
  const double gamma_f = two_pi * c.filter_linewidth_hz;
  const double m = s.particle.mass();

  Trace trace;
  nlohmann::json truth;
  if (c.synthesize) {
    const EstimateSynthesis& y = *c.synthesize;
    Rng rng = trajectory_rng(ctx.seed, 0);
    const auto count = static_cast<std::size_t>(std::llround(y.duration * y.sample_rate));
    const auto q = simulate_harmonic_exact(m, omega, two_pi * y.linewidth_hz, y.temperature,
                                           1.0 / y.sample_rate, count, rng);
    std::normal_distribution<double> normal(0.0, 1.0);
    trace.sample_rate = y.sample_rate;
    trace.values.resize(count);
    for (std::size_t i = 0; i < count; ++i) trace.values[i] = c.gain * (q[i] + y.noise * normal(rng));
    truth = {{"position_variance_m2", variance_with_se(q, c.batches).variance},
             {"stationary_variance_m2", constants::k_B * y.temperature / (m * omega * omega)},
             {"noise_m", y.noise}};
  } else {
    trace = read_trace(c.trace, Channel::Y);
  }
  std::vector<double> q(trace.values.size());
  for (std::size_t i = 0; i < q.size(); ++i) q[i] = trace.values[i] / c.gain;

  Table t;
  t.columns = {"time_s"};
  std::vector<std::vector<double>> cols;
  nlohmann::json side = {{"frequency_hz", omega / two_pi},
                         {"filter_linewidth_hz", c.filter_linewidth_hz},
                         {"noise_equivalent_bandwidth_hz", noise_equivalent_bandwidth(gamma_f)},
                         {"digital_noise_bandwidth_hz",
                          design_bandpass(omega, gamma_f, trace.sample_rate, EstimateKind::position)
                              .noise_bandwidth(trace.sample_rate)},
                         {"sample_rate_hz", trace.sample_rate},
                         {"gain_v_per_m", c.gain}};
  auto run = [&](Direction dir, const std::string& name) {
    const auto eq = bandpass_estimate(q, trace.sample_rate, omega, gamma_f, EstimateKind::position, dir, m);
    const auto ep = bandpass_estimate(q, trace.sample_rate, omega, gamma_f, EstimateKind::momentum, dir, m);
    // Skip the filter's settling interval at the start (forward) or end (backward).
    const auto settle = std::min<std::size_t>(
        q.size() / 2, static_cast<std::size_t>(std::ceil(10.0 / (8.0 * gamma_f) * trace.sample_rate)));
    const auto begin = dir == Direction::forward ? settle : 0;
    const auto end = dir == Direction::forward ? q.size() : q.size() - settle;
    const std::vector<double> sq(eq.begin() + static_cast<std::ptrdiff_t>(begin), eq.begin() + static_cast<std::ptrdiff_t>(end));
    const std::vector<double> sp(ep.begin() + static_cast<std::ptrdiff_t>(begin), ep.begin() + static_cast<std::ptrdiff_t>(end));
    const VarianceEstimate vq = variance_with_se(sq, c.batches);
    const VarianceEstimate vp = variance_with_se(sp, c.batches);
    side[name] = {{"position_variance_m2", vq.variance}, {"position_variance_se_m2", vq.standard_error},
                  {"momentum_variance", vp.variance}, {"momentum_variance_se", vp.standard_error},
                  {"settling_samples_excluded", settle}};
    ctx.check(name + " estimate finite", all_finite(eq) && all_finite(ep));
    t.columns.push_back("q_" + name + "_m");
    t.columns.push_back("p_" + name + "_kg_m_s");
    cols.push_back(eq);
    cols.push_back(ep);
  };
  if (c.forward) run(Direction::forward, "forward");
  if (c.backward) run(Direction::backward, "backward");
  if (!truth.is_null()) side["synthesis_truth"] = truth;

  for (std::size_t i = 0; i < q.size(); ++i) {
    std::vector<Cell> row{static_cast<double>(i) / trace.sample_rate};
    for (const auto& col : cols) row.emplace_back(col[i]);
    t.add(std::move(row));
  }
  ctx.out.table("estimate", t);
  ctx.out.json("estimate_summary", side);
}

// ---------------------------------------------------------------------------------------------
// duffing-fit

std::vector<DuffingPoint> read_duffing_points(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::string line;
  std::vector<DuffingPoint> pts;
  std::size_t lineno = 0;
  bool header = false;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    if (!header) {
      if (line.rfind("rms_m,frequency_hz", 0) != 0) {
        throw std::runtime_error(path + ": line " + std::to_string(lineno) +
                                 ": expected header rms_m,frequency_hz");
      }
      header = true;
      continue;
    }
    std::istringstream row(line);
    row.imbue(std::locale::classic());
    double rms = 0.0, f = 0.0;
    char comma = 0;
    if (!(row >> rms >> comma >> f) || comma != ',') {
      throw std::runtime_error(path + ": line " + std::to_string(lineno) + ": cannot parse row");
    }
    pts.push_back({rms, two_pi * f});
  }
  return pts;
}

void cmd_duffing(Context& ctx) {
  const Scenario& s = ctx.scenario;
  const DuffingConfig& c = require(s.duffing, "/analysis/duffing");
  const int r = index(c.row);
  const double omega0 = c.frequency0_hz ? two_pi * *c.frequency0_hz : s.trap.omega(r);
  Eigen::Vector3d fixed = c.fixed_rms.cwiseProduct(c.fixed_rms);
  fixed(r) = 0.0;

  std::vector<DuffingPoint> pts;
  if (c.synthesize) {
    pts = synthesize_duffing_points(1e12 * c.synthesize->xi_per_um2, omega0, c.synthesize->rms,
                                    fixed, c.row, c.synthesize->relative_noise, ctx.seed);
  } else {
    pts = read_duffing_points(c.points);
  }
  DuffingFitOptions fo;
  fo.row = c.row;
  fo.start_waist = c.start_waist;
  const DuffingTensor fit = fit_duffing(pts, omega0, fixed, fo);

  Table points;
  points.columns = {"rms_m", "frequency_hz", "model_frequency_hz"};
  for (const auto& p : pts) {
    Eigen::Vector3d msq = fixed;
    msq(r) = p.rms * p.rms;
    points.add({p.rms, p.omega / two_pi, duffing_frequency(omega0, msq, c.row, fit.xi) / two_pi});
  }
  ctx.out.table("duffing_points", points);

  Table t;
  t.columns = {"component", "xi_per_um2", "xi_se_per_um2", "identifiable", "waist_m"};
  const Eigen::Vector3d w = fit.waists();
  for (Axis a : all_axes) {
    const int j = index(a);
    t.add({std::string(1, axis_name(a)), 1e-12 * fit.xi(j), 1e-12 * fit.xi_se(j),
           static_cast<std::int64_t>(fit.identifiable[j]), w(j)});
  }
  ctx.out.csv("duffing_fit", t);
  std::vector<double> sv(fit.singular_values.data(), fit.singular_values.data() + fit.singular_values.size());
  ctx.out.json("duffing_fit", {{"row", std::string(1, axis_name(c.row))},
                               {"frequency0_hz", omega0 / two_pi},
                               {"fixed_rms_m", {c.fixed_rms(0), c.fixed_rms(1), c.fixed_rms(2)}},
                               {"rank", fit.rank},
                               {"singular_values", sv},
                               {"hardening_warning", fit.hardening},
                               {"rms_residual_rad_s", fit.rms_residual},
                               {"points", pts.size()}});
  ctx.check("duffing fit finite", fit.xi.allFinite());

  if (!c.trapped_rms.empty()) {
    // Direct integration in the Gaussian potential, noiseless, gravity off.
    const double m = s.particle.mass();
    const Eigen::Vector3d wz = s.trap.waists();
    const double k = (c.row == Axis::z ? 2.0 : 4.0) * s.trap.depth / (wz(r) * wz(r));
    const double omega_pot = std::sqrt(k / m);
    EnvironmentParams still = s.env;
    still.damping_gamma = 0.0;
    TrappedOptions to;
    to.gravity = false;
    to.dt = 2.0 * constants::pi / omega_pot / 2000.0;
    Table tr;
    tr.columns = {"rms_m", "simulated_frequency_hz", "predicted_frequency_hz", "relative_difference"};
    for (double rms : c.trapped_rms) {
      PhasePoint x0;
      x0.q(r) = std::sqrt(2.0) * rms;
      Rng rng = trajectory_rng(ctx.seed, 0);
      const Trajectory traj = simulate_trapped(x0, s.trap, m, c.trapped_duration, still, rng, to);
      const double sim = oscillation_frequency(traj.q[r], to.dt);
      Eigen::Vector3d msq = Eigen::Vector3d::Zero();
      msq(r) = rms * rms;
      const double pred = duffing_frequency(omega_pot, msq, c.row, gaussian_duffing_tensor(s.trap));
      tr.add({rms, sim / two_pi, pred / two_pi, sim / pred - 1.0});
      ctx.check("trapped run kept the particle at rms=" + format_double(rms), !traj.lost);
    }
    ctx.out.table("duffing_trapped", tr);
  }
}

using Handler = void (*)(Context&);

const std::map<std::string, Handler>& handlers() {
  static const std::map<std::string, Handler> h{
      {"simulate", cmd_simulate},   {"sweep-energy", cmd_sweep_energy},
      {"expansion", cmd_expansion}, {"lossmap", cmd_lossmap},
      {"calibrate", cmd_calibrate}, {"estimate", cmd_estimate},
      {"duffing-fit", cmd_duffing}};
  return h;
}

}  // namespace

const std::vector<std::string>& command_names() {
  static const std::vector<std::string> names{"simulate", "sweep-energy", "expansion", "lossmap",
                                              "calibrate", "estimate", "duffing-fit"};
  return names;
}

CommandReport run_command(const std::string& name, const Scenario& scenario,
                          const RunOptions& options) {
  const auto it = handlers().find(name);
  if (it == handlers().end()) throw std::invalid_argument("unknown command '" + name + "'");
  Metadata meta;
  meta.command = name;
  meta.scenario_hash = scenario.hash;
  meta.seed = options.seed.value_or(scenario.seed);
  ArtifactWriter out(resolve_out_dir(scenario, options), meta, options.format);
  CommandReport report;
  Context ctx{scenario, out, report.checks, meta.seed, std::max(1, options.threads)};
  it->second(ctx);

  nlohmann::json checks = nlohmann::json::array();
  for (const auto& c : report.checks) {
    checks.push_back({{"name", c.name}, {"passed", c.passed}, {"detail", c.detail}});
  }
  nlohmann::json artifacts = nlohmann::json::array();
  for (const auto& p : out.written()) artifacts.push_back(p.filename().string());
  out.json("run_summary", {{"artifacts", artifacts}, {"checks", checks}, {"ok", report.ok()}});
  report.artifacts = out.written();
  return report;
}

}  // namespace freefall::cli
