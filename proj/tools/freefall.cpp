#include <iostream>
#include <map>
#include <string>

#include "CLI11.hpp"

#include "freefall/cli/commands.hpp"
#include "freefall/errors.hpp"

namespace {

constexpr int exit_failure = 1;
constexpr int exit_usage = 2;

}  // namespace

int main(int argc, char** argv) {
  using namespace freefall::cli;
  CLI::App app{"Trap-to-trap free-fall simulation and analysis"};
  app.set_version_flag("--version", std::string(FREEFALL_VERSION));
  app.require_subcommand(1);

  std::uint64_t seed = 0;
  std::string out_dir;
  std::string format = "csv";
  int threads = 1;
  auto* seed_opt = app.add_option("--seed", seed, "Override the scenario seed");
  auto* out_opt = app.add_option("--out-dir", out_dir,
                                 std::string("Output directory (else $") + out_dir_env +
                                     ", else the scenario's output_dir)");
  app.add_option("--threads", threads, "Worker threads")->check(CLI::PositiveNumber);
  app.add_option("--format", format, "Tabular output format")->check(CLI::IsMember({"csv", "json"}));

  std::string scenario_path;
  const std::map<std::string, std::string> about{
      {"simulate", "Free-fall ensemble moments and parabola fit over the tau grid"},
      {"sweep-energy", "Mean y energy at recapture over (d, tau), analytic and Monte Carlo"},
      {"expansion", "Phase-space expansion through the detector and bandpass estimator"},
      {"lossmap", "Loss probability and purity over (tau, n0)"},
      {"calibrate", "PSD peak fits, detector gains, radius and mass per axis"},
      {"estimate", "Forward/backward bandpass position and momentum estimates"},
      {"duffing-fit", "Duffing coefficients from frequency vs rms amplitude"}};
  for (const auto& name : command_names()) {
    auto* sub = app.add_subcommand(name, about.at(name));
    sub->add_option("scenario", scenario_path, "Scenario JSON file")->required();
    sub->fallthrough();
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : exit_usage;
  }

  const std::string command = app.get_subcommands().front()->get_name();
  RunOptions options;
  if (*seed_opt) options.seed = seed;
  if (*out_opt) options.out_dir = out_dir;
  options.threads = threads;
  options.format = parse_format(format);

  try {
    const Scenario scenario = load_scenario(scenario_path);
    const CommandReport report = run_command(command, scenario, options);
    for (const auto& p : report.artifacts) std::cout << p.string() << '\n';
    int failed = 0;
    for (const auto& c : report.checks) {
      if (!c.passed) {
        std::cerr << "check failed: " << c.name << (c.detail.empty() ? "" : " (" + c.detail + ")") << '\n';
        ++failed;
      }
    }
    return failed == 0 ? 0 : exit_failure;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return exit_usage;
  } catch (const freefall::FitError& e) {
    std::cerr << "fit failed: " << e.what() << '\n';
    return exit_failure;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return exit_failure;
  }
}
