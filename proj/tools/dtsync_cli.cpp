#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "dtsync/config.hpp"
#include "dtsync/errors.hpp"
#include "dtsync/experiments.hpp"

namespace {

enum ExitCode { kOk = 0, kRuntimeError = 1, kConfigError = 2 };

struct Options {
  std::string config_path;
  std::vector<std::string> overrides;
  std::string out_dir;
  std::string figure_id;
  bool print = false;
};

dtsync::ExperimentConfig resolve_config(const Options& opt) {
  dtsync::ExperimentConfig config;
  if (!opt.config_path.empty()) config = dtsync::load_config(opt.config_path);
  return dtsync::apply_overrides(config, opt.overrides);
}

std::filesystem::path resolve_out_dir(const Options& opt) {
  if (!opt.out_dir.empty()) return opt.out_dir;
  if (const char* env = std::getenv("DTSYNC_OUTPUT_DIR"); env && *env) return env;
  return "results";
}

void report(const dtsync::Outputs& outputs) {
  for (const auto& p : outputs) std::cout << "wrote " << p.string() << '\n';
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Digital-twin synchronization and placement experiments"};
  app.require_subcommand(1);
  app.fallthrough();
  app.set_version_flag("--version", dtsync::kVersion);

  Options opt;
  app.add_option("-c,--config", opt.config_path, "JSON configuration file")->check(CLI::ExistingFile);
  app.add_option("-s,--set", opt.overrides, "Override a value, e.g. --set mdp.update_cost=12")
      ->take_all();
  app.add_option("-o,--out", opt.out_dir, "Output directory (default: $DTSYNC_OUTPUT_DIR or ./results)");

  auto* solve = app.add_subcommand("solve", "Solve the scheduling MDP; writes policy.csv and solve.csv");
  auto* simulate = app.add_subcommand("simulate", "Simulate the policy sweep; writes metrics.csv");
  auto* deploy = app.add_subcommand("deploy", "Train the deployment learner and compare with baselines");
  auto* experiment = app.add_subcommand("experiment", "Produce the CSV bundle of one figure");
  experiment->add_option("figure-id", opt.figure_id, "Figure id")
      ->required()
      ->check(CLI::IsMember(dtsync::figure_ids()));
  auto* validate = app.add_subcommand("validate-config", "Check a configuration and exit");
  validate->add_flag("-p,--print", opt.print, "Print the resolved configuration as JSON");

  CLI11_PARSE(app, argc, argv);

  dtsync::ExperimentConfig config;
  try {
    config = resolve_config(opt);
  } catch (const dtsync::ConfigError& e) {
    std::cerr << "configuration error: " << e.what() << '\n';
    return kConfigError;
  }

  try {
    const auto out_dir = resolve_out_dir(opt);
    if (*validate) {
      if (opt.print) std::cout << dtsync::to_json(config).dump(2) << '\n';
      (opt.print ? std::cerr : std::cout) << "configuration ok (hash " << dtsync::config_hash_hex(config)
                                          << ")\n";
    } else if (*solve) {
      report(dtsync::cmd_solve(config, out_dir));
    } else if (*simulate) {
      report(dtsync::cmd_simulate(config, out_dir));
    } else if (*deploy) {
      report(dtsync::cmd_deploy(config, out_dir));
    } else if (*experiment) {
      report(dtsync::cmd_experiment(opt.figure_id, config, out_dir));
    }
  } catch (const dtsync::ConfigError& e) {
    std::cerr << "configuration error: " << e.what() << '\n';
    return kConfigError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kRuntimeError;
  }
  return kOk;
}
