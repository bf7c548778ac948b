#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "dtsync/config.hpp"

namespace dtsync {

inline constexpr const char* kVersion = "0.1.0";

// "# dtsync-version=... config-hash=... seed=..." (no trailing newline).
std::string provenance_line(const ExperimentConfig& config, std::uint64_t seed);

// Writes `content` to a temporary file next to `path` and renames it into
// place. Parent directories are created.
void write_file_atomic(const std::filesystem::path& path, const std::string& content);

// Files produced by a command, in creation order.
using Outputs = std::vector<std::filesystem::path>;

// policy.csv and solve.csv for the configured MDP.
Outputs cmd_solve(const ExperimentConfig& config, const std::filesystem::path& out_dir);

// metrics.csv: one row per (policy, p_tx, q, omega, C) of the sweep axes.
Outputs cmd_simulate(const ExperimentConfig& config, const std::filesystem::path& out_dir);

// cost_curve.csv, solution.csv and comparison.csv for the configured
// deployment instance.
Outputs cmd_deploy(const ExperimentConfig& config, const std::filesystem::path& out_dir);

inline const std::vector<std::string>& figure_ids() {
  static const std::vector<std::string> ids{"fig-convergence", "fig-deploy-compare",
                                            "fig-total-cost", "fig-breakdown"};
  return ids;
}

// CSV bundle for one figure id; throws ConfigError on an unknown id.
Outputs cmd_experiment(const std::string& figure_id, const ExperimentConfig& config,
                       const std::filesystem::path& out_dir);

// One simulated metrics row per sweep point and policy, in sweep order.
std::vector<MetricsRow> simulate_sweep(const ExperimentConfig& config);

struct DeployComparison {
  std::size_t devices = 0;
  std::size_t base_stations = 0;
  std::string method;
  std::vector<double> objectives;  // one per instance
  double mean = 0.0;
};

// Trains one policy per (K, B) of the sweep on the configured seed and
// compares its greedy solutions with the nearest and random baselines over
// `sweep.instances` topologies.
std::vector<DeployComparison> compare_deployments(const ExperimentConfig& config);

}  // namespace dtsync
