#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "json.hpp"

#include "dtsync/actor_critic.hpp"
#include "dtsync/deploy.hpp"
#include "dtsync/net_model.hpp"
#include "dtsync/sched_mdp.hpp"
#include "dtsync/simulator.hpp"
#include "dtsync/state_process.hpp"

namespace dtsync {

struct RadioConfig {
  double bandwidth_hz = 20e6;
  double tx_power_dbm = 23.0;
  double noise_density_dbm_per_hz = -174.0;

  RadioParams params() const;
};

struct MdpConfig {
  int aoci_cap = 100;
  int aoi_cap = 100;
  double update_cost = 12.0;
  double weight = 1.0;
  std::size_t max_iterations = 1000;
  ShortcutMode shortcut = ShortcutMode::kTrust;
};

struct SimulationConfig {
  long horizon = 1000;
  long warmup = 0;
  std::size_t runs = 1000;
  std::uint64_t seed = 1;
  double slot_ms = 10.0;
  unsigned workers = 0;
};

struct SweepConfig {
  std::vector<double> p_tx{0.8};
  std::vector<double> q{0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0};
  std::vector<double> update_cost{12.0};
  std::vector<double> weight{1.0};
  std::vector<int> devices{20, 40, 60};
  std::vector<int> base_stations{6};
  std::vector<std::string> policies{"zw", "sac", "optimal"};
  std::size_t instances = 20;  // seeded topologies per deployment sweep point
};

struct ExperimentConfig {
  std::string scenario = "default";
  std::uint64_t seed = 1;  // topology and workload seed
  RadioConfig radio;
  TopologyConfig topology;
  WorkloadConfig latency;
  double content_q = 0.3;
  DeliveryModel delivery = DeliveryModel::fixed(0.8);
  MdpConfig mdp;
  RewardParams reward;
  LearnerConfig learner;
  Dynamics dynamics = Dynamics::kStatic;
  SimulationConfig simulation;
  SweepConfig sweep;

  // Throws ConfigError naming the offending parameter.
  void validate() const;

  MdpSpec mdp_spec() const;
  SimConfig sim_config() const;
  Scenario scenario_instance() const;
};

nlohmann::json to_json(const ExperimentConfig& config);
// Starts from defaults and applies `doc`; unknown sections or keys and
// mistyped values are rejected.
ExperimentConfig config_from_json(const nlohmann::json& doc);
ExperimentConfig load_config(const std::string& path);

// Applies "section.key=value" assignments in order. Values are parsed as
// JSON, falling back to a plain string.
ExperimentConfig apply_overrides(const ExperimentConfig& base, const std::vector<std::string>& assignments);

// FNV-1a over the canonical JSON form.
std::uint64_t config_hash(const ExperimentConfig& config);
std::string config_hash_hex(const ExperimentConfig& config);

}  // namespace dtsync
