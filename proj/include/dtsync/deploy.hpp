#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "dtsync/deployment_solution.hpp"
#include "dtsync/net_model.hpp"
#include "dtsync/rng.hpp"

namespace dtsync {

struct Violation {
  enum class Kind {
    kShape,       // dimensions disagree with the topology
    kBinary,      // entry other than 0/1
    kCapacity,    // too many twins on a server, or twins on a non-hosting BS
    kAssignment,  // device without exactly one hosting server
    kCompute,     // allocated processing exceeds the server
    kAccess,      // device without exactly one access BS
  };
  Kind kind;
  std::size_t index;  // device or BS the violation refers to
  std::string message;
};

std::vector<Violation> check_feasible(const DeploymentSolution& sol, const Topology& topo);
inline bool is_feasible(const DeploymentSolution& sol, const Topology& topo) {
  return check_feasible(sol, topo).empty();
}

// Average interaction latency of a solution, equal compute split per server.
double deployment_objective(const DeploymentSolution& sol, const Scenario& sc);

// Sets the access BS of every device to the one minimizing its
// communication latency towards its hosting server.
void assign_access(DeploymentSolution& sol, const Scenario& sc);

// Builds a solution from per-device hosting servers; hosts are exactly the
// servers that receive at least one twin.
DeploymentSolution solution_from_hosts(const std::vector<int>& host_of_device, const Scenario& sc);

struct OracleLimits {
  std::size_t max_bs = 4;
  std::size_t max_devices = 6;
};

bool within_oracle_limits(const Topology& topo, const OracleLimits& limits = {});

// Exact minimizer of deployment_objective over all host subsets and
// associations. Ties keep the first candidate in (host mask, association)
// lexicographic order.
DeploymentSolution exhaustive_oracle(const Scenario& sc, const OracleLimits& limits = {});

// Every BS hosts; devices in index order join their nearest BS with room.
DeploymentSolution nearest_baseline(const Scenario& sc);

// Random host set with enough capacity, then uniform association among
// hosts with room.
DeploymentSolution random_baseline(const Scenario& sc, Rng& rng);

// Unconstrained joint action: host flags per BS and a target server per
// device (-1 for none).
struct RawAction {
  std::vector<std::uint8_t> host_flags;
  std::vector<int> target;
};

RawAction to_raw_action(const DeploymentSolution& sol);

// Maps any raw action to a feasible solution.
DeploymentSolution repair_action(const RawAction& action, const Scenario& sc);

enum class Dynamics { kStatic, kFading, kMobility };

struct RewardParams {
  double latency_weight = 0.5;  // beta
  double per_dt_cost = 1.0;     // Theta
  double latency_scale = 0.0;   // <= 0: nearest-baseline latency of the initial topology
  double cost_scale = 0.0;      // <= 0: K * Theta

  void validate() const;
};

struct DeployEnvState {
  Topology topo;
  DeploymentSolution solution;
  std::vector<int> active_dt_counts;  // J_b
  std::vector<double> rates;          // K x B achievable rates
};

struct EnvStep {
  DeployEnvState next;
  DeploymentSolution solution;  // repaired action
  double reward = 0.0;
  double objective = 0.0;       // average interaction latency, seconds
  double deployment_cost = 0.0; // -reward
};

class DeployEnv {
 public:
  DeployEnv(Scenario scenario, TopologyConfig topo_config, RewardParams reward,
            Dynamics dynamics = Dynamics::kStatic);

  const Scenario& scenario() const { return scenario_; }
  const TopologyConfig& topo_config() const { return topo_config_; }
  const RewardParams& reward_params() const { return reward_; }
  Dynamics dynamics() const { return dynamics_; }
  double latency_scale() const { return latency_scale_; }
  double cost_scale() const { return cost_scale_; }

  DeployEnvState make_state(Topology topo, DeploymentSolution sol) const;
  DeployEnvState initial_state(const DeploymentSolution& sol) const;

  Scenario scenario_for(const Topology& topo) const;
  double reward(const DeploymentSolution& sol, const Topology& topo) const;
  double deployment_cost(const DeploymentSolution& sol, const Topology& topo) const {
    return -reward(sol, topo);
  }

  // Repairs and applies the action on the current topology, scores it, then
  // moves the topology according to the dynamics.
  EnvStep step(const DeployEnvState& state, const RawAction& action, Rng& rng) const;
  // Same as step() for an already feasible solution.
  EnvStep step_solution(const DeployEnvState& state, DeploymentSolution sol, Rng& rng) const;

 private:
  Scenario scenario_;
  TopologyConfig topo_config_;
  RewardParams reward_;
  Dynamics dynamics_;
  double latency_scale_ = 1.0;
  double cost_scale_ = 1.0;
};

EnvStep env_step(const DeployEnv& env, const DeployEnvState& state, const RawAction& action,
                 Rng& rng);

}  // namespace dtsync
