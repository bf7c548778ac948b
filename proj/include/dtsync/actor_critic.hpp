#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "dtsync/deploy.hpp"
#include "dtsync/mlp.hpp"

namespace dtsync {

struct LearnerConfig {
  int hidden_width = 64;  // two hidden layers
  double actor_lr = 1e-3;
  double critic_lr = 1e-3;
  double discount = 0.6;
  // Exploration temperature on the action logits, annealed linearly.
  double noise_start = 1.0;
  double noise_end = 0.1;
  std::size_t iterations = 5000;
  std::size_t episode_length = 8;
  std::size_t batch = 8;          // environments advanced per iteration
  std::size_t eval_rollouts = 8;  // greedy rollouts when extracting the final solution
  double entropy_weight = 0.01;  // bonus on the entropy of both action heads
  double grad_clip = 5.0;
  std::uint64_t seed = 1;

  void validate() const;
};

inline constexpr int kPairFeatures = 10;
inline constexpr int kHostFeatures = 7;
inline constexpr int kCriticFeatures = 6;

// Actor: a shared network scoring every (device, server) pair and a shared
// network producing a hosting logit per BS. Critic: state value.
class DeploymentPolicy {
 public:
  DeploymentPolicy() = default;
  DeploymentPolicy(int hidden_width, Rng& rng);

  // Inputs and choices of one constructed action, kept for the gradient.
  struct Decisions {
    std::vector<Eigen::VectorXd> host_inputs;
    std::vector<std::uint8_t> host_choices;
    std::vector<Eigen::MatrixXd> pair_inputs;  // one matrix (features x candidates) per device
    std::vector<std::size_t> pair_choices;
    double temperature = 1.0;
  };

  // One sweep over the devices (largest payload first): each device picks a
  // server given the placement of all others, starting from the solution in
  // `state`. The result is feasible. temperature <= 0 acts greedily;
  // otherwise logits are perturbed with Gumbel (pairs) or logistic (hosts)
  // noise of that scale.
  DeploymentSolution act(const DeployEnv& env, const DeployEnvState& state, double temperature,
                         Rng& rng, Decisions* decisions = nullptr) const;

  double value(const DeployEnv& env, const DeployEnvState& state, double progress) const;
  Eigen::VectorXd critic_features(const DeployEnv& env, const DeployEnvState& state,
                                  double progress) const;

  Mlp& pair_net() { return pair_net_; }
  Mlp& host_net() { return host_net_; }
  Mlp& critic() { return critic_; }
  const Mlp& pair_net() const { return pair_net_; }
  const Mlp& host_net() const { return host_net_; }
  const Mlp& critic() const { return critic_; }

 private:
  Mlp pair_net_;
  Mlp host_net_;
  Mlp critic_;
};

struct TrainResult {
  DeploymentPolicy policy;
  std::vector<double> cost_curve;  // mean deployment cost of the sampled actions per iteration
  DeploymentSolution greedy;       // best greedy solution on the initial topology
  double greedy_objective = 0.0;   // its average interaction latency
  double greedy_cost = 0.0;        // its deployment cost
};

// Best solution produced by greedy rollouts of `policy` on a fixed topology,
// starting once from the nearest baseline and otherwise from random
// baselines. The starting solutions themselves are not candidates.
DeploymentSolution greedy_solution(const DeploymentPolicy& policy, const DeployEnv& env,
                                   const Topology& topo, std::size_t rollouts,
                                   std::size_t episode_length, Rng& rng);

TrainResult actor_critic_train(const DeployEnv& env, const LearnerConfig& config);

}  // namespace dtsync
