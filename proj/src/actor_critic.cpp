#include "dtsync/actor_critic.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "dtsync/errors.hpp"

namespace dtsync {
namespace {

constexpr double kSpectralNorm = 20.0;  // bits/s/Hz used to scale log-rates
constexpr double kInitialHostLogit = 2.0;

double area_diagonal(const TopologyConfig& cfg) {
  return std::hypot(cfg.area_width_m, cfg.area_height_m);
}

double spectral_efficiency(const Topology& topo, std::size_t k, std::size_t b,
                           const RadioParams& radio) {
  return achievable_rate(topo.gain(k, b), radio) / radio.bandwidth_hz;
}

int hosted_capacity(const Topology& topo, const std::vector<std::uint8_t>& hosts) {
  int total = 0;
  for (std::size_t b = 0; b < topo.num_bs(); ++b)
    if (hosts[b]) total += topo.server_dt_capacity[b];
  return total;
}

double uniform_open(Rng& rng) {
  std::uniform_real_distribution<double> u(std::numeric_limits<double>::min(), 1.0);
  return u(rng);
}

}  // namespace

void LearnerConfig::validate() const {
  if (hidden_width < 1) throw InvalidParameter("learner.hidden_width must be >= 1");
  if (!(actor_lr > 0.0)) throw InvalidParameter("learner.actor_lr must be > 0");
  if (!(critic_lr > 0.0)) throw InvalidParameter("learner.critic_lr must be > 0");
  if (!(discount > 0.0 && discount <= 1.0)) throw InvalidParameter("learner.discount must lie in (0, 1]");
  if (!(noise_start > 0.0)) throw InvalidParameter("learner.noise_start must be > 0");
  if (!(noise_end > 0.0)) throw InvalidParameter("learner.noise_end must be > 0");
  if (iterations < 1) throw InvalidParameter("learner.iterations must be >= 1");
  if (episode_length < 1) throw InvalidParameter("learner.episode_length must be >= 1");
  if (batch < 1) throw InvalidParameter("learner.batch must be >= 1");
  if (eval_rollouts < 1) throw InvalidParameter("learner.eval_rollouts must be >= 1");
  if (!(entropy_weight >= 0.0)) throw InvalidParameter("learner.entropy_weight must be >= 0");
  if (!(grad_clip > 0.0)) throw InvalidParameter("learner.grad_clip must be > 0");
}

DeploymentPolicy::DeploymentPolicy(int hidden_width, Rng& rng)
    : pair_net_({kPairFeatures, hidden_width, hidden_width, 1}, rng),
      host_net_({kHostFeatures, hidden_width, hidden_width, 1}, rng),
      critic_({kCriticFeatures, hidden_width, hidden_width, 1}, rng, 1.0) {
  // Start out hosting on every BS with high probability.
  host_net_.params()(static_cast<Eigen::Index>(host_net_.num_params()) - 1) = kInitialHostLogit;
}

DeploymentSolution DeploymentPolicy::act(const DeployEnv& env, const DeployEnvState& state,
                                         double temperature, Rng& rng, Decisions* decisions) const {
  const Topology& topo = state.topo;
  const Scenario sc = env.scenario_for(topo);
  const TopologyConfig& cfg = env.topo_config();
  const std::size_t K = topo.num_devices(), B = topo.num_bs();
  const double diag = area_diagonal(cfg);
  const double per_device_scale = env.latency_scale() * static_cast<double>(B);
  const bool explore = temperature > 0.0;
  if (decisions) {
    *decisions = Decisions{};
    decisions->temperature = temperature;
  }
  const std::vector<int> prev_counts = state.solution.hosted_counts();

  // Hosting decisions.
  Eigen::MatrixXd hx(kHostFeatures, static_cast<Eigen::Index>(B));
  const int capacity_all = std::accumulate(topo.server_dt_capacity.begin(), topo.server_dt_capacity.end(), 0);
  for (std::size_t b = 0; b < B; ++b) {
    double se = 0.0, dist = 0.0;
    for (std::size_t k = 0; k < K; ++k) {
      se += spectral_efficiency(topo, k, b, sc.radio);
      dist += topo.device_distance(k, b);
    }
    const auto col = static_cast<Eigen::Index>(b);
    hx(0, col) = topo.server_cycles[b] / cfg.server_cycles_max;
    hx(1, col) = static_cast<double>(topo.server_dt_capacity[b]) / static_cast<double>(K);
    hx(2, col) = se / static_cast<double>(K) / kSpectralNorm;
    hx(3, col) = dist / static_cast<double>(K) / diag;
    hx(4, col) = state.solution.host_flags[b];
    hx(5, col) = static_cast<double>(prev_counts[b]) / topo.server_dt_capacity[b];
    hx(6, col) = static_cast<double>(capacity_all) / static_cast<double>(K);
  }
  const Eigen::MatrixXd host_logits = host_net_.forward(hx);
  std::vector<std::uint8_t> hosts(B, 0);
  for (std::size_t b = 0; b < B; ++b) {
    double l = host_logits(0, static_cast<Eigen::Index>(b));
    if (explore) {
      const double u = uniform_open(rng);
      l += temperature * std::log(u / (1.0 - u + std::numeric_limits<double>::min()));
    }
    hosts[b] = l > 0.0 ? 1 : 0;
  }
  if (decisions) {
    for (std::size_t b = 0; b < B; ++b) decisions->host_inputs.push_back(hx.col(static_cast<Eigen::Index>(b)));
    decisions->host_choices = hosts;
  }
  std::vector<std::size_t> by_capacity(B);
  std::iota(by_capacity.begin(), by_capacity.end(), std::size_t{0});
  std::stable_sort(by_capacity.begin(), by_capacity.end(), [&](std::size_t a, std::size_t b) {
    return topo.server_dt_capacity[a] > topo.server_dt_capacity[b];
  });
  if (std::none_of(hosts.begin(), hosts.end(), [](std::uint8_t h) { return h != 0; }))
    hosts[by_capacity.front()] = 1;
  for (std::size_t b : by_capacity) {
    if (hosted_capacity(topo, hosts) >= static_cast<int>(K)) break;
    hosts[b] = 1;
  }

  // Communication part of the latency for every (device, server) pair.
  std::vector<double> comm(K * B), bits(K);
  for (std::size_t k = 0; k < K; ++k) {
    bits[k] = sc.lat.history_bits[k] + sc.lat.update_bits[k];
    for (std::size_t m = 0; m < B; ++m) {
      const std::size_t b = best_access_bs(k, m, sc);
      comm[k * B + m] = bits[k] / achievable_rate(topo.gain(k, b), sc.radio) +
                        sc.lat.backhaul_coeff * bits[k] * topo.bs_distance(b, m);
    }
  }

  std::vector<std::size_t> order(K);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return bits[a] > bits[b]; });

  // Sequential sweep: devices keep their previous server when it still
  // hosts, and each one in turn may move given everybody else's placement.
  std::vector<int> counts(B, 0), assign(K, -1);
  std::vector<double> load_bits(B, 0.0);
  for (std::size_t k = 0; k < K; ++k) {
    const int m = state.solution.host_of(k);
    if (m >= 0 && hosts[static_cast<std::size_t>(m)]) {
      assign[k] = m;
      ++counts[static_cast<std::size_t>(m)];
      load_bits[static_cast<std::size_t>(m)] += bits[k];
    }
  }
  for (std::size_t step = 0; step < K; ++step) {
    const std::size_t k = order[step];
    const int cur = assign[k];
    // Latency removed from the current server if k leaves it.
    double leave_gain = 0.0;
    if (cur >= 0) {
      const auto c = static_cast<std::size_t>(cur);
      const double per_bit = sc.lat.cycles_per_bit / topo.server_cycles[c];
      counts[c] -= 1;
      load_bits[c] -= bits[k];
      leave_gain = comm[k * B + c] + bits[k] * per_bit * (counts[c] + 1) + load_bits[c] * per_bit;
    }
    std::vector<std::size_t> cand;
    for (std::size_t m = 0; m < B; ++m)
      if (hosts[m] && counts[m] < topo.server_dt_capacity[m]) cand.push_back(m);
    Eigen::MatrixXd px(kPairFeatures, static_cast<Eigen::Index>(cand.size()));
    for (std::size_t c = 0; c < cand.size(); ++c) {
      const std::size_t m = cand[c];
      const double per_bit = sc.lat.cycles_per_bit / topo.server_cycles[m];
      const double own = bits[k] * per_bit * (counts[m] + 1);
      const double join_cost = comm[k * B + m] + own + load_bits[m] * per_bit;
      const auto col = static_cast<Eigen::Index>(c);
      px(0, col) = (join_cost - leave_gain) / per_device_scale;
      px(1, col) = comm[k * B + m] / per_device_scale;
      px(2, col) = own / per_device_scale;
      px(3, col) = static_cast<double>(counts[m]) / topo.server_dt_capacity[m];
      px(4, col) = static_cast<double>(topo.server_dt_capacity[m] - counts[m] - 1) / topo.server_dt_capacity[m];
      px(5, col) = topo.server_cycles[m] / cfg.server_cycles_max;
      px(6, col) = topo.device_distance(k, m) / diag;
      px(7, col) = spectral_efficiency(topo, k, m, sc.radio) / kSpectralNorm;
      px(8, col) = static_cast<int>(m) == cur ? 1.0 : 0.0;
      px(9, col) = static_cast<double>(step) / static_cast<double>(K);
    }
    const Eigen::MatrixXd logits = pair_net_.forward(px);
    std::size_t best = 0;
    double best_score = -std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < cand.size(); ++c) {
      double score = logits(0, static_cast<Eigen::Index>(c));
      if (explore) score += -temperature * std::log(-std::log(uniform_open(rng)));
      if (score > best_score) {
        best_score = score;
        best = c;
      }
    }
    const std::size_t m = cand[best];
    assign[k] = static_cast<int>(m);
    ++counts[m];
    load_bits[m] += bits[k];
    if (decisions) {
      decisions->pair_inputs.push_back(std::move(px));
      decisions->pair_choices.push_back(best);
    }
  }

  DeploymentSolution sol = solution_from_hosts(assign, sc);
  sol.host_flags = hosts;
  return sol;
}

Eigen::VectorXd DeploymentPolicy::critic_features(const DeployEnv& env, const DeployEnvState& state,
                                                  double progress) const {
  const Topology& topo = state.topo;
  const std::size_t K = topo.num_devices(), B = topo.num_bs();
  Eigen::VectorXd f(kCriticFeatures);
  f(0) = average_interaction_latency(state.solution, topo, env.scenario().lat, env.scenario().radio) /
         env.latency_scale();
  double hosting = 0.0, mean_load = 0.0, max_load = 0.0, se = 0.0;
  for (std::size_t b = 0; b < B; ++b) {
    hosting += state.solution.host_flags[b];
    const double load = static_cast<double>(state.active_dt_counts[b]) / topo.server_dt_capacity[b];
    mean_load += load;
    max_load = std::max(max_load, load);
  }
  for (double r : state.rates) se += r / env.scenario().radio.bandwidth_hz;
  f(1) = hosting / static_cast<double>(B);
  f(2) = mean_load / static_cast<double>(B);
  f(3) = max_load;
  f(4) = progress;
  f(5) = se / static_cast<double>(K * B) / kSpectralNorm;
  return f;
}

double DeploymentPolicy::value(const DeployEnv& env, const DeployEnvState& state, double progress) const {
  return critic_.forward(critic_features(env, state, progress))(0, 0);
}

DeploymentSolution greedy_solution(const DeploymentPolicy& policy, const DeployEnv& env,
                                   const Topology& topo, std::size_t rollouts,
                                   std::size_t episode_length, Rng& rng) {
  const Scenario sc = env.scenario_for(topo);
  DeploymentSolution best;
  double best_value = std::numeric_limits<double>::infinity();
  for (std::size_t r = 0; r < rollouts; ++r) {
    DeploymentSolution start = r == 0 ? nearest_baseline(sc) : random_baseline(sc, rng);
    DeployEnvState state = env.make_state(topo, std::move(start));
    for (std::size_t t = 0; t < episode_length; ++t) {
      DeploymentSolution sol = policy.act(env, state, 0.0, rng);
      const double value = deployment_objective(sol, sc);
      if (value < best_value) {
        best_value = value;
        best = sol;
      }
      if (sol == state.solution) break;
      state = env.make_state(topo, std::move(sol));
    }
  }
  return best;
}

TrainResult actor_critic_train(const DeployEnv& env, const LearnerConfig& config) {
  config.validate();
  Rng rng = make_rng(config.seed, 0xac7);
  TrainResult result;
  result.policy = DeploymentPolicy(config.hidden_width, rng);
  DeploymentPolicy& policy = result.policy;
  Adam pair_opt(policy.pair_net().num_params(), config.actor_lr);
  Adam host_opt(policy.host_net().num_params(), config.actor_lr);
  Adam critic_opt(policy.critic().num_params(), config.critic_lr);

  const std::size_t n_env = config.batch;
  const double L = static_cast<double>(config.episode_length);
  std::vector<DeployEnvState> states;
  std::vector<std::size_t> steps(n_env, 0);
  auto fresh_state = [&](const Topology& topo) {
    return env.make_state(topo, random_baseline(env.scenario_for(topo), rng));
  };
  for (std::size_t e = 0; e < n_env; ++e) states.push_back(fresh_state(env.scenario().topo));

  result.cost_curve.reserve(config.iterations);
  double initial_cost = 0.0;
  std::size_t diverging = 0;
  std::vector<DeploymentPolicy::Decisions> decisions(n_env);
  std::vector<double> advantage(n_env), value_now(n_env), target(n_env);
  std::vector<Eigen::VectorXd> critic_inputs(n_env);
  std::vector<EnvStep> outcomes(n_env);

  for (std::size_t it = 0; it < config.iterations; ++it) {
    const double frac = config.iterations > 1 ? static_cast<double>(it) / static_cast<double>(config.iterations - 1) : 1.0;
    const double temperature = config.noise_start + (config.noise_end - config.noise_start) * frac;

    double mean_cost = 0.0;
    for (std::size_t e = 0; e < n_env; ++e) {
      const double progress = static_cast<double>(steps[e]) / L;
      critic_inputs[e] = policy.critic_features(env, states[e], progress);
      value_now[e] = policy.critic().forward(critic_inputs[e])(0, 0);
      DeploymentSolution sol = policy.act(env, states[e], temperature, rng, &decisions[e]);
      outcomes[e] = env.step_solution(states[e], std::move(sol), rng);
      const bool done = steps[e] + 1 >= config.episode_length;
      double bootstrap = 0.0;
      if (!done) bootstrap = policy.value(env, outcomes[e].next, static_cast<double>(steps[e] + 1) / L);
      target[e] = outcomes[e].reward + config.discount * bootstrap;
      advantage[e] = target[e] - value_now[e];
      mean_cost += outcomes[e].deployment_cost;
    }
    mean_cost /= static_cast<double>(n_env);
    result.cost_curve.push_back(mean_cost);

    if (it == 0) initial_cost = mean_cost;
    if (!std::isfinite(mean_cost) || mean_cost > 10.0 * std::abs(initial_cost)) {
      if (++diverging >= 100) throw TrainingFailure("deployment cost diverged during training");
    } else {
      diverging = 0;
    }

    // Normalized advantages for the actor.
    double mean_adv = 0.0, var_adv = 0.0;
    for (double a : advantage) mean_adv += a;
    mean_adv /= static_cast<double>(n_env);
    for (double a : advantage) var_adv += (a - mean_adv) * (a - mean_adv);
    const double sd_adv = std::sqrt(var_adv / static_cast<double>(n_env));
    std::vector<double> norm_adv(n_env);
    for (std::size_t e = 0; e < n_env; ++e)
      norm_adv[e] = sd_adv > 1e-8 ? (advantage[e] - mean_adv) / sd_adv : advantage[e] - mean_adv;

    // Policy gradient of -A * log pi, where pi is the tempered softmax
    // (pairs) or tempered logistic (hosts) induced by the perturbed argmax.
    std::size_t pair_cols = 0, host_cols = 0;
    for (const auto& d : decisions) {
      for (const auto& m : d.pair_inputs) pair_cols += static_cast<std::size_t>(m.cols());
      host_cols += d.host_inputs.size();
    }
    Eigen::MatrixXd pair_x(kPairFeatures, static_cast<Eigen::Index>(pair_cols));
    Eigen::MatrixXd host_x(kHostFeatures, static_cast<Eigen::Index>(host_cols));
    {
      Eigen::Index pc = 0, hc = 0;
      for (const auto& d : decisions) {
        for (const auto& m : d.pair_inputs) {
          pair_x.middleCols(pc, m.cols()) = m;
          pc += m.cols();
        }
        for (const auto& v : d.host_inputs) host_x.col(hc++) = v;
      }
    }
    Mlp::Cache pair_cache, host_cache;
    const Eigen::MatrixXd pair_logits = policy.pair_net().forward(pair_x, &pair_cache);
    const Eigen::MatrixXd host_logits = policy.host_net().forward(host_x, &host_cache);
    Eigen::MatrixXd pair_grad = Eigen::MatrixXd::Zero(1, pair_logits.cols());
    Eigen::MatrixXd host_grad = Eigen::MatrixXd::Zero(1, host_logits.cols());
    const double inv_batch = 1.0 / static_cast<double>(n_env);
    {
      Eigen::Index pc = 0, hc = 0;
      for (std::size_t e = 0; e < n_env; ++e) {
        const auto& d = decisions[e];
        const double tau = d.temperature;
        const double w = -norm_adv[e] * inv_batch / tau;
        const double h = config.entropy_weight * inv_batch / tau;
        for (std::size_t i = 0; i < d.pair_inputs.size(); ++i) {
          const Eigen::Index n = d.pair_inputs[i].cols();
          Eigen::ArrayXd z = pair_logits.block(0, pc, 1, n).transpose().array() / tau;
          z -= z.maxCoeff();
          Eigen::ArrayXd p = z.exp();
          p /= p.sum();
          const Eigen::ArrayXd logp = p.max(1e-300).log();
          const double entropy = -(p * logp).sum();
          for (Eigen::Index c = 0; c < n; ++c) {
            const double chosen = static_cast<std::size_t>(c) == d.pair_choices[i] ? 1.0 : 0.0;
            pair_grad(0, pc + c) = w * (chosen - p(c)) + h * p(c) * (logp(c) + entropy);
          }
          pc += n;
        }
        for (std::size_t b = 0; b < d.host_inputs.size(); ++b) {
          const double z = host_logits(0, hc) / tau;
          const double prob = 1.0 / (1.0 + std::exp(-z));
          host_grad(0, hc) = w * (static_cast<double>(d.host_choices[b]) - prob) + h * prob * (1.0 - prob) * z;
          ++hc;
        }
      }
    }
    Eigen::VectorXd g_pair = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(policy.pair_net().num_params()));
    Eigen::VectorXd g_host = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(policy.host_net().num_params()));
    policy.pair_net().backward(pair_cache, pair_grad, g_pair);
    policy.host_net().backward(host_cache, host_grad, g_host);

    // Critic regression onto the TD(0) targets.
    Eigen::MatrixXd cx(kCriticFeatures, static_cast<Eigen::Index>(n_env));
    for (std::size_t e = 0; e < n_env; ++e) cx.col(static_cast<Eigen::Index>(e)) = critic_inputs[e];
    Mlp::Cache critic_cache;
    const Eigen::MatrixXd v = policy.critic().forward(cx, &critic_cache);
    Eigen::MatrixXd critic_grad(1, static_cast<Eigen::Index>(n_env));
    for (std::size_t e = 0; e < n_env; ++e)
      critic_grad(0, static_cast<Eigen::Index>(e)) = (v(0, static_cast<Eigen::Index>(e)) - target[e]) * inv_batch;
    Eigen::VectorXd g_critic = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(policy.critic().num_params()));
    policy.critic().backward(critic_cache, critic_grad, g_critic);

    clip_norm(g_pair, config.grad_clip);
    clip_norm(g_host, config.grad_clip);
    clip_norm(g_critic, config.grad_clip);
    pair_opt.step(policy.pair_net().params(), g_pair);
    host_opt.step(policy.host_net().params(), g_host);
    critic_opt.step(policy.critic().params(), g_critic);
    if (!policy.pair_net().params().allFinite() || !policy.host_net().params().allFinite() ||
        !policy.critic().params().allFinite())
      throw TrainingFailure("network parameters became non-finite");

    for (std::size_t e = 0; e < n_env; ++e) {
      if (++steps[e] >= config.episode_length) {
        steps[e] = 0;
        states[e] = fresh_state(outcomes[e].next.topo);
      } else {
        states[e] = std::move(outcomes[e].next);
      }
    }
  }

  result.greedy = greedy_solution(policy, env, env.scenario().topo, config.eval_rollouts,
                                  config.episode_length, rng);
  result.greedy_objective = deployment_objective(result.greedy, env.scenario());
  result.greedy_cost = env.deployment_cost(result.greedy, env.scenario().topo);
  return result;
}

}  // namespace dtsync
