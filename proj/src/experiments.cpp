#include "dtsync/experiments.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>
#include <unistd.h>

#include "dtsync/csv_format.hpp"
#include "dtsync/errors.hpp"
#include "dtsync/parallel.hpp"

namespace dtsync {
namespace fs = std::filesystem;

namespace {

constexpr std::uint64_t kInstanceStream = 0x1057;
constexpr std::uint64_t kRandomBaselineStream = 0x7a4d;
constexpr std::uint64_t kGreedyStream = 0x93ed;

std::ostringstream csv_stream(const ExperimentConfig& config, std::uint64_t seed) {
  std::ostringstream out;
  out << provenance_line(config, seed) << '\n';
  return out;
}

fs::path commit(const fs::path& out_dir, const char* name, const std::ostringstream& out,
                Outputs& outputs) {
  const fs::path path = out_dir / name;
  write_file_atomic(path, out.str());
  outputs.push_back(path);
  return path;
}

struct SweepPoint {
  double p_tx;
  double q;
  double update_cost;
  double weight;
};

std::vector<SweepPoint> sweep_points(const ExperimentConfig& config) {
  // An outage channel fixes p_tx, so the p_tx axis collapses to that value.
  const std::vector<double> p_axis = config.delivery.mode == DeliveryModel::Mode::kFixed
                                         ? config.sweep.p_tx
                                         : std::vector<double>{config.delivery.p_tx};
  std::vector<SweepPoint> points;
  for (double p : p_axis)
    for (double q : config.sweep.q)
      for (double c : config.sweep.update_cost)
        for (double w : config.sweep.weight) points.push_back({p, q, c, w});
  return points;
}

SimConfig sim_config_at(const ExperimentConfig& config, const SweepPoint& pt) {
  SimConfig sim = config.sim_config();
  if (config.delivery.mode == DeliveryModel::Mode::kFixed) sim.delivery = DeliveryModel::fixed(pt.p_tx);
  sim.content_q = pt.q;
  sim.update_cost = pt.update_cost;
  sim.weight = pt.weight;
  sim.workers = 1;
  return sim;
}

SchedulingPolicy make_policy(const std::string& name, const ExperimentConfig& config,
                             const MdpSpec& spec) {
  if (name == "zw") return zw_policy();
  if (name == "sac") return sac_policy();
  if (name == "threshold") {
    std::vector<std::optional<int>> thresholds;
    for (int d = 1; d <= spec.aoi_cap; ++d) thresholds.push_back(threshold_for(d, spec));
    return threshold_policy(std::move(thresholds));
  }
  RpiOptions opts;
  opts.max_iterations = config.mdp.max_iterations;
  opts.shortcut = config.mdp.shortcut;
  return threshold_policy(relative_policy_iteration(spec, opts).policy);
}

void write_breakdown_header(std::ostream& out) {
  out << "policy,p_tx,q,omega,C,avg_aoci,avg_update_cost,total_avg_cost\n";
}

Scenario scenario_with(const ExperimentConfig& config, std::uint64_t seed, std::size_t devices,
                       std::size_t bss) {
  TopologyConfig tc = config.topology;
  tc.num_devices = devices;
  tc.num_bs = bss;
  return sample_scenario(seed, tc, config.latency, config.radio.params());
}

TopologyConfig topo_with(const ExperimentConfig& config, std::size_t devices, std::size_t bss) {
  TopologyConfig tc = config.topology;
  tc.num_devices = devices;
  tc.num_bs = bss;
  return tc;
}

double mean_of(const std::vector<double>& v) {
  return v.empty() ? 0.0 : std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

double std_of(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  const double m = mean_of(v);
  double ss = 0.0;
  for (double x : v) ss += (x - m) * (x - m);
  return std::sqrt(ss / static_cast<double>(v.size() - 1));
}

std::vector<std::pair<std::size_t, std::size_t>> deploy_pairs(const ExperimentConfig& config) {
  std::vector<std::pair<std::size_t, std::size_t>> pairs;
  for (int k : config.sweep.devices)
    for (int b : config.sweep.base_stations)
      pairs.emplace_back(static_cast<std::size_t>(k), static_cast<std::size_t>(b));
  return pairs;
}

}  // namespace

std::string provenance_line(const ExperimentConfig& config, std::uint64_t seed) {
  return std::string("# dtsync-version=") + kVersion + " config-hash=" + config_hash_hex(config) +
         " seed=" + std::to_string(seed);
}

void write_file_atomic(const fs::path& path, const std::string& content) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  fs::path tmp = path;
  tmp += ".tmp." + std::to_string(::getpid());
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + tmp.string());
    out << content;
    out.flush();
    if (!out) throw std::runtime_error("failed writing " + tmp.string());
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) {
    fs::remove(tmp);
    throw std::runtime_error("cannot move " + tmp.string() + " to " + path.string() + ": " +
                             ec.message());
  }
}

Outputs cmd_solve(const ExperimentConfig& config, const fs::path& out_dir) {
  const MdpSpec spec = config.mdp_spec();
  RpiOptions opts;
  opts.max_iterations = config.mdp.max_iterations;
  opts.shortcut = config.mdp.shortcut;
  const SolveResult result = relative_policy_iteration(spec, opts);

  Outputs outputs;
  auto policy = csv_stream(config, config.seed);
  write_policy_csv(policy, result.policy);
  commit(out_dir, "policy.csv", policy, outputs);

  auto solve = csv_stream(config, config.seed);
  write_solve_csv(solve, result, spec);
  commit(out_dir, "solve.csv", solve, outputs);
  return outputs;
}

std::vector<MetricsRow> simulate_sweep(const ExperimentConfig& config) {
  const auto points = sweep_points(config);
  const auto& policies = config.sweep.policies;
  std::vector<MetricsRow> rows(points.size() * policies.size());
  parallel_for(
      rows.size(),
      [&](std::size_t i) {
        const SweepPoint& pt = points[i / policies.size()];
        const std::string& name = policies[i % policies.size()];
        const SimConfig sim = sim_config_at(config, pt);
        const SchedulingPolicy policy = make_policy(name, config, sim.mdp());
        MetricsRow& row = rows[i];
        row.policy = name;
        row.p_tx = pt.p_tx;
        row.q = pt.q;
        row.omega = pt.weight;
        row.update_cost = pt.update_cost;
        row.metrics = run_monte_carlo(policy, sim);
      },
      config.simulation.workers);
  return rows;
}

Outputs cmd_simulate(const ExperimentConfig& config, const fs::path& out_dir) {
  const auto rows = simulate_sweep(config);
  Outputs outputs;
  auto out = csv_stream(config, config.simulation.seed);
  write_metrics_header(out);
  for (const auto& row : rows) write_metrics_row(out, row);
  commit(out_dir, "metrics.csv", out, outputs);
  return outputs;
}

Outputs cmd_deploy(const ExperimentConfig& config, const fs::path& out_dir) {
  const Scenario sc = config.scenario_instance();
  const DeployEnv env(sc, config.topology, config.reward, config.dynamics);
  const TrainResult trained = actor_critic_train(env, config.learner);

  Outputs outputs;
  auto curve = csv_stream(config, config.learner.seed);
  curve << "iteration,deployment_cost\n";
  for (std::size_t i = 0; i < trained.cost_curve.size(); ++i)
    curve << i + 1 << ',' << fmt(trained.cost_curve[i]) << '\n';
  commit(out_dir, "cost_curve.csv", curve, outputs);

  auto solution = csv_stream(config, config.seed);
  solution << "device,host_bs,access_bs\n";
  for (std::size_t k = 0; k < trained.greedy.num_devices; ++k)
    solution << k << ',' << trained.greedy.host_of(k) << ',' << trained.greedy.access_of(k) << '\n';
  commit(out_dir, "solution.csv", solution, outputs);

  struct Row {
    std::string method;
    double objective;
    double cost;
  };
  std::vector<Row> rows;
  rows.push_back({"proposed", trained.greedy_objective, trained.greedy_cost});
  const auto nearest = nearest_baseline(sc);
  rows.push_back({"nearest", deployment_objective(nearest, sc), env.deployment_cost(nearest, sc.topo)});
  std::vector<double> rand_obj, rand_cost;
  for (std::size_t i = 0; i < config.sweep.instances; ++i) {
    Rng rng = make_rng(config.seed, kRandomBaselineStream, i);
    const auto sol = random_baseline(sc, rng);
    rand_obj.push_back(deployment_objective(sol, sc));
    rand_cost.push_back(env.deployment_cost(sol, sc.topo));
  }
  rows.push_back({"random", mean_of(rand_obj), mean_of(rand_cost)});

  const bool with_oracle = within_oracle_limits(sc.topo);
  double oracle_obj = 0.0;
  if (with_oracle) {
    const auto oracle = exhaustive_oracle(sc);
    oracle_obj = deployment_objective(oracle, sc);
    rows.push_back({"oracle", oracle_obj, env.deployment_cost(oracle, sc.topo)});
  }

  auto cmp = csv_stream(config, config.seed);
  cmp << "method,objective_s,deployment_cost" << (with_oracle ? ",oracle_gap" : "") << '\n';
  for (const auto& r : rows) {
    cmp << r.method << ',' << fmt(r.objective) << ',' << fmt(r.cost);
    if (with_oracle) cmp << ',' << fmt((r.objective - oracle_obj) / oracle_obj);
    cmp << '\n';
  }
  commit(out_dir, "comparison.csv", cmp, outputs);
  return outputs;
}

std::vector<DeployComparison> compare_deployments(const ExperimentConfig& config) {
  std::vector<DeployComparison> out;
  for (const auto& [k, b] : deploy_pairs(config)) {
    const TopologyConfig tc = topo_with(config, k, b);
    const DeployEnv train_env(scenario_with(config, config.seed, k, b), tc, config.reward,
                              config.dynamics);
    const TrainResult trained = actor_critic_train(train_env, config.learner);

    DeployComparison proposed{k, b, "proposed", {}, 0.0};
    DeployComparison nearest{k, b, "nearest", {}, 0.0};
    DeployComparison random{k, b, "random", {}, 0.0};
    for (std::size_t i = 0; i < config.sweep.instances; ++i) {
      const std::uint64_t seed = derive_seed(config.seed, kInstanceStream, i);
      const Scenario sc = scenario_with(config, seed, k, b);
      const DeployEnv env(sc, tc, config.reward, config.dynamics);
      Rng greedy_rng = make_rng(seed, kGreedyStream);
      const auto sol = greedy_solution(trained.policy, env, sc.topo, config.learner.eval_rollouts,
                                       config.learner.episode_length, greedy_rng);
      proposed.objectives.push_back(deployment_objective(sol, sc));
      nearest.objectives.push_back(deployment_objective(nearest_baseline(sc), sc));
      Rng rng = make_rng(seed, kRandomBaselineStream);
      random.objectives.push_back(deployment_objective(random_baseline(sc, rng), sc));
    }
    for (auto* c : {&proposed, &nearest, &random}) {
      c->mean = mean_of(c->objectives);
      out.push_back(std::move(*c));
    }
  }
  return out;
}

Outputs cmd_experiment(const std::string& figure_id, const ExperimentConfig& config,
                       const fs::path& out_dir) {
  Outputs outputs;
  if (figure_id == "fig-convergence") {
    const auto pairs = deploy_pairs(config);
    std::vector<std::vector<double>> curves(pairs.size());
    parallel_for(
        pairs.size(),
        [&](std::size_t i) {
          const auto [k, b] = pairs[i];
          const DeployEnv env(scenario_with(config, config.seed, k, b), topo_with(config, k, b),
                              config.reward, config.dynamics);
          curves[i] = actor_critic_train(env, config.learner).cost_curve;
        },
        config.simulation.workers);
    auto out = csv_stream(config, config.learner.seed);
    out << "devices,base_stations,iteration,deployment_cost\n";
    for (std::size_t i = 0; i < pairs.size(); ++i)
      for (std::size_t it = 0; it < curves[i].size(); ++it)
        out << pairs[i].first << ',' << pairs[i].second << ',' << it + 1 << ',' << fmt(curves[i][it]) << '\n';
    commit(out_dir, "convergence.csv", out, outputs);
  } else if (figure_id == "fig-deploy-compare") {
    const auto rows = compare_deployments(config);
    auto out = csv_stream(config, config.seed);
    out << "devices,base_stations,method,mean_objective_s,std_objective_s,instances\n";
    for (const auto& r : rows)
      out << r.devices << ',' << r.base_stations << ',' << r.method << ',' << fmt(r.mean) << ','
          << fmt(std_of(r.objectives)) << ',' << r.objectives.size() << '\n';
    commit(out_dir, "deploy_compare.csv", out, outputs);
  } else if (figure_id == "fig-total-cost") {
    const auto rows = simulate_sweep(config);
    auto out = csv_stream(config, config.simulation.seed);
    write_metrics_header(out);
    for (const auto& row : rows) write_metrics_row(out, row);
    commit(out_dir, "total_cost.csv", out, outputs);
  } else if (figure_id == "fig-breakdown") {
    const auto rows = simulate_sweep(config);
    auto out = csv_stream(config, config.simulation.seed);
    write_breakdown_header(out);
    for (const auto& r : rows)
      out << r.policy << ',' << fmt(r.p_tx) << ',' << fmt(r.q) << ',' << fmt(r.omega) << ','
          << fmt(r.update_cost) << ',' << fmt(r.metrics.avg_aoci.mean) << ','
          << fmt(r.metrics.avg_update_cost.mean) << ',' << fmt(r.metrics.total_avg_cost.mean) << '\n';
    commit(out_dir, "breakdown.csv", out, outputs);
  } else {
    std::string known;
    for (const auto& id : figure_ids()) known += (known.empty() ? "" : ", ") + id;
    throw ConfigError("unknown figure id '" + figure_id + "' (expected one of " + known + ")");
  }
  return outputs;
}

}  // namespace dtsync
