#include "dtsync/deploy.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

#include "dtsync/errors.hpp"

namespace dtsync {
namespace {

std::string describe(const char* what, std::size_t index) {
  std::ostringstream msg;
  msg << what << " " << index;
  return msg.str();
}

int total_capacity(const Topology& topo, const std::vector<std::uint8_t>& hosts) {
  int total = 0;
  for (std::size_t b = 0; b < topo.num_bs(); ++b)
    if (hosts[b]) total += topo.server_dt_capacity[b];
  return total;
}

// BS indices sorted by distance from device k, ties by index.
std::vector<std::size_t> bs_by_distance(const Topology& topo, std::size_t k) {
  std::vector<std::size_t> order(topo.num_bs());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return topo.device_distance(k, a) < topo.device_distance(k, b);
  });
  return order;
}

int nearest_with_room(const Topology& topo, std::size_t k, const std::vector<std::uint8_t>& hosts,
                      const std::vector<int>& counts) {
  for (std::size_t b : bs_by_distance(topo, k))
    if (hosts[b] && counts[b] < topo.server_dt_capacity[b]) return static_cast<int>(b);
  return -1;
}

void check_shape(const Scenario& sc) {
  if (sc.topo.num_devices() == 0) throw InvalidParameter("topology has no devices");
  if (sc.topo.num_bs() == 0) throw InvalidParameter("topology has no base stations");
  if (sc.topo.server_dt_capacity.size() != sc.topo.num_bs())
    throw InvalidParameter("server capacity list does not match the number of BSs");
}

}  // namespace

std::vector<Violation> check_feasible(const DeploymentSolution& sol, const Topology& topo) {
  std::vector<Violation> out;
  const std::size_t K = topo.num_devices(), B = topo.num_bs();
  if (sol.num_devices != K || sol.num_bs != B || sol.host_flags.size() != B ||
      sol.association.size() != K * B || sol.access_assoc.size() != K * B) {
    out.push_back({Violation::Kind::kShape, 0, "solution dimensions do not match the topology"});
    return out;
  }
  for (std::size_t b = 0; b < B; ++b)
    if (sol.host_flags[b] > 1)
      out.push_back({Violation::Kind::kBinary, b, describe("non-binary host flag at BS", b)});
  for (std::size_t k = 0; k < K; ++k) {
    for (std::size_t b = 0; b < B; ++b) {
      if (sol.assoc(k, b) > 1 || sol.access(k, b) > 1)
        out.push_back({Violation::Kind::kBinary, k, describe("non-binary entry for device", k)});
    }
  }

  std::vector<int> counts(B, 0);
  for (std::size_t k = 0; k < K; ++k) {
    int row = 0, access_row = 0;
    for (std::size_t b = 0; b < B; ++b) {
      row += sol.assoc(k, b) != 0;
      access_row += sol.access(k, b) != 0;
      if (sol.assoc(k, b)) ++counts[b];
    }
    if (row != 1)
      out.push_back({Violation::Kind::kAssignment, k, describe("device is not hosted exactly once:", k)});
    if (access_row != 1)
      out.push_back({Violation::Kind::kAccess, k, describe("device has no unique access BS:", k)});
  }
  for (std::size_t b = 0; b < B; ++b) {
    if (!sol.host_flags[b] && counts[b] > 0)
      out.push_back({Violation::Kind::kCapacity, b, describe("twins placed on non-hosting BS", b)});
    if (counts[b] > topo.server_dt_capacity[b])
      out.push_back({Violation::Kind::kCapacity, b, describe("server capacity exceeded at BS", b)});
    if (counts[b] > 0) {
      const double share = topo.server_cycles[b] / counts[b];
      if (share * counts[b] > topo.server_cycles[b] * (1.0 + 1e-12))
        out.push_back({Violation::Kind::kCompute, b, describe("compute allocation exceeds server", b)});
    }
  }
  return out;
}

double deployment_objective(const DeploymentSolution& sol, const Scenario& sc) {
  return average_interaction_latency(sol, sc.topo, sc.lat, sc.radio);
}

void assign_access(DeploymentSolution& sol, const Scenario& sc) {
  std::fill(sol.access_assoc.begin(), sol.access_assoc.end(), std::uint8_t{0});
  for (std::size_t k = 0; k < sol.num_devices; ++k) {
    const int m = sol.host_of(k);
    if (m < 0) throw InvalidParameter(describe("cannot assign access for unhosted device", k));
    sol.access(k, best_access_bs(k, static_cast<std::size_t>(m), sc)) = 1;
  }
}

DeploymentSolution solution_from_hosts(const std::vector<int>& host_of_device, const Scenario& sc) {
  const std::size_t K = sc.topo.num_devices(), B = sc.topo.num_bs();
  if (host_of_device.size() != K) throw InvalidParameter("one server per device required");
  DeploymentSolution sol(K, B);
  for (std::size_t k = 0; k < K; ++k) {
    const int m = host_of_device[k];
    if (m < 0 || static_cast<std::size_t>(m) >= B) throw InvalidParameter("server index out of range");
    sol.assoc(k, static_cast<std::size_t>(m)) = 1;
    sol.host_flags[static_cast<std::size_t>(m)] = 1;
  }
  assign_access(sol, sc);
  return sol;
}

bool within_oracle_limits(const Topology& topo, const OracleLimits& limits) {
  return topo.num_bs() <= limits.max_bs && topo.num_devices() <= limits.max_devices;
}

DeploymentSolution exhaustive_oracle(const Scenario& sc, const OracleLimits& limits) {
  check_shape(sc);
  if (!within_oracle_limits(sc.topo, limits))
    throw InvalidParameter("instance exceeds the exhaustive search limits");
  const std::size_t K = sc.topo.num_devices(), B = sc.topo.num_bs();

  // table[(k * B + m) * (K + 1) + n]: latency of device k on server m shared by n twins.
  std::vector<double> table(K * B * (K + 1), 0.0);
  for (std::size_t k = 0; k < K; ++k)
    for (std::size_t m = 0; m < B; ++m) {
      const std::size_t b = best_access_bs(k, m, sc);
      for (std::size_t n = 1; n <= K; ++n)
        table[(k * B + m) * (K + 1) + n] = pair_interaction_latency(k, b, m, static_cast<int>(n), sc);
    }

  double best = std::numeric_limits<double>::infinity();
  std::uint32_t best_mask = 0;
  std::vector<int> best_assign;
  std::vector<int> assign(K), counts(B);
  for (std::uint32_t mask = 1; mask < (1u << B); ++mask) {
    std::vector<std::uint8_t> hosts(B);
    std::vector<int> host_list;
    for (std::size_t b = 0; b < B; ++b) {
      hosts[b] = (mask >> b) & 1u;
      if (hosts[b]) host_list.push_back(static_cast<int>(b));
    }
    if (total_capacity(sc.topo, hosts) < static_cast<int>(K)) continue;
    const std::size_t H = host_list.size();
    std::vector<std::size_t> digit(K, 0);  // device 0 is the most significant digit
    while (true) {
      std::fill(counts.begin(), counts.end(), 0);
      bool ok = true;
      for (std::size_t k = 0; k < K; ++k) {
        assign[k] = host_list[digit[k]];
        if (++counts[static_cast<std::size_t>(assign[k])] >
            sc.topo.server_dt_capacity[static_cast<std::size_t>(assign[k])])
          ok = false;
      }
      if (ok) {
        double total = 0.0;
        for (std::size_t k = 0; k < K; ++k) {
          const auto m = static_cast<std::size_t>(assign[k]);
          total += table[(k * B + m) * (K + 1) + static_cast<std::size_t>(counts[m])];
        }
        const double value = total / static_cast<double>(K * B);
        if (value < best) {
          best = value;
          best_mask = mask;
          best_assign = assign;
        }
      }
      std::size_t pos = K;
      while (pos > 0 && ++digit[pos - 1] == H) digit[--pos] = 0;
      if (pos == 0) break;
    }
  }
  if (best_assign.empty()) throw InvalidParameter("no feasible deployment exists");
  DeploymentSolution sol = solution_from_hosts(best_assign, sc);
  for (std::size_t b = 0; b < B; ++b) sol.host_flags[b] = (best_mask >> b) & 1u;
  return sol;
}

DeploymentSolution nearest_baseline(const Scenario& sc) {
  check_shape(sc);
  const std::size_t K = sc.topo.num_devices(), B = sc.topo.num_bs();
  std::vector<std::uint8_t> hosts(B, 1);
  if (total_capacity(sc.topo, hosts) < static_cast<int>(K))
    throw InvalidParameter("total server capacity is below the number of devices");
  std::vector<int> counts(B, 0), assign(K);
  for (std::size_t k = 0; k < K; ++k) {
    assign[k] = nearest_with_room(sc.topo, k, hosts, counts);
    ++counts[static_cast<std::size_t>(assign[k])];
  }
  DeploymentSolution sol = solution_from_hosts(assign, sc);
  std::fill(sol.host_flags.begin(), sol.host_flags.end(), std::uint8_t{1});
  return sol;
}

DeploymentSolution random_baseline(const Scenario& sc, Rng& rng) {
  check_shape(sc);
  const std::size_t K = sc.topo.num_devices(), B = sc.topo.num_bs();
  std::vector<std::uint8_t> hosts(B, 0);
  std::bernoulli_distribution coin(0.5);
  bool found = false;
  for (int attempt = 0; attempt < 10000 && !found; ++attempt) {
    for (auto& h : hosts) h = coin(rng) ? 1 : 0;
    found = total_capacity(sc.topo, hosts) >= static_cast<int>(K);
  }
  if (!found) {
    std::fill(hosts.begin(), hosts.end(), std::uint8_t{1});
    if (total_capacity(sc.topo, hosts) < static_cast<int>(K))
      throw InvalidParameter("total server capacity is below the number of devices");
  }
  std::vector<int> counts(B, 0), assign(K);
  for (std::size_t k = 0; k < K; ++k) {
    std::vector<int> open;
    for (std::size_t b = 0; b < B; ++b)
      if (hosts[b] && counts[b] < sc.topo.server_dt_capacity[b]) open.push_back(static_cast<int>(b));
    // Devices are placed one at a time and capacity covers K, so `open` is
    // never empty here.
    std::uniform_int_distribution<std::size_t> pick(0, open.size() - 1);
    assign[k] = open[pick(rng)];
    ++counts[static_cast<std::size_t>(assign[k])];
  }
  DeploymentSolution sol = solution_from_hosts(assign, sc);
  sol.host_flags = hosts;
  return sol;
}

RawAction to_raw_action(const DeploymentSolution& sol) {
  RawAction raw;
  raw.host_flags = sol.host_flags;
  raw.target.resize(sol.num_devices);
  for (std::size_t k = 0; k < sol.num_devices; ++k) raw.target[k] = sol.host_of(k);
  return raw;
}

DeploymentSolution repair_action(const RawAction& action, const Scenario& sc) {
  check_shape(sc);
  const Topology& topo = sc.topo;
  const std::size_t K = topo.num_devices(), B = topo.num_bs();
  if (action.host_flags.size() != B || action.target.size() != K)
    throw InvalidParameter("raw action dimensions do not match the topology");

  std::vector<std::uint8_t> hosts(B);
  for (std::size_t b = 0; b < B; ++b) hosts[b] = action.host_flags[b] ? 1 : 0;
  std::vector<std::size_t> by_capacity(B);
  std::iota(by_capacity.begin(), by_capacity.end(), std::size_t{0});
  std::stable_sort(by_capacity.begin(), by_capacity.end(), [&](std::size_t a, std::size_t b) {
    return topo.server_dt_capacity[a] > topo.server_dt_capacity[b];
  });
  if (std::none_of(hosts.begin(), hosts.end(), [](std::uint8_t h) { return h != 0; }))
    hosts[by_capacity.front()] = 1;
  for (std::size_t b : by_capacity) {
    if (total_capacity(topo, hosts) >= static_cast<int>(K)) break;
    hosts[b] = 1;
  }
  if (total_capacity(topo, hosts) < static_cast<int>(K))
    throw InvalidParameter("total server capacity is below the number of devices");

  std::vector<int> assign(K, -1), counts(B, 0);
  for (std::size_t k = 0; k < K; ++k) {
    const int m = action.target[k];
    if (m >= 0 && static_cast<std::size_t>(m) < B && hosts[static_cast<std::size_t>(m)]) {
      assign[k] = m;
      ++counts[static_cast<std::size_t>(m)];
    }
  }
  // Overflow: evict the slowest twins until each server is within capacity.
  for (std::size_t m = 0; m < B; ++m) {
    while (counts[m] > topo.server_dt_capacity[m]) {
      std::size_t worst = K;
      double worst_latency = -1.0;
      for (std::size_t k = 0; k < K; ++k) {
        if (assign[k] != static_cast<int>(m)) continue;
        const double t = pair_interaction_latency(k, best_access_bs(k, m, sc), m, counts[m], sc);
        if (t > worst_latency) {
          worst_latency = t;
          worst = k;
        }
      }
      assign[worst] = -1;
      --counts[m];
    }
  }
  for (std::size_t k = 0; k < K; ++k) {
    if (assign[k] >= 0) continue;
    assign[k] = nearest_with_room(topo, k, hosts, counts);
    ++counts[static_cast<std::size_t>(assign[k])];
  }
  DeploymentSolution sol = solution_from_hosts(assign, sc);
  sol.host_flags = hosts;
  return sol;
}

void RewardParams::validate() const {
  if (!(latency_weight >= 0.0 && latency_weight <= 1.0))
    throw InvalidParameter("reward.latency_weight must lie in [0, 1]");
  if (!(per_dt_cost > 0.0) || !std::isfinite(per_dt_cost))
    throw InvalidParameter("reward.per_dt_cost must be > 0");
  if (!std::isfinite(latency_scale) || !std::isfinite(cost_scale))
    throw InvalidParameter("reward.latency_scale and reward.cost_scale must be finite");
}

DeployEnv::DeployEnv(Scenario scenario, TopologyConfig topo_config, RewardParams reward,
                     Dynamics dynamics)
    : scenario_(std::move(scenario)),
      topo_config_(std::move(topo_config)),
      reward_(reward),
      dynamics_(dynamics) {
  check_shape(scenario_);
  reward_.validate();
  scenario_.radio.validate();
  scenario_.lat.validate(scenario_.topo.num_devices());
  latency_scale_ = reward_.latency_scale > 0.0
                       ? reward_.latency_scale
                       : deployment_objective(nearest_baseline(scenario_), scenario_);
  cost_scale_ = reward_.cost_scale > 0.0
                    ? reward_.cost_scale
                    : static_cast<double>(scenario_.topo.num_devices()) * reward_.per_dt_cost;
}

DeployEnvState DeployEnv::make_state(Topology topo, DeploymentSolution sol) const {
  DeployEnvState s;
  s.active_dt_counts = sol.hosted_counts();
  const std::size_t K = topo.num_devices(), B = topo.num_bs();
  s.rates.resize(K * B);
  for (std::size_t k = 0; k < K; ++k)
    for (std::size_t b = 0; b < B; ++b) s.rates[k * B + b] = achievable_rate(topo.gain(k, b), scenario_.radio);
  s.topo = std::move(topo);
  s.solution = std::move(sol);
  return s;
}

DeployEnvState DeployEnv::initial_state(const DeploymentSolution& sol) const {
  return make_state(scenario_.topo, sol);
}

Scenario DeployEnv::scenario_for(const Topology& topo) const {
  return Scenario{topo, scenario_.lat, scenario_.radio};
}

double DeployEnv::reward(const DeploymentSolution& sol, const Topology& topo) const {
  const double latency = average_interaction_latency(sol, topo, scenario_.lat, scenario_.radio);
  double hosted = 0.0;
  for (int j : sol.hosted_counts()) hosted += j;
  const double beta = reward_.latency_weight;
  return beta * (-latency / latency_scale_) - (1.0 - beta) * (hosted * reward_.per_dt_cost / cost_scale_);
}

EnvStep DeployEnv::step(const DeployEnvState& state, const RawAction& action, Rng& rng) const {
  return step_solution(state, repair_action(action, scenario_for(state.topo)), rng);
}

EnvStep DeployEnv::step_solution(const DeployEnvState& state, DeploymentSolution sol,
                                 Rng& rng) const {
  EnvStep out;
  out.objective = average_interaction_latency(sol, state.topo, scenario_.lat, scenario_.radio);
  out.reward = reward(sol, state.topo);
  out.deployment_cost = -out.reward;

  Topology next = state.topo;
  switch (dynamics_) {
    case Dynamics::kStatic: break;
    case Dynamics::kFading: resample_fading(next, topo_config_, rng); break;
    case Dynamics::kMobility: resample_devices(next, topo_config_, rng); break;
  }
  DeploymentSolution carried = sol;
  if (dynamics_ != Dynamics::kStatic) assign_access(carried, scenario_for(next));
  out.solution = std::move(sol);
  out.next = make_state(std::move(next), std::move(carried));
  return out;
}

EnvStep env_step(const DeployEnv& env, const DeployEnvState& state, const RawAction& action,
                 Rng& rng) {
  return env.step(state, action, rng);
}

}  // namespace dtsync
