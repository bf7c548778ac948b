// Acceptance suite. Run without arguments for every criterion or with one
// criterion name; prints one PASS/FAIL line per criterion and exits non-zero
// if any failed.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <map>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "dtsync/actor_critic.hpp"
#include "dtsync/experiments.hpp"
#include "dtsync/sched_mdp.hpp"
#include "dtsync/simulator.hpp"
#include "dtsync/state_process.hpp"

using namespace dtsync;

namespace {

// Pinned tolerances.
constexpr double kGainTol = 1e-9;
constexpr double kStdErrors = 3.0;
constexpr double kSacZwRelTol = 0.01;
constexpr double kOracleGap = 0.10;
constexpr double kEntriesPerState = 3.0;

// Runtime budgets in seconds.
constexpr double kTriangleBudget = 60;
constexpr double kThresholdBudget = 30;
constexpr double kAgreementBudget = 120;
constexpr double kOrderingBudget = 300;
constexpr double kTrainingBudget = 600;

struct Outcome {
  bool pass = true;
  std::ostringstream detail;

  void require(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      detail << "  violated: " << what << '\n';
    }
  }
};

using Clock = std::chrono::steady_clock;
double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string num(double x) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6g", x);
  return buf;
}

std::vector<MdpSpec> grid(int cap) {
  std::vector<MdpSpec> out;
  for (double p : {0.5, 0.8, 1.0})
    for (double q : {0.1, 0.3})
      for (double wc : {1.0, 12.0}) out.push_back(MdpSpec{cap, cap, p, q, wc, 1.0});
  return out;
}

std::string label(const MdpSpec& s) {
  return "cap=" + std::to_string(s.aoci_cap) + " p=" + num(s.p_tx) + " q=" + num(s.content_q) +
         " wC=" + num(s.weighted_cost());
}

void oracle_triangle(Outcome& o) {
  const auto t0 = Clock::now();
  for (const MdpSpec& spec : grid(4)) {
    const auto rpi = relative_policy_iteration(spec);
    const auto rvi = relative_value_iteration(spec);
    const auto en = enumerate_policies_oracle(spec);
    o.require(en.policies_evaluated == 65536, label(spec) + " enumerated " +
                                                  std::to_string(en.policies_evaluated) + " policies");
    o.require(std::abs(rpi.gain - en.gain) <= kGainTol,
              label(spec) + " RPI gain " + num(rpi.gain) + " vs enumeration " + num(en.gain));
    o.require(std::abs(rvi.gain - en.gain) <= kGainTol,
              label(spec) + " RVI gain " + num(rvi.gain) + " vs enumeration " + num(en.gain));
    for (const AociState s : recurrent_states(en.policy, spec)) {
      const std::string where = label(spec) + " state (" + std::to_string(s.aoci) + "," +
                                std::to_string(s.aoi) + ")";
      o.require(rpi.policy.at(s) == en.policy.at(s), where + " RPI action differs");
      o.require(rvi.policy.at(s) == en.policy.at(s), where + " RVI action differs");
    }
  }
  const double t = seconds_since(t0);
  o.detail << "  12 specs, runtime " << num(t) << " s\n";
  o.require(t <= kTriangleBudget, "runtime above " + num(kTriangleBudget) + " s");
}

void threshold_structure(Outcome& o) {
  const auto t0 = Clock::now();
  for (int cap : {4, 30})
    for (const MdpSpec& spec : grid(cap)) {
      const auto solved = relative_policy_iteration(spec);
      o.require(is_monotone_in_aoci(solved.policy), label(spec) + " policy not monotone in AoCI");
    }
  const MdpSpec pinned{100, 100, 0.8, 0.5, 12.0, 1.0};
  const auto th = threshold_for(2, pinned);
  o.detail << "  threshold_for(2) = " << (th ? std::to_string(*th) : "none") << '\n';
  o.require(th.has_value() && *th == 34, "threshold_for(2) at p=0.8, p_r=0.5, wC=12 is not 34");
  const double t = seconds_since(t0);
  o.detail << "  runtime " << num(t) << " s\n";
  o.require(t <= kThresholdBudget, "runtime above " + num(kThresholdBudget) + " s");
}

SimConfig figure_sim(double p_tx, double q) {
  SimConfig c;
  c.delivery = DeliveryModel::fixed(p_tx);
  c.content_q = q;
  c.update_cost = 12.0;
  c.weight = 1.0;
  c.horizon = 1000;
  c.runs = 1000;
  c.seed = 20240601;
  return c;
}

void simulation_agreement(Outcome& o) {
  const auto t0 = Clock::now();
  SimConfig c = figure_sim(0.8, 0.3);
  const MdpSpec spec = c.mdp();
  const auto solved = relative_policy_iteration(spec);
  const std::vector<std::pair<std::string, SchedulingPolicy>> policies{
      {"optimal", threshold_policy(solved.policy)}, {"zw", zw_policy()}};
  for (const auto& [name, policy] : policies) {
    const double theta = average_cost_of(*policy.as_table(spec.aoci_cap, spec.aoi_cap), spec);
    const Metrics m = run_monte_carlo(policy, c);
    const double z = (m.total_avg_cost.mean - theta) / m.total_avg_cost.std_error;
    o.detail << "  " << name << ": analytic " << num(theta) << " simulated " << num(m.total_avg_cost.mean)
             << " se " << num(m.total_avg_cost.std_error) << " z " << num(z) << '\n';
    o.require(std::abs(z) <= kStdErrors, name + " simulated cost outside 3 standard errors");
  }
  const double t = seconds_since(t0);
  o.detail << "  runtime " << num(t) << " s\n";
  o.require(t <= kAgreementBudget, "runtime above " + num(kAgreementBudget) + " s");
}

void policy_orderings(Outcome& o) {
  const auto t0 = Clock::now();
  ExperimentConfig config;
  config.sweep.p_tx = {1.0};
  config.sweep.q = {0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0};
  config.sweep.update_cost = {12.0};
  config.sweep.weight = {1.0};
  config.sweep.policies = {"optimal", "zw", "sac"};
  config.simulation.runs = 1000;
  config.simulation.horizon = 1000;
  const auto rows = simulate_sweep(config);

  std::map<double, std::map<std::string, Metrics>> at;
  for (const auto& r : rows) at[r.q][r.policy] = r.metrics;
  o.detail << "  q      total(opt) total(zw) total(sac) aoci(opt) aoci(zw) aoci(sac) upd(sac)\n";
  double prev_sac_update = -1.0;
  for (const auto& [q, m] : at) {
    const Metrics& opt = m.at("optimal");
    const Metrics& zw = m.at("zw");
    const Metrics& sac = m.at("sac");
    char line[200];
    std::snprintf(line, sizeof line, "  %.1f %10.4f %9.4f %10.4f %9.4f %8.4f %9.4f %8.4f\n", q,
                  opt.total_avg_cost.mean, zw.total_avg_cost.mean, sac.total_avg_cost.mean,
                  opt.avg_aoci.mean, zw.avg_aoci.mean, sac.avg_aoci.mean, sac.avg_update_cost.mean);
    o.detail << line;
    const std::string at_q = " at q=" + num(q);
    if (q < 1.0) {
      o.require(opt.total_avg_cost.mean <= zw.total_avg_cost.mean, "total(optimal) > total(ZW)" + at_q);
      o.require(opt.total_avg_cost.mean <= sac.total_avg_cost.mean, "total(optimal) > total(SAC)" + at_q);
      o.require(opt.avg_aoci.mean >= zw.avg_aoci.mean, "aoci(optimal) < aoci(ZW)" + at_q);
      o.require(opt.avg_aoci.mean >= sac.avg_aoci.mean, "aoci(optimal) < aoci(SAC)" + at_q);
    } else {
      const double rel = std::abs(sac.avg_update_cost.mean - zw.avg_update_cost.mean) /
                         zw.avg_update_cost.mean;
      o.require(rel <= kSacZwRelTol, "update cost(SAC) differs from ZW by more than 1% at q=1");
    }
    o.require(sac.avg_update_cost.mean >= prev_sac_update, "update cost(SAC) decreases" + at_q);
    prev_sac_update = sac.avg_update_cost.mean;
  }
  const double t = seconds_since(t0);
  o.detail << "  runtime " << num(t) << " s\n";
  o.require(t <= kOrderingBudget, "runtime above " + num(kOrderingBudget) + " s");
}

// Successor law written out from the primitive events of one slot.
AociState after(AociState s, bool delivered, bool changed, int aoci_cap, int aoi_cap) {
  AociState n{s.aoci + 1, s.aoi + 1};
  if (delivered) n.aoi = 1;
  if (delivered && changed) n.aoci = 1;
  n.aoci = std::min(n.aoci, aoci_cap);
  n.aoi = std::min(n.aoi, aoi_cap);
  return n;
}

void aoci_dynamics(Outcome& o) {
  std::size_t checked = 0;
  for (auto [aoci_cap, aoi_cap] : {std::pair{1, 1}, {4, 4}, {7, 3}, {12, 12}})
    for (double p : {0.0, 0.3, 0.8, 1.0})
      for (double q : {0.0, 0.1, 0.5, 0.9, 1.0}) {
        const MdpSpec spec{aoci_cap, aoi_cap, p, q, 12.0, 1.0};
        for (int a = 1; a <= aoci_cap; ++a)
          for (int d = 1; d <= aoi_cap; ++d) {
            const AociState s{a, d};
            const double pr = 0.5 * (1.0 + std::pow(1.0 - 2.0 * q, d));
            for (Action act : {Action::kIdle, Action::kUpdate}) {
              std::map<AociState, double> expect;
              if (act == Action::kIdle) {
                expect[after(s, false, false, aoci_cap, aoi_cap)] += 1.0;
              } else {
                expect[after(s, true, true, aoci_cap, aoi_cap)] += p * (1.0 - pr);
                expect[after(s, true, false, aoci_cap, aoi_cap)] += p * pr;
                expect[after(s, false, false, aoci_cap, aoi_cap)] += 1.0 - p;
              }
              std::map<AociState, double> got;
              for (const auto& t : transitions(s, act, spec)) got[t.next] += t.prob;
              std::erase_if(expect, [](const auto& kv) { return kv.second == 0.0; });
              std::erase_if(got, [](const auto& kv) { return kv.second == 0.0; });
              o.require(got == expect, "transition law differs at " + label(spec) + " p_tx=" + num(p) +
                                           " state (" + std::to_string(a) + "," + std::to_string(d) + ")");
              ++checked;
            }
            for (auto [delivered, changed] : {std::pair{false, false}, {true, false}, {true, true}}) {
              o.require(next_state(s, delivered, changed, aoci_cap, aoi_cap) ==
                            after(s, delivered, changed, aoci_cap, aoi_cap),
                        "simulator next_state differs at (" + std::to_string(a) + "," +
                            std::to_string(d) + ")");
              ++checked;
            }
          }
      }
  // Branch witnesses away from and at the caps.
  const MdpSpec spec{10, 10, 0.5, 0.3, 12.0, 1.0};
  o.require(next_state({5, 3}, true, true, 10, 10) == AociState{1, 1}, "changed delivery does not reset");
  o.require(next_state({5, 3}, true, false, 10, 10) == AociState{6, 1}, "unchanged delivery wrong");
  o.require(next_state({5, 3}, false, false, 10, 10) == AociState{6, 4}, "failed slot wrong");
  o.require(next_state({10, 10}, false, false, 10, 10) == AociState{10, 10}, "caps not saturating");
  o.require(next_state({10, 4}, true, false, 10, 10) == AociState{10, 1}, "AoCI cap not saturating");
  o.require(transitions({10, 10}, Action::kIdle, spec)[0].next == AociState{10, 10}, "idle at cap");
  o.detail << "  " << checked << " exact comparisons\n";
}

void deployment_optimizer(Outcome& o) {
  const ExperimentConfig defaults;
  o.require(defaults.learner.iterations == 5000 && defaults.learner.discount == 0.6,
            "learner defaults are not 5000 iterations at discount 0.6");
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const auto t0 = Clock::now();
    TopologyConfig tc = defaults.topology;
    tc.num_devices = 6;
    tc.num_bs = 4;
    const Scenario sc = sample_scenario(seed, tc, defaults.latency, defaults.radio.params());
    const DeployEnv env(sc, tc, defaults.reward, Dynamics::kStatic);
    LearnerConfig lc = defaults.learner;
    lc.seed = seed;
    const TrainResult trained = actor_critic_train(env, lc);
    const double train_s = seconds_since(t0);

    const double oracle = deployment_objective(exhaustive_oracle(sc), sc);
    Rng rng = make_rng(seed, 0x7a4d);
    double random_mean = 0.0;
    for (int i = 0; i < 20; ++i) random_mean += deployment_objective(random_baseline(sc, rng), sc);
    random_mean /= 20.0;
    const auto& curve = trained.cost_curve;
    const std::size_t decile = curve.size() / 10;
    const double first = std::accumulate(curve.begin(), curve.begin() + decile, 0.0) / decile;
    const double last = std::accumulate(curve.end() - decile, curve.end(), 0.0) / decile;
    const double gap = trained.greedy_objective / oracle - 1.0;

    o.detail << "  seed " << seed << ": learned " << num(trained.greedy_objective) << " oracle "
             << num(oracle) << " gap " << num(100 * gap) << "% random " << num(random_mean)
             << " curve " << num(first) << " -> " << num(last) << " train " << num(train_s) << " s\n";
    const std::string at = " on seed " + std::to_string(seed);
    o.require(is_feasible(trained.greedy, sc.topo), "infeasible learned solution" + at);
    o.require(trained.greedy_objective <= (1.0 + kOracleGap) * oracle, "more than 10% above the oracle" + at);
    o.require(trained.greedy_objective < random_mean, "not below the random mean" + at);
    o.require(last <= first, "cost curve last decile above first decile" + at);
    o.require(train_s <= kTrainingBudget, "training above " + num(kTrainingBudget) + " s" + at);
  }
}

void deployment_baselines(Outcome& o) {
  const auto t0 = Clock::now();
  ExperimentConfig config;
  config.sweep.devices = {20, 40, 60};
  config.sweep.base_stations = {6};
  config.sweep.instances = 20;
  const auto rows = compare_deployments(config);
  std::map<std::size_t, std::map<std::string, double>> mean;
  for (const auto& r : rows) mean[r.devices][r.method] = r.mean;
  for (const auto& [k, m] : mean) {
    o.detail << "  K=" << k << ": proposed " << num(m.at("proposed")) << " nearest " << num(m.at("nearest"))
             << " random " << num(m.at("random")) << '\n';
    o.require(m.at("proposed") <= m.at("nearest"), "proposed above nearest at K=" + std::to_string(k));
    o.require(m.at("nearest") <= m.at("random"), "nearest above random at K=" + std::to_string(k));
  }
  o.detail << "  runtime " << num(seconds_since(t0)) << " s\n";
}

void sweep_complexity(Outcome& o) {
  EvalOptions opts;
  opts.method = EvalMethod::kSweep;
  for (auto [a, d] : {std::pair{10, 10}, {40, 25}, {100, 100}}) {
    const MdpSpec spec{a, d, 0.8, 0.3, 12.0, 1.0};
    const std::size_t n = spec.num_states();
    const auto solved = relative_policy_iteration(spec);
    for (const auto& [name, policy] : {std::pair{std::string("optimal"), solved.policy},
                                       {std::string("zw"), PolicyTable::uniform(spec, Action::kUpdate)}}) {
      const Evaluation ev = evaluate_policy(policy, spec, {1, 1}, opts);
      o.detail << "  |S|=" << n << " " << name << ": " << ev.entries_per_sweep << " entries per sweep ("
               << num(double(ev.entries_per_sweep) / n) << " per state), " << ev.sweeps << " sweeps\n";
      o.require(ev.entries_per_sweep > 0, "sweep count not instrumented at |S|=" + std::to_string(n));
      o.require(double(ev.entries_per_sweep) <= kEntriesPerState * n,
                "more than 3|S| entries per sweep at |S|=" + std::to_string(n));
      o.require(std::abs(ev.gain - average_cost_of(policy, spec)) <= 1e-6 * ev.gain,
                "sweep evaluation disagrees with the direct solve at |S|=" + std::to_string(n));
    }
  }
}

const std::vector<std::pair<std::string, std::function<void(Outcome&)>>>& criteria() {
  static const std::vector<std::pair<std::string, std::function<void(Outcome&)>>> all{
      {"oracle_triangle", oracle_triangle},
      {"threshold_structure", threshold_structure},
      {"simulation_agreement", simulation_agreement},
      {"policy_orderings", policy_orderings},
      {"aoci_dynamics", aoci_dynamics},
      {"deployment_optimizer", deployment_optimizer},
      {"deployment_baselines", deployment_baselines},
      {"sweep_complexity", sweep_complexity},
  };
  return all;
}

}  // namespace

int main(int argc, char** argv) {
  const std::string only = argc > 1 ? argv[1] : "";
  int failures = 0, ran = 0;
  for (const auto& [name, run] : criteria()) {
    if (!only.empty() && only != name) continue;
    ++ran;
    Outcome o;
    const auto t0 = Clock::now();
    try {
      run(o);
    } catch (const std::exception& e) {
      o.require(false, std::string("exception: ") + e.what());
    }
    std::printf("%s %s (%.1f s)\n%s", o.pass ? "PASS" : "FAIL", name.c_str(), seconds_since(t0),
                o.detail.str().c_str());
    std::fflush(stdout);
    failures += o.pass ? 0 : 1;
  }
  if (ran == 0) {
    std::fprintf(stderr, "unknown criterion '%s'\n", only.c_str());
    return 2;
  }
  return failures == 0 ? 0 : 1;
}
