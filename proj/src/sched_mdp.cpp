#include "dtsync/sched_mdp.hpp"

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <Eigen/SparseLU>
#include <algorithm>
#include <cmath>
#include <iomanip>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>

#include "dtsync/csv_format.hpp"
#include "dtsync/errors.hpp"
#include "dtsync/markov_chain.hpp"
#include "dtsync/state_process.hpp"

namespace dtsync {
namespace {

void check_prob(double p, const char* name) {
  if (!(p >= 0.0 && p <= 1.0)) {
    std::ostringstream msg;
    msg << name << " must lie in [0, 1] (got " << p << ")";
    throw InvalidParameter(msg.str());
  }
}

// Numerical slack when testing the threshold inequality, so that exact
// rational boundaries (e.g. 0.4 * 34 == 13.6) are not lost to rounding.
double threshold_slack(const MdpSpec& spec, int aoi) {
  return 1e-9 * std::max(1.0, spec.p_tx * aoi + spec.weighted_cost());
}

bool prefers_update(double q_idle, double q_update) {
  const double tie = 1e-12 * std::max({1.0, std::abs(q_idle), std::abs(q_update)});
  return q_update < q_idle - tie;
}

double expected_bias(const SuccessorList& succ, std::span<const double> bias,
                     const MdpSpec& spec) {
  double acc = 0.0;
  for (const auto& t : succ) acc += t.prob * bias[spec.index(t.next)];
  return acc;
}

double poisson_residual(const PolicyTable& policy, const MdpSpec& spec, double gain,
                        std::span<const double> bias) {
  double worst = 0.0;
  for (std::size_t i = 0; i < spec.num_states(); ++i) {
    const AociState s = spec.state(i);
    const Action a = policy.at_index(i);
    const double r = gain + bias[i] - stage_cost(s, a, spec) -
                     expected_bias(transitions(s, a, spec), bias, spec);
    worst = std::max(worst, std::abs(r));
  }
  return worst;
}

double residual_scale(std::span<const double> bias, double gain) {
  double scale = std::max(1.0, std::abs(gain));
  for (double v : bias) scale = std::max(scale, std::abs(v));
  return scale;
}

MarkovChain policy_chain(const PolicyTable& policy, const MdpSpec& spec) {
  MarkovChain chain(spec.num_states());
  for (std::size_t i = 0; i < spec.num_states(); ++i) {
    const AociState s = spec.state(i);
    const Action a = policy.at_index(i);
    for (const auto& t : transitions(s, a, spec)) chain.rows[i].emplace_back(spec.index(t.next), t.prob);
    chain.cost[i] = stage_cost(s, a, spec);
  }
  return chain;
}

Eigen::VectorXd sparse_solve(std::size_t n, const std::vector<Eigen::Triplet<double>>& trip,
                             const Eigen::VectorXd& rhs) {
  Eigen::SparseMatrix<double> A(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
  A.setFromTriplets(trip.begin(), trip.end());
  Eigen::SparseLU<Eigen::SparseMatrix<double>> lu;
  lu.compute(A);
  if (lu.info() != Eigen::Success) throw SolverFailure("sparse LU failed in multichain evaluation");
  Eigen::VectorXd x = lu.solve(rhs);
  if (lu.info() != Eigen::Success) throw SolverFailure("sparse solve failed in multichain evaluation");
  return x;
}

std::string multichain_diagnostics(const PolicyTable& policy, const MdpSpec& spec) {
  const auto classes = closed_classes(policy_chain(policy, spec));
  std::ostringstream msg;
  msg << "policy induces " << classes.size() << " closed class(es)";
  for (const auto& c : classes) {
    const AociState s = spec.state(c.front());
    msg << "; class of size " << c.size() << " containing (" << s.aoci << "," << s.aoi << ")";
  }
  return msg.str();
}

// Builds the (|S| x |S|) system whose unknowns are V(s) for s != ref and the
// gain in the column of ref.
std::vector<Eigen::Triplet<double>> poisson_triplets(const PolicyTable& policy,
                                                     const MdpSpec& spec, std::size_t ref,
                                                     Eigen::VectorXd& rhs) {
  const std::size_t n = spec.num_states();
  std::vector<Eigen::Triplet<double>> trip;
  trip.reserve(5 * n);
  rhs.resize(static_cast<Eigen::Index>(n));
  for (std::size_t i = 0; i < n; ++i) {
    const AociState s = spec.state(i);
    const Action a = policy.at_index(i);
    const int row = static_cast<int>(i);
    trip.emplace_back(row, static_cast<int>(ref), 1.0);
    if (i != ref) trip.emplace_back(row, row, 1.0);
    for (const auto& t : transitions(s, a, spec)) {
      const std::size_t j = spec.index(t.next);
      if (j != ref) trip.emplace_back(row, static_cast<int>(j), -t.prob);
    }
    rhs(row) = stage_cost(s, a, spec);
  }
  return trip;
}

Evaluation unpack(const Eigen::VectorXd& x, std::size_t ref, EvalMethod method) {
  Evaluation ev;
  ev.method = method;
  ev.gain = x(static_cast<Eigen::Index>(ref));
  ev.bias.assign(x.data(), x.data() + x.size());
  ev.bias[ref] = 0.0;
  return ev;
}

Evaluation evaluate_dense(const PolicyTable& policy, const MdpSpec& spec, std::size_t ref) {
  const auto n = static_cast<Eigen::Index>(spec.num_states());
  Eigen::VectorXd rhs;
  const auto trip = poisson_triplets(policy, spec, ref, rhs);
  Eigen::MatrixXd A = Eigen::MatrixXd::Zero(n, n);
  for (const auto& t : trip) A(t.row(), t.col()) += t.value();
  Eigen::PartialPivLU<Eigen::MatrixXd> lu(A);
  return unpack(lu.solve(rhs), ref, EvalMethod::kDense);
}

Evaluation evaluate_sparse(const PolicyTable& policy, const MdpSpec& spec, std::size_t ref) {
  const auto n = static_cast<Eigen::Index>(spec.num_states());
  Eigen::VectorXd rhs;
  const auto trip = poisson_triplets(policy, spec, ref, rhs);
  Eigen::SparseMatrix<double> A(n, n);
  A.setFromTriplets(trip.begin(), trip.end());
  Eigen::SparseLU<Eigen::SparseMatrix<double>> lu;
  lu.compute(A);
  if (lu.info() != Eigen::Success)
    throw SolverFailure("sparse LU failed: " + multichain_diagnostics(policy, spec));
  Eigen::VectorXd x = lu.solve(rhs);
  if (lu.info() != Eigen::Success)
    throw SolverFailure("sparse solve failed: " + multichain_diagnostics(policy, spec));
  return unpack(x, ref, EvalMethod::kSparseDirect);
}

// Relative value sweeps on the aperiodic transform tau*I + (1-tau)*P, which
// has the same gain and bias scaled by 1/(1-tau).
Evaluation evaluate_sweeps(const PolicyTable& policy, const MdpSpec& spec, std::size_t ref,
                           const EvalOptions& opt) {
  const std::size_t n = spec.num_states();
  const double tau = opt.aperiodicity;
  if (!(tau >= 0.0 && tau < 1.0)) throw InvalidParameter("aperiodicity must lie in [0, 1)");

  // Flattened successor table: start offsets plus (target, prob) entries.
  std::vector<std::size_t> start(n + 1, 0);
  std::vector<std::size_t> target;
  std::vector<double> prob;
  std::vector<double> cost(n);
  target.reserve(3 * n);
  prob.reserve(3 * n);
  for (std::size_t i = 0; i < n; ++i) {
    const AociState s = spec.state(i);
    const Action a = policy.at_index(i);
    for (const auto& t : transitions(s, a, spec)) {
      target.push_back(spec.index(t.next));
      prob.push_back(t.prob);
    }
    start[i + 1] = target.size();
    cost[i] = stage_cost(s, a, spec);
  }

  std::vector<double> h(n, 0.0), w(n, 0.0), bias(n, 0.0);
  Evaluation ev;
  ev.method = EvalMethod::kSweep;
  for (std::size_t sweep = 1; sweep <= opt.max_sweeps; ++sweep) {
    std::size_t touched = 0;
    for (std::size_t i = 0; i < n; ++i) {
      double acc = 0.0;
      for (std::size_t e = start[i]; e < start[i + 1]; ++e) acc += prob[e] * h[target[e]];
      touched += start[i + 1] - start[i];
      w[i] = cost[i] + tau * h[i] + (1.0 - tau) * acc;
    }
    ev.entries_per_sweep = std::max(ev.entries_per_sweep, touched);
    const double g = w[ref];
    for (std::size_t i = 0; i < n; ++i) h[i] = w[i] - g;
    ev.sweeps = sweep;
    if (sweep % 16 != 0) continue;
    for (std::size_t i = 0; i < n; ++i) bias[i] = (1.0 - tau) * h[i];
    const double res = poisson_residual(policy, spec, g, bias);
    if (!std::isfinite(res))
      throw SolverFailure("sweep evaluation diverged: " + multichain_diagnostics(policy, spec));
    if (res <= opt.tolerance * residual_scale(bias, g)) {
      ev.gain = g;
      ev.bias = bias;
      ev.bias[ref] = 0.0;
      ev.residual = res;
      return ev;
    }
  }
  throw SolverFailure("sweep evaluation did not reach tolerance: " +
                      multichain_diagnostics(policy, spec));
}

}  // namespace

void MdpSpec::validate() const {
  if (aoci_cap < 1 || aoi_cap < 1) throw InvalidParameter("mdp caps must be >= 1");
  if (aoci_cap < aoi_cap)
    throw InvalidParameter("aoci_cap must be >= aoi_cap (AoCI never falls below AoI)");
  check_prob(p_tx, "p_tx");
  check_prob(content_q, "content_q");
  if (!(update_cost >= 0.0) || !std::isfinite(update_cost))
    throw InvalidParameter("update_cost must be finite and >= 0");
  if (!(weight >= 0.0) || !std::isfinite(weight))
    throw InvalidParameter("weight must be finite and >= 0");
}

double MdpSpec::return_prob(int aoi) const { return return_probability(content_q, aoi); }

PolicyTable::PolicyTable(int aoci_cap, int aoi_cap, Action fill)
    : aoci_cap_(aoci_cap),
      aoi_cap_(aoi_cap),
      actions_(static_cast<std::size_t>(aoci_cap) * static_cast<std::size_t>(aoi_cap),
               static_cast<std::uint8_t>(fill)) {
  if (aoci_cap < 1 || aoi_cap < 1) throw InvalidParameter("policy caps must be >= 1");
}

std::size_t PolicyTable::offset(AociState s) const {
  if (s.aoci < 1 || s.aoci > aoci_cap_ || s.aoi < 1 || s.aoi > aoi_cap_)
    throw InvalidParameter("state outside the policy table");
  return static_cast<std::size_t>(s.aoci - 1) * static_cast<std::size_t>(aoi_cap_) +
         static_cast<std::size_t>(s.aoi - 1);
}

void SuccessorList::add(AociState next, double prob) {
  if (prob <= 0.0) return;
  for (std::size_t i = 0; i < size_; ++i) {
    if (items_[i].next == next) {
      items_[i].prob += prob;
      return;
    }
  }
  items_[size_++] = {next, prob};
}

SuccessorList transitions(AociState s, Action a, const MdpSpec& spec) {
  if (!spec.contains(s)) throw InvalidParameter("state outside the state space");
  const AociState idle{std::min(s.aoci + 1, spec.aoci_cap), std::min(s.aoi + 1, spec.aoi_cap)};
  SuccessorList out;
  if (a == Action::kIdle) {
    out.add(idle, 1.0);
    return out;
  }
  const double pr = spec.return_prob(s.aoi);
  out.add({1, 1}, spec.p_tx * (1.0 - pr));
  out.add({idle.aoci, 1}, spec.p_tx * pr);
  out.add(idle, 1.0 - spec.p_tx);
  return out;
}

double stage_cost(AociState s, Action a, const MdpSpec& spec) {
  return s.aoci + (a == Action::kUpdate ? spec.weighted_cost() : 0.0);
}

Evaluation evaluate_policy(const PolicyTable& policy, const MdpSpec& spec,
                           AociState reference, const EvalOptions& options) {
  spec.validate();
  if (!policy.matches(spec)) throw InvalidParameter("policy shape does not match the spec");
  if (!spec.contains(reference)) throw InvalidParameter("reference state outside the state space");
  const std::size_t n = spec.num_states();
  const std::size_t ref = spec.index(reference);
  if (closed_classes(policy_chain(policy, spec)).size() != 1)
    throw SolverFailure("policy is not unichain: " + multichain_diagnostics(policy, spec));

  EvalMethod method = options.method;
  if (method == EvalMethod::kAuto) {
    if (n <= options.dense_limit)
      method = EvalMethod::kDense;
    else if (n <= options.direct_limit)
      method = EvalMethod::kSparseDirect;
    else
      method = EvalMethod::kSweep;
  }
  if (method == EvalMethod::kSweep) return evaluate_sweeps(policy, spec, ref, options);

  Evaluation ev = method == EvalMethod::kDense ? evaluate_dense(policy, spec, ref)
                                               : evaluate_sparse(policy, spec, ref);
  ev.residual = poisson_residual(policy, spec, ev.gain, ev.bias);
  if (!std::isfinite(ev.residual) ||
      ev.residual > options.tolerance * residual_scale(ev.bias, ev.gain)) {
    std::ostringstream msg;
    msg << "policy evaluation residual " << ev.residual << " above tolerance; "
        << multichain_diagnostics(policy, spec);
    throw SolverFailure(msg.str());
  }
  return ev;
}

Action greedy_action(AociState s, std::span<const double> bias, const MdpSpec& spec) {
  const double q_idle = stage_cost(s, Action::kIdle, spec) +
                        expected_bias(transitions(s, Action::kIdle, spec), bias, spec);
  const double q_update = stage_cost(s, Action::kUpdate, spec) +
                          expected_bias(transitions(s, Action::kUpdate, spec), bias, spec);
  return prefers_update(q_idle, q_update) ? Action::kUpdate : Action::kIdle;
}

double threshold_margin(AociState s, const MdpSpec& spec) {
  return spec.p_tx * (1.0 - spec.return_prob(s.aoi)) * s.aoci - spec.p_tx * s.aoi -
         spec.weighted_cost();
}

PolicyTable improve_policy(std::span<const double> bias, const MdpSpec& spec,
                           ShortcutMode mode, ImproveStats* stats) {
  if (bias.size() != spec.num_states()) throw InvalidParameter("bias size mismatch");
  PolicyTable next = PolicyTable::uniform(spec, Action::kIdle);
  const double v_origin = bias[spec.index({1, 1})];
  const double pr1 = spec.return_prob(1);
  for (std::size_t i = 0; i < spec.num_states(); ++i) {
    const AociState s = spec.state(i);
    const Action generic = greedy_action(s, bias, spec);
    bool fires = false;
    if (mode != ShortcutMode::kOff) {
      const int next_aoci = std::min(s.aoci + 1, spec.aoci_cap);
      const double gap = bias[spec.index({next_aoci, 1})] - v_origin;
      // A non-positive gap makes the ratio meaningless; the shortcut is off.
      const bool ratio_ok = gap > 0.0 && pr1 - spec.return_prob(s.aoi + 1) <= s.aoi / gap;
      fires = ratio_ok && threshold_margin(s, spec) >= -threshold_slack(spec, s.aoi);
    }
    Action chosen = generic;
    if (fires) {
      if (stats) {
        ++stats->shortcut_fired;
        if (generic != Action::kUpdate) {
          ++stats->shortcut_disagreements;
          stats->disagreement_states.push_back(s);
        }
      }
      if (mode == ShortcutMode::kTrust) chosen = Action::kUpdate;
    }
    next.set_index(i, chosen);
  }
  return next;
}

SolveResult relative_policy_iteration(const MdpSpec& spec, const RpiOptions& options) {
  spec.validate();
  SolveResult result;
  PolicyTable policy = PolicyTable::uniform(spec, Action::kIdle);
  const std::size_t ref = spec.index(options.reference);
  for (std::size_t iter = 1; iter <= options.max_iterations; ++iter) {
    double gain = 0.0;
    std::vector<double> bias;
    PolicyTable next;
    if (count_closed_classes(policy, spec) == 1) {
      Evaluation ev = evaluate_policy(policy, spec, options.reference, options.eval);
      gain = ev.gain;
      bias = std::move(ev.bias);
      next = improve_policy(bias, spec, options.shortcut, &result.shortcut);
    } else {
      // Single-gain equations have no solution here; use the gain vector.
      MultichainEvaluation ev = evaluate_multichain(policy, spec, options.reference);
      gain = ev.gain[ref];
      next = improve_multichain(ev, policy, spec);
      bias = std::move(ev.bias);
      ++result.multichain_iterations;
    }
    result.gain_history.push_back(gain);
    if (next == policy) {
      result.gain = gain;
      result.bias = std::move(bias);
      result.policy = std::move(policy);
      result.iterations = iter;
      return result;
    }
    policy = std::move(next);
  }
  throw NonConvergence("relative policy iteration exceeded the iteration cap");
}

std::size_t count_closed_classes(const PolicyTable& policy, const MdpSpec& spec) {
  return closed_classes(policy_chain(policy, spec)).size();
}

MultichainEvaluation evaluate_multichain(const PolicyTable& policy, const MdpSpec& spec,
                                         AociState reference) {
  spec.validate();
  if (!policy.matches(spec)) throw InvalidParameter("policy shape does not match the spec");
  const std::size_t n = spec.num_states();
  const std::size_t ref = spec.index(reference);
  const MarkovChain chain = policy_chain(policy, spec);
  const auto classes = closed_classes(chain);
  constexpr std::size_t kNone = static_cast<std::size_t>(-1);

  MultichainEvaluation out;
  out.closed_classes = classes.size();
  out.gain.assign(n, 0.0);
  out.bias.assign(n, 0.0);
  std::vector<char> recurrent(n, 0);

  for (const auto& states : classes) {
    const std::vector<double> pi = stationary_distribution(chain, states);
    double g = 0.0;
    for (std::size_t i = 0; i < states.size(); ++i) g += pi[i] * chain.cost[states[i]];
    const bool has_ref = std::binary_search(states.begin(), states.end(), ref);
    const std::size_t anchor = has_ref ? ref : states.front();
    // Poisson equation inside the class with bias(anchor) = 0.
    std::vector<std::size_t> local(n, kNone);
    std::vector<std::size_t> unknowns;
    for (std::size_t s : states) {
      recurrent[s] = 1;
      out.gain[s] = g;
      if (s == anchor) continue;
      local[s] = unknowns.size();
      unknowns.push_back(s);
    }
    if (unknowns.empty()) continue;
    std::vector<Eigen::Triplet<double>> trip;
    Eigen::VectorXd rhs(static_cast<Eigen::Index>(unknowns.size()));
    for (std::size_t r = 0; r < unknowns.size(); ++r) {
      const std::size_t s = unknowns[r];
      trip.emplace_back(static_cast<int>(r), static_cast<int>(r), 1.0);
      for (const auto& [t, p] : chain.rows[s])
        if (local[t] != kNone) trip.emplace_back(static_cast<int>(r), static_cast<int>(local[t]), -p);
      rhs(static_cast<Eigen::Index>(r)) = chain.cost[s] - g;
    }
    const Eigen::VectorXd h = sparse_solve(unknowns.size(), trip, rhs);
    for (std::size_t r = 0; r < unknowns.size(); ++r) out.bias[unknowns[r]] = h(static_cast<Eigen::Index>(r));
  }

  // Transient states: gain = P gain, bias = C - gain + P bias.
  std::vector<std::size_t> transient;
  std::vector<std::size_t> local(n, kNone);
  for (std::size_t s = 0; s < n; ++s) {
    if (recurrent[s]) continue;
    local[s] = transient.size();
    transient.push_back(s);
  }
  if (!transient.empty()) {
    const std::size_t m = transient.size();
    std::vector<Eigen::Triplet<double>> trip;
    Eigen::VectorXd rhs_gain = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(m));
    for (std::size_t r = 0; r < m; ++r) {
      trip.emplace_back(static_cast<int>(r), static_cast<int>(r), 1.0);
      for (const auto& [t, p] : chain.rows[transient[r]]) {
        if (local[t] != kNone)
          trip.emplace_back(static_cast<int>(r), static_cast<int>(local[t]), -p);
        else
          rhs_gain(static_cast<Eigen::Index>(r)) += p * out.gain[t];
      }
    }
    const Eigen::VectorXd g = sparse_solve(m, trip, rhs_gain);
    Eigen::VectorXd rhs_bias(static_cast<Eigen::Index>(m));
    for (std::size_t r = 0; r < m; ++r) {
      const std::size_t s = transient[r];
      out.gain[s] = g(static_cast<Eigen::Index>(r));
      double acc = chain.cost[s] - out.gain[s];
      for (const auto& [t, p] : chain.rows[s])
        if (local[t] == kNone) acc += p * out.bias[t];
      rhs_bias(static_cast<Eigen::Index>(r)) = acc;
    }
    const Eigen::VectorXd h = sparse_solve(m, trip, rhs_bias);
    for (std::size_t r = 0; r < m; ++r) out.bias[transient[r]] = h(static_cast<Eigen::Index>(r));
  }
  return out;
}

PolicyTable improve_multichain(const MultichainEvaluation& ev, const PolicyTable& current,
                               const MdpSpec& spec) {
  if (!current.matches(spec)) throw InvalidParameter("policy shape does not match the spec");
  PolicyTable next = current;
  bool gain_stage_changed = false;
  for (std::size_t i = 0; i < spec.num_states(); ++i) {
    const AociState s = spec.state(i);
    const double g0 = expected_bias(transitions(s, Action::kIdle, spec), ev.gain, spec);
    const double g1 = expected_bias(transitions(s, Action::kUpdate, spec), ev.gain, spec);
    const Action cur = current.at_index(i);
    const double g_cur = cur == Action::kIdle ? g0 : g1;
    const double g_alt = cur == Action::kIdle ? g1 : g0;
    const double tie = 1e-12 * std::max({1.0, std::abs(g0), std::abs(g1)});
    if (g_alt < g_cur - tie) {
      next.set_index(i, cur == Action::kIdle ? Action::kUpdate : Action::kIdle);
      gain_stage_changed = true;
    }
  }
  if (gain_stage_changed) return next;
  for (std::size_t i = 0; i < spec.num_states(); ++i) {
    const AociState s = spec.state(i);
    const double g0 = expected_bias(transitions(s, Action::kIdle, spec), ev.gain, spec);
    const double g1 = expected_bias(transitions(s, Action::kUpdate, spec), ev.gain, spec);
    const double tie_g = 1e-12 * std::max({1.0, std::abs(g0), std::abs(g1)});
    if (std::abs(g0 - g1) > tie_g) continue;  // only gain-tied actions compete on bias
    const double q0 = stage_cost(s, Action::kIdle, spec) +
                      expected_bias(transitions(s, Action::kIdle, spec), ev.bias, spec);
    const double q1 = stage_cost(s, Action::kUpdate, spec) +
                      expected_bias(transitions(s, Action::kUpdate, spec), ev.bias, spec);
    const Action cur = current.at_index(i);
    const double q_cur = cur == Action::kIdle ? q0 : q1;
    const double q_alt = cur == Action::kIdle ? q1 : q0;
    const double tie = 1e-12 * std::max({1.0, std::abs(q0), std::abs(q1)});
    if (q_alt < q_cur - tie) next.set_index(i, cur == Action::kIdle ? Action::kUpdate : Action::kIdle);
  }
  return next;
}

std::optional<int> threshold_for(int aoi, const MdpSpec& spec) {
  spec.validate();
  if (aoi < 1) throw InvalidParameter("aoi must be >= 1");
  const double slope = spec.p_tx * (1.0 - spec.return_prob(aoi));
  if (slope <= 0.0) return std::nullopt;
  const double bound = (spec.p_tx * aoi + spec.weighted_cost()) / slope;
  if (bound > spec.aoci_cap + 1.0) return std::nullopt;
  const double slack = threshold_slack(spec, aoi);
  int candidate = std::max(1, static_cast<int>(std::floor(bound)) - 1);
  while (candidate <= spec.aoci_cap && threshold_margin({candidate, aoi}, spec) < -slack)
    ++candidate;
  if (candidate > spec.aoci_cap) return std::nullopt;
  return candidate;
}

SolveResult relative_value_iteration(const MdpSpec& spec, const RviOptions& options) {
  spec.validate();
  if (!spec.contains(options.reference)) throw InvalidParameter("reference state outside the state space");
  const double tau = options.aperiodicity;
  if (!(tau >= 0.0 && tau < 1.0)) throw InvalidParameter("aperiodicity must lie in [0, 1)");
  const std::size_t n = spec.num_states();
  const std::size_t ref = spec.index(options.reference);

  std::vector<SuccessorList> succ_idle(n), succ_update(n);
  std::vector<double> cost_idle(n), cost_update(n);
  for (std::size_t i = 0; i < n; ++i) {
    const AociState s = spec.state(i);
    succ_idle[i] = transitions(s, Action::kIdle, spec);
    succ_update[i] = transitions(s, Action::kUpdate, spec);
    cost_idle[i] = stage_cost(s, Action::kIdle, spec);
    cost_update[i] = stage_cost(s, Action::kUpdate, spec);
  }
  auto q_values = [&](const std::vector<double>& h, std::size_t i) {
    double e0 = 0.0, e1 = 0.0;
    for (const auto& t : succ_idle[i]) e0 += t.prob * h[spec.index(t.next)];
    for (const auto& t : succ_update[i]) e1 += t.prob * h[spec.index(t.next)];
    return std::pair{cost_idle[i] + (1.0 - tau) * e0, cost_update[i] + (1.0 - tau) * e1};
  };

  std::vector<double> h(n, 0.0), w(n, 0.0);
  for (std::size_t iter = 1; iter <= options.max_iterations; ++iter) {
    double lo = std::numeric_limits<double>::infinity();
    double hi = -lo;
    for (std::size_t i = 0; i < n; ++i) {
      const auto [q0, q1] = q_values(h, i);
      w[i] = tau * h[i] + std::min(q0, q1);
      lo = std::min(lo, w[i] - h[i]);
      hi = std::max(hi, w[i] - h[i]);
    }
    const double anchor = w[ref];
    for (std::size_t i = 0; i < n; ++i) h[i] = w[i] - anchor;
    if (hi - lo <= options.span_tolerance) {
      SolveResult result;
      result.gain = 0.5 * (lo + hi);
      result.iterations = iter;
      result.policy = PolicyTable::uniform(spec, Action::kIdle);
      result.bias.resize(n);
      for (std::size_t i = 0; i < n; ++i) {
        const auto [q0, q1] = q_values(h, i);
        result.policy.set_index(i, prefers_update(q0, q1) ? Action::kUpdate : Action::kIdle);
        result.bias[i] = (1.0 - tau) * h[i];
      }
      result.bias[ref] = 0.0;
      return result;
    }
  }
  throw NonConvergence("relative value iteration exceeded the iteration cap");
}

double average_cost_of(const PolicyTable& policy, const MdpSpec& spec) {
  spec.validate();
  if (!policy.matches(spec)) throw InvalidParameter("policy shape does not match the spec");
  return analyze_long_run(policy_chain(policy, spec), spec.index({1, 1})).average_cost;
}

std::vector<AociState> recurrent_states(const PolicyTable& policy, const MdpSpec& spec) {
  spec.validate();
  if (!policy.matches(spec)) throw InvalidParameter("policy shape does not match the spec");
  const auto analysis = analyze_long_run(policy_chain(policy, spec), spec.index({1, 1}));
  std::vector<AociState> out;
  for (std::size_t c = 0; c < analysis.recurrent_classes.size(); ++c) {
    if (analysis.absorption[c] <= 0.0) continue;
    for (std::size_t i : analysis.recurrent_classes[c]) out.push_back(spec.state(i));
  }
  std::sort(out.begin(), out.end());
  return out;
}

EnumerationResult enumerate_policies_oracle(const MdpSpec& spec) {
  spec.validate();
  const std::size_t n = spec.num_states();
  if (n > 16) throw InvalidParameter("policy enumeration is limited to 16 states");

  std::vector<std::vector<std::pair<std::size_t, double>>> rows_idle(n), rows_update(n);
  std::vector<double> cost_idle(n), cost_update(n);
  for (std::size_t i = 0; i < n; ++i) {
    const AociState s = spec.state(i);
    for (const auto& t : transitions(s, Action::kIdle, spec))
      rows_idle[i].emplace_back(spec.index(t.next), t.prob);
    for (const auto& t : transitions(s, Action::kUpdate, spec))
      rows_update[i].emplace_back(spec.index(t.next), t.prob);
    cost_idle[i] = stage_cost(s, Action::kIdle, spec);
    cost_update[i] = stage_cost(s, Action::kUpdate, spec);
  }

  EnumerationResult best;
  best.gain = std::numeric_limits<double>::infinity();
  const std::size_t origin = spec.index({1, 1});
  const std::uint64_t count = std::uint64_t{1} << n;
  MarkovChain chain(n);
  for (std::uint64_t mask = 0; mask < count; ++mask) {
    for (std::size_t i = 0; i < n; ++i) {
      const bool update = (mask >> i) & 1U;
      chain.rows[i] = update ? rows_update[i] : rows_idle[i];
      chain.cost[i] = update ? cost_update[i] : cost_idle[i];
    }
    const double gain = analyze_long_run(chain, origin).average_cost;
    ++best.policies_evaluated;
    if (gain < best.gain - 1e-12 * std::max(1.0, std::abs(best.gain)) || mask == 0) {
      best.gain = gain;
      best.policy = PolicyTable::uniform(spec, Action::kIdle);
      for (std::size_t i = 0; i < n; ++i)
        if ((mask >> i) & 1U) best.policy.set_index(i, Action::kUpdate);
    }
  }
  return best;
}

bool is_monotone_in_aoci(const PolicyTable& policy) {
  for (int aoi = 1; aoi <= policy.aoi_cap(); ++aoi) {
    bool updating = false;
    for (int aoci = 1; aoci <= policy.aoci_cap(); ++aoci) {
      const bool u = policy.at({aoci, aoi}) == Action::kUpdate;
      if (updating && !u) return false;
      updating = updating || u;
    }
  }
  return true;
}

void write_policy_csv(std::ostream& out, const PolicyTable& policy) {
  out << "delta,aoci,action\n";
  for (int aoci = 1; aoci <= policy.aoci_cap(); ++aoci)
    for (int aoi = 1; aoi <= policy.aoi_cap(); ++aoi)
      out << aoi << ',' << aoci << ',' << static_cast<int>(policy.at({aoci, aoi})) << '\n';
}

namespace {

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> cells;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) cells.push_back(cell);
  return cells;
}

bool skip_line(const std::string& line) {
  return line.empty() || line[0] == '#' || line == "\r";
}

}  // namespace

PolicyTable read_policy_csv(std::istream& in) {
  std::string line;
  bool header = false;
  std::vector<std::array<int, 3>> rows;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (skip_line(line)) continue;
    if (!header) {
      if (line != "delta,aoci,action") throw InvalidParameter("unexpected policy CSV header: " + line);
      header = true;
      continue;
    }
    const auto cells = split_csv(line);
    if (cells.size() != 3) throw InvalidParameter("malformed policy CSV row: " + line);
    rows.push_back({std::stoi(cells[0]), std::stoi(cells[1]), std::stoi(cells[2])});
  }
  if (rows.empty()) throw InvalidParameter("policy CSV has no rows");
  int aoi_cap = 0, aoci_cap = 0;
  for (const auto& r : rows) {
    aoi_cap = std::max(aoi_cap, r[0]);
    aoci_cap = std::max(aoci_cap, r[1]);
  }
  if (rows.size() != static_cast<std::size_t>(aoi_cap) * static_cast<std::size_t>(aoci_cap))
    throw InvalidParameter("policy CSV does not cover the full state grid");
  PolicyTable table(aoci_cap, aoi_cap);
  std::vector<char> seen(table.size(), 0);
  for (const auto& r : rows) {
    if (r[2] != 0 && r[2] != 1) throw InvalidParameter("policy action must be 0 or 1");
    const AociState s{r[1], r[0]};
    table.set(s, static_cast<Action>(r[2]));
    seen[static_cast<std::size_t>(s.aoci - 1) * aoi_cap + (s.aoi - 1)] = 1;
  }
  if (std::find(seen.begin(), seen.end(), 0) != seen.end())
    throw InvalidParameter("policy CSV repeats a state");
  return table;
}

void write_solve_csv(std::ostream& out, const SolveResult& result, const MdpSpec& spec) {
  out << "# gain=" << fmt(result.gain) << ",iterations=" << result.iterations << '\n';
  out << "delta,aoci,bias\n";
  for (int aoci = 1; aoci <= spec.aoci_cap; ++aoci)
    for (int aoi = 1; aoi <= spec.aoi_cap; ++aoi)
      out << aoi << ',' << aoci << ',' << fmt(result.bias[spec.index({aoci, aoi})]) << '\n';
}

std::pair<double, std::size_t> read_solve_header(std::istream& in) {
  std::string line;
  while (std::getline(in, line)) {
    const auto pos = line.find("# gain=");
    if (pos != 0) continue;
    const auto comma = line.find(",iterations=");
    if (comma == std::string::npos) break;
    const double gain = std::stod(line.substr(7, comma - 7));
    const auto iters = static_cast<std::size_t>(std::stoull(line.substr(comma + 12)));
    return {gain, iters};
  }
  throw InvalidParameter("solve CSV lacks a gain header");
}

}  // namespace dtsync
