#pragma once

#include <array>
#include <compare>
#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace dtsync {

// MDP state: age of changed information (aoci) and age of information (aoi),
// both in slots and saturated at the spec caps.
struct AociState {
  int aoci = 1;
  int aoi = 1;
  auto operator<=>(const AociState&) const = default;
};

enum class Action : std::uint8_t { kIdle = 0, kUpdate = 1 };

struct MdpSpec {
  int aoci_cap = 100;
  int aoi_cap = 100;
  double p_tx = 0.8;        // per-attempt delivery success probability
  double content_q = 0.3;   // per-slot flip probability of the content chain
  double update_cost = 12;  // C
  double weight = 1;        // omega

  void validate() const;
  std::size_t num_states() const {
    return static_cast<std::size_t>(aoci_cap) * static_cast<std::size_t>(aoi_cap);
  }
  std::size_t index(AociState s) const {
    return static_cast<std::size_t>(s.aoci - 1) * static_cast<std::size_t>(aoi_cap) +
           static_cast<std::size_t>(s.aoi - 1);
  }
  AociState state(std::size_t idx) const {
    return {static_cast<int>(idx / static_cast<std::size_t>(aoi_cap)) + 1,
            static_cast<int>(idx % static_cast<std::size_t>(aoi_cap)) + 1};
  }
  bool contains(AociState s) const {
    return s.aoci >= 1 && s.aoci <= aoci_cap && s.aoi >= 1 && s.aoi <= aoi_cap;
  }
  // p_r(aoi): probability that content sampled now equals the content sampled
  // `aoi` slots ago.
  double return_prob(int aoi) const;
  double weighted_cost() const { return weight * update_cost; }
};

// Deterministic stationary policy over the (aoci, aoi) grid.
class PolicyTable {
 public:
  PolicyTable() = default;
  PolicyTable(int aoci_cap, int aoi_cap, Action fill = Action::kIdle);
  static PolicyTable uniform(const MdpSpec& spec, Action a) {
    return PolicyTable(spec.aoci_cap, spec.aoi_cap, a);
  }

  int aoci_cap() const { return aoci_cap_; }
  int aoi_cap() const { return aoi_cap_; }
  std::size_t size() const { return actions_.size(); }

  Action at(AociState s) const { return static_cast<Action>(actions_[offset(s)]); }
  void set(AociState s, Action a) { actions_[offset(s)] = static_cast<std::uint8_t>(a); }
  Action at_index(std::size_t i) const { return static_cast<Action>(actions_[i]); }
  void set_index(std::size_t i, Action a) { actions_[i] = static_cast<std::uint8_t>(a); }

  bool matches(const MdpSpec& spec) const {
    return aoci_cap_ == spec.aoci_cap && aoi_cap_ == spec.aoi_cap;
  }
  bool operator==(const PolicyTable&) const = default;

 private:
  std::size_t offset(AociState s) const;

  int aoci_cap_ = 0;
  int aoi_cap_ = 0;
  std::vector<std::uint8_t> actions_;
};

struct Transition {
  AociState next;
  double prob = 0.0;
};

// At most three successors; identical successors are merged and zero
// probability branches dropped.
class SuccessorList {
 public:
  void add(AociState next, double prob);
  const Transition* begin() const { return items_.data(); }
  const Transition* end() const { return items_.data() + size_; }
  std::size_t size() const { return size_; }
  const Transition& operator[](std::size_t i) const { return items_[i]; }

 private:
  std::array<Transition, 3> items_{};
  std::size_t size_ = 0;
};

SuccessorList transitions(AociState s, Action a, const MdpSpec& spec);
double stage_cost(AociState s, Action a, const MdpSpec& spec);

enum class EvalMethod {
  kAuto,          // dense for small spaces, sparse LU up to direct_limit, sweeps beyond
  kDense,         // dense LU on the |S| x |S| system
  kSparseDirect,  // sparse LU on the same system
  kSweep,         // relative-value sweeps over the <= 3 successors per state
};

struct EvalOptions {
  EvalMethod method = EvalMethod::kAuto;
  std::size_t dense_limit = 400;
  std::size_t direct_limit = 10000;
  double tolerance = 1e-10;  // max residual of the Poisson equations
  std::size_t max_sweeps = 2'000'000;
  double aperiodicity = 0.5;  // self-loop weight of the sweep iteration
};

struct Evaluation {
  double gain = 0.0;
  std::vector<double> bias;  // indexed by MdpSpec::index; bias[ref] == 0
  double residual = 0.0;
  EvalMethod method = EvalMethod::kAuto;
  std::size_t sweeps = 0;
  // Transition entries read by one sweep (sweep method only).
  std::size_t entries_per_sweep = 0;
};

// Gain and bias of `policy`: theta + V(s) = C(s, pi(s)) + sum P V, V(ref) = 0.
Evaluation evaluate_policy(const PolicyTable& policy, const MdpSpec& spec,
                           AociState reference = {1, 1}, const EvalOptions& options = {});

// Whether the threshold shortcut may be trusted or must agree with the argmin.
enum class ShortcutMode {
  kTrust,   // shortcut fires -> update, as in the published algorithm
  kVerify,  // shortcut fires -> argmin action is used; disagreement is counted
  kOff,     // plain policy iteration
};

struct ImproveStats {
  std::size_t shortcut_fired = 0;
  std::size_t shortcut_disagreements = 0;
  std::vector<AociState> disagreement_states;
};

// Greedy policy w.r.t. `bias`, with the threshold shortcut applied first.
PolicyTable improve_policy(std::span<const double> bias, const MdpSpec& spec,
                           ShortcutMode mode = ShortcutMode::kTrust,
                           ImproveStats* stats = nullptr);

// Generic one-step argmin (ties to idle).
Action greedy_action(AociState s, std::span<const double> bias, const MdpSpec& spec);

struct RpiOptions {
  AociState reference{1, 1};
  std::size_t max_iterations = 1000;
  ShortcutMode shortcut = ShortcutMode::kTrust;
  EvalOptions eval{};
};

struct SolveResult {
  double gain = 0.0;
  std::vector<double> bias;
  PolicyTable policy;
  std::size_t iterations = 0;
  std::vector<double> gain_history;  // gain at the reference state, per evaluated policy
  ImproveStats shortcut;
  // Iterations whose policy had several closed classes and went through the
  // multichain evaluation/improvement step.
  std::size_t multichain_iterations = 0;
};

// Gain and bias of a policy that may have several closed classes: gain[s] is
// the long-run cost from s, bias solves gain + (I - P) bias = C with bias
// pinned to 0 at one state per closed class (the reference when it is
// recurrent).
struct MultichainEvaluation {
  std::vector<double> gain;
  std::vector<double> bias;
  std::size_t closed_classes = 0;
};

MultichainEvaluation evaluate_multichain(const PolicyTable& policy, const MdpSpec& spec,
                                         AociState reference = {1, 1});

// Two-stage multichain improvement: minimize P gain first, then C + P bias
// among the gain minimizers; keeps the current action on ties.
PolicyTable improve_multichain(const MultichainEvaluation& ev, const PolicyTable& current,
                               const MdpSpec& spec);

// Number of closed classes of the chain induced by `policy` over all states.
std::size_t count_closed_classes(const PolicyTable& policy, const MdpSpec& spec);

SolveResult relative_policy_iteration(const MdpSpec& spec, const RpiOptions& options = {});

// Smallest integer aoci at which the threshold inequality
// p_tx (1 - p_r(aoi)) aoci - p_tx aoi - omega C >= 0 holds, or nullopt when
// no such aoci <= aoci_cap exists.
std::optional<int> threshold_for(int aoi, const MdpSpec& spec);
// Left-hand side of the threshold inequality.
double threshold_margin(AociState s, const MdpSpec& spec);

struct RviOptions {
  AociState reference{1, 1};
  double span_tolerance = 1e-9;
  std::size_t max_iterations = 5'000'000;
  double aperiodicity = 0.5;
};

SolveResult relative_value_iteration(const MdpSpec& spec, const RviOptions& options = {});

struct EnumerationResult {
  double gain = 0.0;
  PolicyTable policy;
  std::size_t policies_evaluated = 0;
};

// Exhaustive search over all 2^|S| deterministic policies (|S| <= 16), each
// evaluated by the stationary distribution of its chain started at (1, 1).
EnumerationResult enumerate_policies_oracle(const MdpSpec& spec);

// Long-run average cost of `policy` started at (1, 1), computed from the
// stationary distributions of the recurrent classes it reaches.
double average_cost_of(const PolicyTable& policy, const MdpSpec& spec);

// States recurrent under `policy` when started at (1, 1).
std::vector<AociState> recurrent_states(const PolicyTable& policy, const MdpSpec& spec);

// True when, for every aoi, update at aoci implies update at every larger aoci.
bool is_monotone_in_aoci(const PolicyTable& policy);

// CSV export/import. Columns: delta (AoI), aoci, action / bias.
void write_policy_csv(std::ostream& out, const PolicyTable& policy);
PolicyTable read_policy_csv(std::istream& in);
void write_solve_csv(std::ostream& out, const SolveResult& result, const MdpSpec& spec);
// Reads the gain and iteration count from a solve CSV.
std::pair<double, std::size_t> read_solve_header(std::istream& in);

}  // namespace dtsync
