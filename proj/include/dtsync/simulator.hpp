#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "dtsync/sched_mdp.hpp"
#include "dtsync/state_process.hpp"

namespace dtsync {

// One slot of a PT-DT synchronization run. (aoci, aoi) is the state at the
// start of slot t, the flags are the events of that slot.
struct SlotRecord {
  long t = 1;
  bool scheduled = false;
  bool delivered = false;
  bool changed = false;
  int aoi = 1;
  int aoci = 1;

  bool operator==(const SlotRecord&) const = default;
};

struct SimConfig {
  double content_q = 0.3;
  DeliveryModel delivery = DeliveryModel::fixed(0.8);
  double update_cost = 12.0;
  double weight = 1.0;
  int aoci_cap = 100;
  int aoi_cap = 100;
  long horizon = 1000;   // measured slots per replication
  long warmup = 0;       // slots simulated before slot 1, not measured
  std::size_t runs = 1000;
  std::uint64_t seed = 1;
  unsigned workers = 0;  // 0 = hardware concurrency

  void validate() const;
  MdpSpec mdp() const;  // matching spec; requires fixed delivery mode
};

// What a policy may observe. SAC additionally reads the genie fields.
struct SlotView {
  AociState state;
  std::uint8_t current_content = 0;
  std::uint8_t last_delivered = 0;
};

class SchedulingPolicy {
 public:
  enum class Kind { kZeroWait, kSampleAtChange, kThreshold, kTable, kIdle };

  static SchedulingPolicy zero_wait();
  static SchedulingPolicy sample_at_change();
  static SchedulingPolicy idle();
  // thresholds[d - 1] is the AoCI threshold at AoI d; nullopt never updates.
  // AoI values beyond the vector use its last entry.
  static SchedulingPolicy threshold(std::vector<std::optional<int>> thresholds);
  static SchedulingPolicy table(PolicyTable table);

  Kind kind() const { return kind_; }
  std::string name() const;
  bool decide(const SlotView& view) const;
  // State-feedback table over the given caps (not available for SAC).
  std::optional<PolicyTable> as_table(int aoci_cap, int aoi_cap) const;

 private:
  Kind kind_ = Kind::kIdle;
  std::vector<std::optional<int>> thresholds_;
  PolicyTable table_;
};

SchedulingPolicy zw_policy();
SchedulingPolicy sac_policy();
SchedulingPolicy threshold_policy(std::vector<std::optional<int>> thresholds);
SchedulingPolicy threshold_policy(const PolicyTable& table);

// State after a slot with the given events, saturated at the caps.
AociState next_state(AociState s, bool delivered, bool changed, int aoci_cap, int aoi_cap);

// Per-replication processes. Delivery and content use separate streams and
// both advance every slot, so runs of different policies under one seed see
// the same channel and content realizations.
struct SlotProcesses {
  ContentChain content;
  Rng delivery_rng;
  Rng content_rng;
  std::uint8_t last_delivered = 0;
};

SlotProcesses make_processes(const SimConfig& config, std::size_t replication);

// Executes slot `record.t` with decision `scheduled` and fills the event
// flags of `record`; returns the record of slot t + 1.
SlotRecord advance_slot(SlotRecord& record, bool scheduled, SlotProcesses& proc,
                        const SimConfig& config);

struct RunMetrics {
  double avg_aoci = 0.0;
  double avg_update_cost = 0.0;
  double total_avg_cost = 0.0;  // avg_aoci + avg_update_cost
  double update_rate = 0.0;
  double delivery_rate = 0.0;
};

struct Replication {
  RunMetrics metrics;
  std::vector<SlotRecord> trace;  // empty unless requested
};

Replication run_replication(const SchedulingPolicy& policy, const SimConfig& config,
                            std::size_t replication, bool keep_trace = false);

struct Estimate {
  double mean = 0.0;
  double std_error = 0.0;
  double half_width = 0.0;  // 95% normal approximation
};

struct Metrics {
  Estimate avg_aoci;
  Estimate avg_update_cost;
  Estimate total_avg_cost;
  Estimate update_rate;
  Estimate delivery_rate;
  std::size_t runs = 0;
  long slots = 0;
};

Estimate estimate(std::vector<double> values);
Metrics aggregate(const std::vector<RunMetrics>& runs, long slots);
Metrics run_monte_carlo(const SchedulingPolicy& policy, const SimConfig& config);

// Empty when the trace obeys the slot dynamics; otherwise a description of
// the first violation.
std::optional<std::string> validate_trace(const std::vector<SlotRecord>& trace, int aoci_cap,
                                          int aoi_cap);

void write_trace_csv(std::ostream& out, const std::vector<SlotRecord>& trace);

struct MetricsRow {
  std::string policy;
  double p_tx = 0.0;
  double q = 0.0;
  double omega = 0.0;
  double update_cost = 0.0;
  Metrics metrics;
};

void write_metrics_header(std::ostream& out);
void write_metrics_row(std::ostream& out, const MetricsRow& row);

}  // namespace dtsync
