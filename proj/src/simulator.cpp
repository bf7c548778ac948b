#include "dtsync/simulator.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <ostream>
#include <sstream>

#include "dtsync/csv_format.hpp"
#include "dtsync/errors.hpp"
#include "dtsync/parallel.hpp"

namespace dtsync {
namespace {

constexpr std::uint64_t kDeliveryStream = 0xd311;
constexpr std::uint64_t kContentStream = 0xc0de;

}  // namespace

void SimConfig::validate() const {
  if (!(content_q >= 0.0 && content_q <= 1.0))
    throw InvalidParameter("chain.q must lie in [0, 1]");
  delivery.validate();
  if (!(update_cost >= 0.0) || !std::isfinite(update_cost))
    throw InvalidParameter("mdp.update_cost must be finite and >= 0");
  if (!(weight >= 0.0) || !std::isfinite(weight))
    throw InvalidParameter("mdp.weight must be finite and >= 0");
  if (aoci_cap < 1 || aoi_cap < 1) throw InvalidParameter("mdp caps must be >= 1");
  if (aoci_cap < aoi_cap) throw InvalidParameter("mdp.aoci_cap must be >= mdp.aoi_cap");
  if (horizon < 1) throw InvalidParameter("simulation.horizon must be >= 1");
  if (warmup < 0) throw InvalidParameter("simulation.warmup must be >= 0");
  if (runs < 1) throw InvalidParameter("simulation.runs must be >= 1");
}

MdpSpec SimConfig::mdp() const {
  MdpSpec spec;
  spec.aoci_cap = aoci_cap;
  spec.aoi_cap = aoi_cap;
  spec.p_tx = delivery.p_tx;
  spec.content_q = content_q;
  spec.update_cost = update_cost;
  spec.weight = weight;
  return spec;
}

SchedulingPolicy SchedulingPolicy::zero_wait() {
  SchedulingPolicy p;
  p.kind_ = Kind::kZeroWait;
  return p;
}

SchedulingPolicy SchedulingPolicy::sample_at_change() {
  SchedulingPolicy p;
  p.kind_ = Kind::kSampleAtChange;
  return p;
}

SchedulingPolicy SchedulingPolicy::idle() { return SchedulingPolicy{}; }

SchedulingPolicy SchedulingPolicy::threshold(std::vector<std::optional<int>> thresholds) {
  if (thresholds.empty()) throw InvalidParameter("threshold policy needs at least one entry");
  SchedulingPolicy p;
  p.kind_ = Kind::kThreshold;
  p.thresholds_ = std::move(thresholds);
  return p;
}

SchedulingPolicy SchedulingPolicy::table(PolicyTable table) {
  if (table.size() == 0) throw InvalidParameter("empty policy table");
  SchedulingPolicy p;
  p.kind_ = Kind::kTable;
  p.table_ = std::move(table);
  return p;
}

std::string SchedulingPolicy::name() const {
  switch (kind_) {
    case Kind::kZeroWait: return "zw";
    case Kind::kSampleAtChange: return "sac";
    case Kind::kThreshold: return "threshold";
    case Kind::kTable: return "table";
    case Kind::kIdle: return "idle";
  }
  return "unknown";
}

bool SchedulingPolicy::decide(const SlotView& view) const {
  switch (kind_) {
    case Kind::kZeroWait: return true;
    case Kind::kSampleAtChange: return view.current_content != view.last_delivered;
    case Kind::kThreshold: {
      const std::size_t i =
          std::min<std::size_t>(static_cast<std::size_t>(view.state.aoi - 1), thresholds_.size() - 1);
      return thresholds_[i].has_value() && view.state.aoci >= *thresholds_[i];
    }
    case Kind::kTable: {
      const AociState s{std::min(view.state.aoci, table_.aoci_cap()),
                        std::min(view.state.aoi, table_.aoi_cap())};
      return table_.at(s) == Action::kUpdate;
    }
    case Kind::kIdle: return false;
  }
  return false;
}

std::optional<PolicyTable> SchedulingPolicy::as_table(int aoci_cap, int aoi_cap) const {
  if (kind_ == Kind::kSampleAtChange) return std::nullopt;
  if (kind_ == Kind::kTable && table_.aoci_cap() == aoci_cap && table_.aoi_cap() == aoi_cap)
    return table_;
  PolicyTable out(aoci_cap, aoi_cap);
  for (int d = 1; d <= aoci_cap; ++d)
    for (int a = 1; a <= aoi_cap; ++a)
      if (decide({{d, a}, 0, 0})) out.set({d, a}, Action::kUpdate);
  return out;
}

SchedulingPolicy zw_policy() { return SchedulingPolicy::zero_wait(); }
SchedulingPolicy sac_policy() { return SchedulingPolicy::sample_at_change(); }
SchedulingPolicy threshold_policy(std::vector<std::optional<int>> thresholds) {
  return SchedulingPolicy::threshold(std::move(thresholds));
}
SchedulingPolicy threshold_policy(const PolicyTable& table) { return SchedulingPolicy::table(table); }

AociState next_state(AociState s, bool delivered, bool changed, int aoci_cap, int aoi_cap) {
  const int aoci_up = std::min(s.aoci + 1, aoci_cap);
  if (delivered && changed) return {1, 1};
  if (delivered) return {aoci_up, 1};
  return {aoci_up, std::min(s.aoi + 1, aoi_cap)};
}

SlotProcesses make_processes(const SimConfig& config, std::size_t replication) {
  SlotProcesses proc{ContentChain(config.content_q),
                     make_rng(config.seed, kDeliveryStream, replication),
                     make_rng(config.seed, kContentStream, replication), 0};
  // Stationary start: the state delivered at slot 0 is uniform; the chain
  // then moves to slot 1.
  std::bernoulli_distribution coin(0.5);
  proc.content = ContentChain(config.content_q, coin(proc.content_rng) ? 1 : 0);
  proc.last_delivered = proc.content.state();
  proc.content.step(proc.content_rng);
  return proc;
}

SlotRecord advance_slot(SlotRecord& record, bool scheduled, SlotProcesses& proc,
                        const SimConfig& config) {
  const bool success = draw_delivery(config.delivery, proc.delivery_rng);
  record.scheduled = scheduled;
  record.delivered = scheduled && success;
  record.changed = record.delivered && proc.content.state() != proc.last_delivered;
  if (record.delivered) proc.last_delivered = proc.content.state();
  proc.content.step(proc.content_rng);

  const AociState next = next_state({record.aoci, record.aoi}, record.delivered, record.changed,
                                    config.aoci_cap, config.aoi_cap);
  SlotRecord out;
  out.t = record.t + 1;
  out.aoci = next.aoci;
  out.aoi = next.aoi;
  return out;
}

Replication run_replication(const SchedulingPolicy& policy, const SimConfig& config,
                            std::size_t replication, bool keep_trace) {
  config.validate();
  SlotProcesses proc = make_processes(config, replication);
  Replication out;
  if (keep_trace) out.trace.reserve(static_cast<std::size_t>(config.horizon));

  SlotRecord rec;
  auto step = [&] {
    const SlotView view{{rec.aoci, rec.aoi}, proc.content.state(), proc.last_delivered};
    SlotRecord next = advance_slot(rec, policy.decide(view), proc, config);
    std::swap(rec, next);
    return next;
  };
  for (long t = 0; t < config.warmup; ++t) step();
  rec.t = 1;

  std::int64_t aoci_sum = 0;
  std::int64_t updates = 0;
  std::int64_t deliveries = 0;
  for (long t = 1; t <= config.horizon; ++t) {
    const SlotRecord done = step();
    aoci_sum += done.aoci;
    updates += done.scheduled;
    deliveries += done.delivered;
    if (keep_trace) out.trace.push_back(done);
  }

  const double n = static_cast<double>(config.horizon);
  RunMetrics& m = out.metrics;
  m.avg_aoci = static_cast<double>(aoci_sum) / n;
  m.update_rate = static_cast<double>(updates) / n;
  m.delivery_rate = static_cast<double>(deliveries) / n;
  m.avg_update_cost = config.weight * config.update_cost * m.update_rate;
  m.total_avg_cost = m.avg_aoci + m.avg_update_cost;
  return out;
}

Estimate estimate(std::vector<double> values) {
  Estimate e;
  if (values.empty()) return e;
  // Sorting first makes the result independent of replication order.
  std::sort(values.begin(), values.end());
  const double n = static_cast<double>(values.size());
  e.mean = std::accumulate(values.begin(), values.end(), 0.0) / n;
  if (values.size() > 1) {
    double ss = 0.0;
    for (double v : values) ss += (v - e.mean) * (v - e.mean);
    const double sd = std::sqrt(ss / (n - 1.0));
    e.std_error = sd / std::sqrt(n);
    e.half_width = 1.96 * e.std_error;
  }
  return e;
}

Metrics aggregate(const std::vector<RunMetrics>& runs, long slots) {
  auto column = [&](double RunMetrics::*field) {
    std::vector<double> v;
    v.reserve(runs.size());
    for (const auto& r : runs) v.push_back(r.*field);
    return estimate(std::move(v));
  };
  Metrics m;
  m.avg_aoci = column(&RunMetrics::avg_aoci);
  m.avg_update_cost = column(&RunMetrics::avg_update_cost);
  m.total_avg_cost = column(&RunMetrics::total_avg_cost);
  m.total_avg_cost.mean = m.avg_aoci.mean + m.avg_update_cost.mean;
  m.update_rate = column(&RunMetrics::update_rate);
  m.delivery_rate = column(&RunMetrics::delivery_rate);
  m.runs = runs.size();
  m.slots = slots;
  return m;
}

Metrics run_monte_carlo(const SchedulingPolicy& policy, const SimConfig& config) {
  config.validate();
  std::vector<RunMetrics> runs(config.runs);
  parallel_for(
      config.runs, [&](std::size_t r) { runs[r] = run_replication(policy, config, r).metrics; },
      config.workers);
  return aggregate(runs, config.horizon);
}

std::optional<std::string> validate_trace(const std::vector<SlotRecord>& trace, int aoci_cap,
                                          int aoi_cap) {
  auto fail = [](const SlotRecord& r, const std::string& what) {
    std::ostringstream msg;
    msg << "slot " << r.t << ": " << what;
    return std::optional<std::string>(msg.str());
  };
  for (std::size_t i = 0; i < trace.size(); ++i) {
    const SlotRecord& r = trace[i];
    if (r.delivered && !r.scheduled) return fail(r, "delivered without being scheduled");
    if (r.changed && !r.delivered) return fail(r, "change flagged without a delivery");
    if (r.aoi < 1 || r.aoi > aoi_cap || r.aoci < 1 || r.aoci > aoci_cap)
      return fail(r, "state outside the caps");
    if (r.aoci < r.aoi) return fail(r, "aoci below aoi");
    if (i + 1 < trace.size()) {
      const SlotRecord& n = trace[i + 1];
      if (n.t != r.t + 1) return fail(r, "slots are not consecutive");
      const AociState expect = next_state({r.aoci, r.aoi}, r.delivered, r.changed, aoci_cap, aoi_cap);
      if (n.aoci != expect.aoci || n.aoi != expect.aoi) return fail(n, "illegal state transition");
    }
  }
  return std::nullopt;
}

void write_trace_csv(std::ostream& out, const std::vector<SlotRecord>& trace) {
  out << "t,a,d,c,delta,aoci\n";
  for (const auto& r : trace)
    out << r.t << ',' << int(r.scheduled) << ',' << int(r.delivered) << ',' << int(r.changed)
        << ',' << r.aoi << ',' << r.aoci << '\n';
}

void write_metrics_header(std::ostream& out) {
  out << "policy,p_tx,q,omega,C,avg_aoci,avg_aoci_ci,avg_update_cost,avg_update_cost_ci,"
         "total_avg_cost,total_avg_cost_ci,total_avg_cost_se,update_rate,update_rate_ci,runs,slots\n";
}

void write_metrics_row(std::ostream& out, const MetricsRow& row) {
  const Metrics& m = row.metrics;
  out << row.policy << ',' << fmt(row.p_tx) << ',' << fmt(row.q) << ',' << fmt(row.omega) << ','
      << fmt(row.update_cost) << ',' << fmt(m.avg_aoci.mean) << ',' << fmt(m.avg_aoci.half_width) << ','
      << fmt(m.avg_update_cost.mean) << ',' << fmt(m.avg_update_cost.half_width) << ','
      << fmt(m.total_avg_cost.mean) << ',' << fmt(m.total_avg_cost.half_width) << ','
      << fmt(m.total_avg_cost.std_error) << ',' << fmt(m.update_rate.mean) << ','
      << fmt(m.update_rate.half_width) << ',' << m.runs << ',' << m.slots << '\n';
}

}  // namespace dtsync
