#include "dtsync/net_model.hpp"

#include <cmath>
#include <limits>
#include <sstream>
#include <string>

#include "dtsync/errors.hpp"

namespace dtsync {
namespace {

void require_positive(double value, const char* name) {
  if (!(value > 0.0) || !std::isfinite(value)) {
    std::ostringstream msg;
    msg << name << " must be positive and finite (got " << value << ")";
    throw InvalidParameter(msg.str());
  }
}

double path_loss(double dist, const TopologyConfig& config) {
  const double d = std::max(dist, config.reference_distance_m);
  return std::pow(d / config.reference_distance_m, -config.path_loss_exponent);
}

void draw_gains(Topology& topo, const TopologyConfig& config, Rng& rng) {
  std::exponential_distribution<double> rayleigh_power(1.0);
  const std::size_t K = topo.num_devices(), B = topo.num_bs();
  topo.channel_gains.resize(K * B);
  for (std::size_t k = 0; k < K; ++k) {
    for (std::size_t b = 0; b < B; ++b) {
      double g = rayleigh_power(rng);
      // The exponential draw can return exactly 0; keep gains strictly positive.
      if (g <= 0.0) g = std::numeric_limits<double>::min();
      topo.channel_gains[k * B + b] = g * path_loss(topo.device_distance(k, b), config);
    }
  }
}

Point draw_point(const TopologyConfig& config, Rng& rng) {
  std::uniform_real_distribution<double> ux(0.0, config.area_width_m);
  std::uniform_real_distribution<double> uy(0.0, config.area_height_m);
  Point p;
  p.x = ux(rng);
  p.y = uy(rng);
  return p;
}

}  // namespace

int DeploymentSolution::host_of(std::size_t k) const {
  int found = -1;
  for (std::size_t m = 0; m < num_bs; ++m) {
    if (assoc(k, m) == 0) continue;
    if (found >= 0 || assoc(k, m) != 1) return -1;
    found = static_cast<int>(m);
  }
  return found;
}

int DeploymentSolution::access_of(std::size_t k) const {
  int found = -1;
  for (std::size_t b = 0; b < num_bs; ++b) {
    if (access(k, b) == 0) continue;
    if (found >= 0 || access(k, b) != 1) return -1;
    found = static_cast<int>(b);
  }
  return found;
}

std::vector<int> DeploymentSolution::hosted_counts() const {
  std::vector<int> counts(num_bs, 0);
  for (std::size_t k = 0; k < num_devices; ++k)
    for (std::size_t m = 0; m < num_bs; ++m) counts[m] += assoc(k, m);
  return counts;
}

double distance(Point a, Point b) { return std::hypot(a.x - b.x, a.y - b.y); }

double Topology::bs_distance(std::size_t b, std::size_t m) const {
  if (b == m) return 0.0;
  return distance(bs_positions[b], bs_positions[m]);
}

double Topology::device_distance(std::size_t k, std::size_t b) const {
  return distance(device_positions[k], bs_positions[b]);
}

RadioParams RadioParams::from_dbm(double bandwidth_hz, double tx_power_dbm,
                                  double noise_density_dbm_per_hz) {
  RadioParams r;
  r.bandwidth_hz = bandwidth_hz;
  r.tx_power_watt = std::pow(10.0, (tx_power_dbm - 30.0) / 10.0);
  r.noise_power_watt =
      std::pow(10.0, (noise_density_dbm_per_hz - 30.0) / 10.0) * bandwidth_hz;
  return r;
}

void RadioParams::validate() const {
  require_positive(bandwidth_hz, "bandwidth_hz");
  require_positive(tx_power_watt, "tx_power_watt");
  require_positive(noise_power_watt, "noise_power_watt");
}

void LatencyParams::validate(std::size_t num_devices) const {
  if (history_bits.size() != num_devices || update_bits.size() != num_devices)
    throw InvalidParameter("latency parameters must have one entry per device");
  for (std::size_t k = 0; k < num_devices; ++k) {
    require_positive(history_bits[k], "history_bits");
    require_positive(update_bits[k], "update_bits");
    if (update_bits[k] > history_bits[k])
      throw InvalidParameter("update_bits must not exceed history_bits");
  }
  require_positive(backhaul_coeff, "backhaul_coeff");
  require_positive(cycles_per_bit, "cycles_per_bit");
}

void TopologyConfig::validate() const {
  if (num_devices < 1) throw InvalidParameter("num_devices must be >= 1");
  if (num_bs < 1) throw InvalidParameter("num_bs must be >= 1");
  require_positive(area_width_m, "area_width_m");
  require_positive(area_height_m, "area_height_m");
  require_positive(server_cycles_min, "server_cycles_min");
  if (server_cycles_max < server_cycles_min)
    throw InvalidParameter("server_cycles_max must be >= server_cycles_min");
  if (capacity_factor_min < 1.0)
    throw InvalidParameter("capacity_factor_min must be >= 1 so every device can be hosted");
  if (capacity_factor_max < capacity_factor_min)
    throw InvalidParameter("capacity_factor_max must be >= capacity_factor_min");
  require_positive(path_loss_exponent, "path_loss_exponent");
  require_positive(reference_distance_m, "reference_distance_m");
}

void WorkloadConfig::validate() const {
  require_positive(history_bits_min, "history_bits_min");
  require_positive(update_bits_min, "update_bits_min");
  if (history_bits_max < history_bits_min)
    throw InvalidParameter("history_bits_max must be >= history_bits_min");
  if (update_bits_max < update_bits_min)
    throw InvalidParameter("update_bits_max must be >= update_bits_min");
  if (update_bits_max > history_bits_min)
    throw InvalidParameter("update_bits_max must not exceed history_bits_min");
  require_positive(backhaul_coeff, "backhaul_coeff");
  require_positive(cycles_per_bit, "cycles_per_bit");
}

double achievable_rate(double gain, const RadioParams& radio) {
  require_positive(gain, "gain");
  radio.validate();
  const double snr = gain * radio.tx_power_watt / radio.noise_power_watt;
  return radio.bandwidth_hz * std::log2(1.0 + snr);
}

double transfer_latency(double bits, double rate, double backhaul_coeff,
                        double backhaul_distance_m, double f_alloc) {
  require_positive(rate, "rate");
  require_positive(f_alloc, "f_alloc");
  if (bits < 0.0) throw InvalidParameter("bits must be non-negative");
  if (backhaul_distance_m < 0.0) throw InvalidParameter("distance must be non-negative");
  return bits / rate + backhaul_coeff * bits * backhaul_distance_m + bits / f_alloc;
}

double construction_latency(std::size_t k, std::size_t b, std::size_t m,
                            const Topology& topo, const LatencyParams& lat,
                            double rate, double f_alloc) {
  return transfer_latency(lat.history_bits.at(k), rate, lat.backhaul_coeff,
                          topo.bs_distance(b, m), f_alloc);
}

double update_latency(std::size_t k, std::size_t b, std::size_t m,
                      const Topology& topo, const LatencyParams& lat,
                      double rate, double f_alloc) {
  return transfer_latency(lat.update_bits.at(k), rate, lat.backhaul_coeff,
                          topo.bs_distance(b, m), f_alloc);
}

double interaction_latency(std::size_t k, std::size_t b, std::size_t m,
                           const Topology& topo, const LatencyParams& lat,
                           double rate, double f_alloc) {
  return construction_latency(k, b, m, topo, lat, rate, f_alloc) +
         update_latency(k, b, m, topo, lat, rate, f_alloc);
}

double equal_share_rate(const Topology& topo, const LatencyParams& lat,
                        std::size_t m, int hosted) {
  if (hosted < 1) throw InvalidParameter("equal split needs at least one hosted twin");
  return topo.server_cycles.at(m) / lat.cycles_per_bit / hosted;
}

std::size_t best_access_bs(std::size_t k, std::size_t m, const Scenario& sc) {
  const double bits = sc.lat.history_bits[k] + sc.lat.update_bits[k];
  std::size_t best = m;
  double best_cost = std::numeric_limits<double>::infinity();
  for (std::size_t b = 0; b < sc.topo.num_bs(); ++b) {
    const double rate = achievable_rate(sc.topo.gain(k, b), sc.radio);
    const double cost =
        bits / rate + sc.lat.backhaul_coeff * bits * sc.topo.bs_distance(b, m);
    if (cost < best_cost) {
      best_cost = cost;
      best = b;
    }
  }
  return best;
}

double pair_interaction_latency(std::size_t k, std::size_t b, std::size_t m,
                                int hosted, const Scenario& sc) {
  const double rate = achievable_rate(sc.topo.gain(k, b), sc.radio);
  return interaction_latency(k, b, m, sc.topo, sc.lat, rate,
                             equal_share_rate(sc.topo, sc.lat, m, hosted));
}

double average_interaction_latency(const DeploymentSolution& sol,
                                   const Topology& topo,
                                   const LatencyParams& lat,
                                   const RadioParams& radio) {
  const std::size_t K = topo.num_devices(), B = topo.num_bs();
  if (sol.num_devices != K || sol.num_bs != B)
    throw InvalidParameter("solution dimensions do not match the topology");
  const std::vector<int> hosted = sol.hosted_counts();
  double total = 0.0;
  for (std::size_t k = 0; k < K; ++k) {
    const int b = sol.access_of(k);
    for (std::size_t m = 0; m < B; ++m) {
      if (sol.assoc(k, m) == 0) continue;
      if (b < 0) throw InvalidParameter("device without a unique access BS");
      const double rate = achievable_rate(topo.gain(k, static_cast<std::size_t>(b)), radio);
      total += interaction_latency(k, static_cast<std::size_t>(b), m, topo, lat, rate,
                                   equal_share_rate(topo, lat, m, hosted[m]));
    }
  }
  return total / static_cast<double>(K * B);
}

Topology sample_topology(std::uint64_t seed, const TopologyConfig& config) {
  config.validate();
  Rng rng = make_rng(seed, 0x7070);
  Topology topo;
  const std::size_t K = config.num_devices, B = config.num_bs;
  for (std::size_t b = 0; b < B; ++b) topo.bs_positions.push_back(draw_point(config, rng));
  for (std::size_t k = 0; k < K; ++k) topo.device_positions.push_back(draw_point(config, rng));
  std::uniform_real_distribution<double> cycles(config.server_cycles_min,
                                                config.server_cycles_max);
  const double per_bs = static_cast<double>(K) / static_cast<double>(B);
  const int cap_lo = std::max(1, static_cast<int>(std::ceil(config.capacity_factor_min * per_bs)));
  const int cap_hi = std::max(cap_lo, static_cast<int>(std::ceil(config.capacity_factor_max * per_bs)));
  std::uniform_int_distribution<int> capacity(cap_lo, cap_hi);
  for (std::size_t b = 0; b < B; ++b) {
    topo.server_cycles.push_back(cycles(rng));
    topo.server_dt_capacity.push_back(capacity(rng));
  }
  draw_gains(topo, config, rng);
  return topo;
}

void resample_fading(Topology& topo, const TopologyConfig& config, Rng& rng) {
  draw_gains(topo, config, rng);
}

void resample_devices(Topology& topo, const TopologyConfig& config, Rng& rng) {
  for (auto& p : topo.device_positions) p = draw_point(config, rng);
  draw_gains(topo, config, rng);
}

LatencyParams sample_latency_params(std::size_t num_devices,
                                    const WorkloadConfig& config, Rng& rng) {
  config.validate();
  LatencyParams lat;
  lat.backhaul_coeff = config.backhaul_coeff;
  lat.cycles_per_bit = config.cycles_per_bit;
  std::uniform_real_distribution<double> hist(config.history_bits_min, config.history_bits_max);
  std::uniform_real_distribution<double> upd(config.update_bits_min, config.update_bits_max);
  for (std::size_t k = 0; k < num_devices; ++k) {
    lat.history_bits.push_back(hist(rng));
    lat.update_bits.push_back(upd(rng));
  }
  return lat;
}

Scenario sample_scenario(std::uint64_t seed, const TopologyConfig& topo_config,
                         const WorkloadConfig& workload, const RadioParams& radio) {
  radio.validate();
  Scenario sc;
  sc.topo = sample_topology(seed, topo_config);
  Rng rng = make_rng(seed, 0x1a7);
  sc.lat = sample_latency_params(topo_config.num_devices, workload, rng);
  sc.radio = radio;
  return sc;
}

}  // namespace dtsync
