#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "dtsync/deployment_solution.hpp"
#include "dtsync/rng.hpp"

namespace dtsync {

struct Point {
  double x = 0.0;
  double y = 0.0;
  bool operator==(const Point&) const = default;
};

double distance(Point a, Point b);

struct Topology {
  std::vector<Point> device_positions;
  std::vector<Point> bs_positions;
  std::vector<double> channel_gains;  // K x B row-major, dimensionless power gain
  std::vector<double> server_cycles;  // F_m, cycles/second
  std::vector<int> server_dt_capacity;  // N_m

  std::size_t num_devices() const { return device_positions.size(); }
  std::size_t num_bs() const { return bs_positions.size(); }
  double gain(std::size_t k, std::size_t b) const { return channel_gains[k * num_bs() + b]; }
  double bs_distance(std::size_t b, std::size_t m) const;
  double device_distance(std::size_t k, std::size_t b) const;

  bool operator==(const Topology&) const = default;
};

struct RadioParams {
  double bandwidth_hz = 20e6;
  double tx_power_watt = 0.19952623149688797;  // 23 dBm
  double noise_power_watt = 7.962143411069938e-14;  // -174 dBm/Hz over 20 MHz

  // Builds parameters from dBm figures; noise is a density integrated over
  // the bandwidth.
  static RadioParams from_dbm(double bandwidth_hz, double tx_power_dbm,
                              double noise_density_dbm_per_hz);
  void validate() const;
};

// Per-device payload sizes plus network-wide conversion constants.
struct LatencyParams {
  std::vector<double> history_bits;  // D'_k
  std::vector<double> update_bits;   // Delta D_k
  double backhaul_coeff = 1e-11;     // seconds per bit per meter
  double cycles_per_bit = 1000.0;

  void validate(std::size_t num_devices) const;
};

struct TopologyConfig {
  std::size_t num_devices = 6;
  std::size_t num_bs = 4;
  double area_width_m = 1000.0;
  double area_height_m = 1000.0;
  double server_cycles_min = 5e9;
  double server_cycles_max = 20e9;
  // N_m is drawn uniformly from [ceil(lo*K/B), ceil(hi*K/B)], so the total
  // capacity always covers K devices when lo >= 1.
  double capacity_factor_min = 1.0;
  double capacity_factor_max = 2.0;
  double path_loss_exponent = 3.5;
  double reference_distance_m = 1.0;

  void validate() const;
};

struct WorkloadConfig {
  double history_bits_min = 1e6;
  double history_bits_max = 10e6;
  double update_bits_min = 10e3;
  double update_bits_max = 100e3;
  double backhaul_coeff = 1e-11;
  double cycles_per_bit = 1000.0;

  void validate() const;
};

// Everything the latency model needs for one network instance.
struct Scenario {
  Topology topo;
  LatencyParams lat;
  RadioParams radio;
};

double achievable_rate(double gain, const RadioParams& radio);

// Generic three-term latency for pushing `bits` over access, backhaul and
// compute: bits/rate + beta*bits*d + bits/f.
double transfer_latency(double bits, double rate, double backhaul_coeff,
                        double backhaul_distance_m, double f_alloc);

double construction_latency(std::size_t k, std::size_t b, std::size_t m,
                            const Topology& topo, const LatencyParams& lat,
                            double rate, double f_alloc);
double update_latency(std::size_t k, std::size_t b, std::size_t m,
                      const Topology& topo, const LatencyParams& lat,
                      double rate, double f_alloc);
double interaction_latency(std::size_t k, std::size_t b, std::size_t m,
                           const Topology& topo, const LatencyParams& lat,
                           double rate, double f_alloc);

// Processing rate (bits/s) each twin gets on server m when `hosted` twins
// share it equally.
double equal_share_rate(const Topology& topo, const LatencyParams& lat,
                        std::size_t m, int hosted);

// Access BS minimizing the communication part (access + backhaul) of the
// interaction latency of device k towards server m.
std::size_t best_access_bs(std::size_t k, std::size_t m, const Scenario& sc);

// Interaction latency of device k hosted at m through access BS b with
// `hosted` twins on m.
double pair_interaction_latency(std::size_t k, std::size_t b, std::size_t m,
                                int hosted, const Scenario& sc);

// (1/(K*B)) * sum_{k,m} T_inter(k,m) v_{k,m} under equal compute split.
double average_interaction_latency(const DeploymentSolution& sol,
                                   const Topology& topo,
                                   const LatencyParams& lat,
                                   const RadioParams& radio);

Topology sample_topology(std::uint64_t seed, const TopologyConfig& config);
// Redraws the Rayleigh component of every gain, keeping positions.
void resample_fading(Topology& topo, const TopologyConfig& config, Rng& rng);
// Redraws device positions and gains, keeping the servers.
void resample_devices(Topology& topo, const TopologyConfig& config, Rng& rng);

LatencyParams sample_latency_params(std::size_t num_devices,
                                    const WorkloadConfig& config, Rng& rng);

Scenario sample_scenario(std::uint64_t seed, const TopologyConfig& topo_config,
                         const WorkloadConfig& workload, const RadioParams& radio);

}  // namespace dtsync
