#include <cmath>
#include <random>

#include "doctest.h"

#include "dtsync/errors.hpp"
#include "dtsync/net_model.hpp"

using namespace dtsync;

namespace {

RadioParams unit_radio() {
  RadioParams r;
  r.bandwidth_hz = 20e6;
  r.tx_power_watt = 1.0;
  r.noise_power_watt = 1.0;
  return r;
}

// Two BSs 500 m apart, one device.
Topology line_topology() {
  Topology t;
  t.device_positions = {{0, 0}};
  t.bs_positions = {{0, 0}, {500, 0}};
  t.channel_gains = {1.0, 1.0};
  t.server_cycles = {20e9, 20e9};
  t.server_dt_capacity = {1, 1};
  return t;
}

LatencyParams payload(double history, double update) {
  LatencyParams lat;
  lat.history_bits = {history};
  lat.update_bits = {update};
  lat.backhaul_coeff = 1e-11;
  lat.cycles_per_bit = 1000.0;
  return lat;
}

// Independent evaluation of the average latency: a plain double loop.
double naive_average(const DeploymentSolution& sol, const Scenario& sc) {
  const auto K = sc.topo.num_devices(), B = sc.topo.num_bs();
  std::vector<int> n(B, 0);
  for (std::size_t k = 0; k < K; ++k)
    for (std::size_t m = 0; m < B; ++m) n[m] += sol.assoc(k, m);
  double sum = 0.0;
  for (std::size_t k = 0; k < K; ++k) {
    std::size_t b = 0;
    for (std::size_t j = 0; j < B; ++j)
      if (sol.access(k, j)) b = j;
    const double snr = sc.topo.gain(k, b) * sc.radio.tx_power_watt / sc.radio.noise_power_watt;
    const double rate = sc.radio.bandwidth_hz * std::log2(1.0 + snr);
    for (std::size_t m = 0; m < B; ++m) {
      if (!sol.assoc(k, m)) continue;
      const double f = sc.topo.server_cycles[m] / sc.lat.cycles_per_bit / n[m];
      const double d = std::hypot(sc.topo.bs_positions[b].x - sc.topo.bs_positions[m].x,
                                  sc.topo.bs_positions[b].y - sc.topo.bs_positions[m].y);
      for (double bits : {sc.lat.history_bits[k], sc.lat.update_bits[k]})
        sum += bits / rate + sc.lat.backhaul_coeff * bits * d + bits / f;
    }
  }
  return sum / static_cast<double>(K * B);
}

}  // namespace

TEST_SUITE("net_model") {

TEST_CASE("achievable rate") {
  RadioParams r = unit_radio();
  CHECK(achievable_rate(1.0, r) == doctest::Approx(20e6).epsilon(1e-15));
  CHECK(achievable_rate(3.0, r) == doctest::Approx(40e6).epsilon(1e-15));
  CHECK(achievable_rate(1e-300, r) < 1e-280);
  CHECK_THROWS_AS(achievable_rate(0.0, r), InvalidParameter);
  CHECK_THROWS_AS(achievable_rate(-1.0, r), InvalidParameter);
  r.bandwidth_hz = 0;
  CHECK_THROWS_AS(achievable_rate(1.0, r), InvalidParameter);
}

TEST_CASE("rate is nondecreasing in gain, power and bandwidth") {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(0.01, 10.0);
  for (int i = 0; i < 500; ++i) {
    RadioParams r = unit_radio();
    r.tx_power_watt = u(rng);
    r.bandwidth_hz = 1e6 * u(rng);
    const double g = u(rng), dg = u(rng);
    const double base = achievable_rate(g, r);
    CHECK(achievable_rate(g + dg, r) >= base);
    RadioParams more_power = r;
    more_power.tx_power_watt += dg;
    CHECK(achievable_rate(g, more_power) >= base);
    RadioParams more_band = r;
    more_band.bandwidth_hz *= 1.0 + dg;
    CHECK(achievable_rate(g, more_band) >= base);
  }
}

TEST_CASE("noise from dBm density") {
  const RadioParams r = RadioParams::from_dbm(20e6, 23.0, -174.0);
  CHECK(r.noise_power_watt == doctest::Approx(std::pow(10.0, -17.4) * 1e-3 * 20e6).epsilon(1e-12));
  CHECK(r.tx_power_watt == doctest::Approx(std::pow(10.0, 2.3) * 1e-3).epsilon(1e-12));
}

TEST_CASE("construction, update and interaction latency") {
  const Topology t = line_topology();
  const LatencyParams lat = payload(8e6, 80e3);
  // rate 20 Mbit/s, 500 m backhaul, f = 20 Mbit/s
  CHECK(construction_latency(0, 0, 1, t, lat, 20e6, 20e6) == doctest::Approx(0.84).epsilon(1e-12));
  CHECK(update_latency(0, 0, 1, t, lat, 20e6, 20e6) == doctest::Approx(0.0084).epsilon(1e-12));
  CHECK(interaction_latency(0, 0, 1, t, lat, 20e6, 20e6) == doctest::Approx(0.8484).epsilon(1e-12));

  // co-located: backhaul term vanishes
  CHECK(construction_latency(0, 1, 1, t, lat, 20e6, 20e6) == doctest::Approx(0.8).epsilon(1e-12));
  CHECK(update_latency(0, 1, 1, t, lat, 20e6, 20e6) == doctest::Approx(0.008).epsilon(1e-12));

  CHECK(construction_latency(0, 0, 1, t, payload(0.0, 0.0), 20e6, 20e6) == 0.0);
  const LatencyParams same = payload(8e6, 8e6);
  CHECK(update_latency(0, 0, 1, t, same, 20e6, 20e6) == construction_latency(0, 0, 1, t, same, 20e6, 20e6));
  const LatencyParams no_update = payload(8e6, 0.0);
  CHECK(interaction_latency(0, 0, 1, t, no_update, 20e6, 20e6) ==
        construction_latency(0, 0, 1, t, no_update, 20e6, 20e6));

  CHECK_THROWS_AS(construction_latency(0, 0, 1, t, lat, 0.0, 20e6), InvalidParameter);
  CHECK_THROWS_AS(construction_latency(0, 0, 1, t, lat, 20e6, 0.0), InvalidParameter);
}

TEST_CASE("construction latency is linear in the payload") {
  const Topology t = line_topology();
  const double one = construction_latency(0, 0, 1, t, payload(1e6, 1e3), 7e6, 3e6);
  for (double scale : {2.0, 3.5, 10.0})
    CHECK(construction_latency(0, 0, 1, t, payload(scale * 1e6, 1e3), 7e6, 3e6) ==
          doctest::Approx(scale * one).epsilon(1e-12));
}

TEST_CASE("average interaction latency") {
  SUBCASE("single device, single BS") {
    Scenario sc;
    sc.topo.device_positions = {{0, 0}};
    sc.topo.bs_positions = {{10, 0}};
    sc.topo.channel_gains = {1.0};
    sc.topo.server_cycles = {20e9};
    sc.topo.server_dt_capacity = {1};
    sc.lat = payload(8e6, 80e3);
    sc.radio = unit_radio();
    DeploymentSolution sol(1, 1);
    sol.host_flags[0] = 1;
    sol.assoc(0, 0) = 1;
    sol.access(0, 0) = 1;
    const double expect = interaction_latency(0, 0, 0, sc.topo, sc.lat, 20e6, 20e6);
    CHECK(average_interaction_latency(sol, sc.topo, sc.lat, sc.radio) == doctest::Approx(expect).epsilon(1e-15));
  }
  SUBCASE("two identical devices on separate servers") {
    Scenario sc;
    sc.topo.device_positions = {{0, 0}, {0, 0}};
    sc.topo.bs_positions = {{0, 0}, {0, 0}};
    sc.topo.channel_gains = {1.0, 1.0, 1.0, 1.0};
    sc.topo.server_cycles = {20e9, 20e9};
    sc.topo.server_dt_capacity = {1, 1};
    sc.lat.history_bits = {8e6, 8e6};
    sc.lat.update_bits = {80e3, 80e3};
    sc.radio = unit_radio();
    DeploymentSolution sol(2, 2);
    sol.host_flags = {1, 1};
    sol.assoc(0, 0) = sol.assoc(1, 1) = 1;
    sol.access(0, 0) = sol.access(1, 1) = 1;
    const double term = interaction_latency(0, 0, 0, sc.topo, sc.lat, 20e6, 20e6);
    CHECK(average_interaction_latency(sol, sc.topo, sc.lat, sc.radio) == doctest::Approx(term / 2).epsilon(1e-15));
  }
  SUBCASE("seeded instances match a naive double loop") {
    for (std::uint64_t seed = 1; seed <= 20; ++seed) {
      TopologyConfig tc;
      tc.num_devices = 3;
      tc.num_bs = 2;
      const Scenario sc = sample_scenario(seed, tc, WorkloadConfig{}, RadioParams{});
      Rng rng = make_rng(seed, 3);
      DeploymentSolution sol(3, 2);
      for (std::size_t k = 0; k < 3; ++k) {
        const std::size_t m = rng() % 2, b = rng() % 2;
        sol.assoc(k, m) = 1;
        sol.access(k, b) = 1;
        sol.host_flags[m] = 1;
      }
      CHECK(average_interaction_latency(sol, sc.topo, sc.lat, sc.radio) ==
            doctest::Approx(naive_average(sol, sc)).epsilon(1e-12));
    }
  }
}

TEST_CASE("topology sampling") {
  TopologyConfig tc;
  tc.num_devices = 30;
  tc.num_bs = 5;
  const Topology a = sample_topology(42, tc), b = sample_topology(42, tc);
  CHECK(a == b);
  CHECK_FALSE(a == sample_topology(43, tc));
  int total_capacity = 0;
  for (std::size_t m = 0; m < a.num_bs(); ++m) {
    CHECK(a.server_cycles[m] >= tc.server_cycles_min);
    CHECK(a.server_cycles[m] <= tc.server_cycles_max);
    CHECK(a.server_dt_capacity[m] >= 1);
    total_capacity += a.server_dt_capacity[m];
  }
  CHECK(total_capacity >= 30);
  for (double g : a.channel_gains) CHECK(g > 0.0);
  for (const auto& p : a.device_positions) {
    CHECK(p.x >= 0.0);
    CHECK(p.x <= tc.area_width_m);
    CHECK(p.y >= 0.0);
    CHECK(p.y <= tc.area_height_m);
  }
}

TEST_CASE("fading component has unit mean") {
  // A reference distance beyond the area diagonal makes the path loss 1, so
  // each gain is a bare fading draw.
  TopologyConfig tc;
  tc.reference_distance_m = 2000.0;
  tc.num_devices = 1000;
  tc.num_bs = 100;
  const Topology t = sample_topology(5, tc);
  double sum = 0.0;
  for (double g : t.channel_gains) sum += g;
  CHECK(sum / static_cast<double>(t.channel_gains.size()) == doctest::Approx(1.0).epsilon(0.02));
}

TEST_CASE("config validation") {
  TopologyConfig tc;
  tc.num_devices = 0;
  CHECK_THROWS_AS(tc.validate(), InvalidParameter);
  WorkloadConfig wc;
  wc.update_bits_max = 2 * wc.history_bits_min;
  CHECK_THROWS_AS(wc.validate(), InvalidParameter);
}

}  // TEST_SUITE
