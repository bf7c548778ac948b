#include "dtsync/config.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "dtsync/errors.hpp"

namespace dtsync {
namespace {

using json = nlohmann::json;

const char* shortcut_name(ShortcutMode m) {
  switch (m) {
    case ShortcutMode::kTrust: return "trust";
    case ShortcutMode::kVerify: return "verify";
    case ShortcutMode::kOff: return "off";
  }
  return "trust";
}

ShortcutMode parse_shortcut(const std::string& s) {
  if (s == "trust") return ShortcutMode::kTrust;
  if (s == "verify") return ShortcutMode::kVerify;
  if (s == "off") return ShortcutMode::kOff;
  throw ConfigError("mdp.shortcut: expected one of trust, verify, off (got '" + s + "')");
}

const char* dynamics_name(Dynamics d) {
  switch (d) {
    case Dynamics::kStatic: return "static";
    case Dynamics::kFading: return "fading";
    case Dynamics::kMobility: return "mobility";
  }
  return "static";
}

Dynamics parse_dynamics(const std::string& s) {
  if (s == "static") return Dynamics::kStatic;
  if (s == "fading") return Dynamics::kFading;
  if (s == "mobility") return Dynamics::kMobility;
  throw ConfigError("learner.dynamics: expected one of static, fading, mobility (got '" + s + "')");
}

bool same_kind(const json& reference, const json& value) {
  if (reference.is_number()) return value.is_number();
  if (reference.is_array()) return value.is_array();
  return reference.type() == value.type();
}

// Copies `patch` over `base`, refusing anything `base` does not define.
void merge_checked(json& base, const json& patch) {
  if (!patch.is_object()) throw ConfigError("configuration root must be an object");
  for (const auto& [section, body] : patch.items()) {
    if (!base.contains(section)) throw ConfigError("unknown section '" + section + "'");
    if (!body.is_object()) throw ConfigError(section + ": section must be an object");
    json& target = base[section];
    for (const auto& [key, value] : body.items()) {
      const std::string path = section + "." + key;
      if (!target.contains(key)) throw ConfigError("unknown key '" + path + "'");
      if (!same_kind(target[key], value))
        throw ConfigError(path + ": expected " + std::string(target[key].type_name()) + ", got " +
                          std::string(value.type_name()));
      if ((target[key].is_number_integer()) && value.is_number_float()) {
        const double v = value.get<double>();
        if (std::floor(v) != v) throw ConfigError(path + ": expected an integer, got " + value.dump());
      }
      target[key] = value;
    }
  }
}

template <typename T>
T read(const json& doc, const char* section, const char* key) {
  try {
    const json& v = doc.at(section).at(key);
    if constexpr (std::is_integral_v<T> && !std::is_same_v<T, bool>) {
      if (v.is_number_float()) {
        const double d = v.get<double>();
        if (std::floor(d) != d) throw ConfigError(std::string(section) + "." + key + ": expected an integer");
        if constexpr (std::is_unsigned_v<T>) {
          if (d < 0) throw ConfigError(std::string(section) + "." + key + ": must be >= 0");
        }
        return static_cast<T>(d);
      }
      if constexpr (std::is_unsigned_v<T>) {
        if (v.is_number_integer() && v.get<long long>() < 0)
          throw ConfigError(std::string(section) + "." + key + ": must be >= 0");
      }
    }
    return v.get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string(section) + "." + key + ": " + e.what());
  }
}

// Runs a module validator and prefixes its message with the section name.
template <typename F>
void checked(const char* section, F&& f) {
  try {
    f();
  } catch (const InvalidParameter& e) {
    const std::string prefix = std::string(section) + ".";
    const std::string what = e.what();
    throw ConfigError(what.rfind(prefix, 0) == 0 ? what : prefix + what);
  }
}

void require(bool ok, const std::string& message) {
  if (!ok) throw ConfigError(message);
}

}  // namespace

RadioParams RadioConfig::params() const {
  return RadioParams::from_dbm(bandwidth_hz, tx_power_dbm, noise_density_dbm_per_hz);
}

void ExperimentConfig::validate() const {
  require(std::isfinite(radio.bandwidth_hz) && radio.bandwidth_hz > 0, "radio.bandwidth_hz: must be > 0");
  require(std::isfinite(radio.tx_power_dbm), "radio.tx_power_dbm: must be finite");
  require(std::isfinite(radio.noise_density_dbm_per_hz), "radio.noise_density_dbm_per_hz: must be finite");
  checked("radio", [&] { radio.params().validate(); });
  checked("topology", [&] { topology.validate(); });
  checked("latency", [&] { latency.validate(); });
  require(content_q >= 0.0 && content_q <= 1.0, "chain.q: must lie in [0, 1]");
  checked("delivery", [&] { delivery.validate(); });
  require(delivery.mode == DeliveryModel::Mode::kFixed || delivery.mean_snr > 0,
          "delivery.mean_snr: must be > 0");
  require(mdp.aoci_cap >= 1, "mdp.aoci_cap: must be >= 1");
  require(mdp.aoi_cap >= 1, "mdp.aoi_cap: must be >= 1");
  require(mdp.aoci_cap >= mdp.aoi_cap, "mdp.aoci_cap: must be >= mdp.aoi_cap");
  require(std::isfinite(mdp.update_cost) && mdp.update_cost >= 0, "mdp.update_cost: must be >= 0");
  require(std::isfinite(mdp.weight) && mdp.weight >= 0, "mdp.weight: must be >= 0");
  require(mdp.max_iterations >= 1, "mdp.max_iterations: must be >= 1");
  checked("reward", [&] { reward.validate(); });
  checked("learner", [&] { learner.validate(); });
  require(simulation.horizon >= 1, "simulation.horizon: must be >= 1");
  require(simulation.warmup >= 0, "simulation.warmup: must be >= 0");
  require(simulation.runs >= 1, "simulation.runs: must be >= 1");
  require(simulation.slot_ms > 0, "simulation.slot_ms: must be > 0");
  for (double p : sweep.p_tx) require(p >= 0.0 && p <= 1.0, "sweep.p_tx: values must lie in [0, 1]");
  for (double q : sweep.q) require(q >= 0.0 && q <= 1.0, "sweep.q: values must lie in [0, 1]");
  for (double c : sweep.update_cost) require(std::isfinite(c) && c >= 0, "sweep.update_cost: values must be >= 0");
  for (double w : sweep.weight) require(std::isfinite(w) && w >= 0, "sweep.weight: values must be >= 0");
  for (int k : sweep.devices) require(k >= 1, "sweep.devices: values must be >= 1");
  for (int b : sweep.base_stations) require(b >= 1, "sweep.base_stations: values must be >= 1");
  for (const auto& p : sweep.policies)
    require(p == "zw" || p == "sac" || p == "optimal" || p == "threshold",
            "sweep.policies: unknown policy '" + p + "' (expected zw, sac, optimal, threshold)");
  require(sweep.instances >= 1, "sweep.instances: must be >= 1");
}

MdpSpec ExperimentConfig::mdp_spec() const {
  MdpSpec spec;
  spec.aoci_cap = mdp.aoci_cap;
  spec.aoi_cap = mdp.aoi_cap;
  spec.p_tx = delivery.p_tx;
  spec.content_q = content_q;
  spec.update_cost = mdp.update_cost;
  spec.weight = mdp.weight;
  return spec;
}

SimConfig ExperimentConfig::sim_config() const {
  SimConfig c;
  c.content_q = content_q;
  c.delivery = delivery;
  c.update_cost = mdp.update_cost;
  c.weight = mdp.weight;
  c.aoci_cap = mdp.aoci_cap;
  c.aoi_cap = mdp.aoi_cap;
  c.horizon = simulation.horizon;
  c.warmup = simulation.warmup;
  c.runs = simulation.runs;
  c.seed = simulation.seed;
  c.workers = simulation.workers;
  return c;
}

Scenario ExperimentConfig::scenario_instance() const {
  return sample_scenario(seed, topology, latency, radio.params());
}

json to_json(const ExperimentConfig& c) {
  json j;
  j["scenario"] = {{"name", c.scenario}, {"seed", c.seed}};
  j["radio"] = {{"bandwidth_hz", c.radio.bandwidth_hz},
                {"tx_power_dbm", c.radio.tx_power_dbm},
                {"noise_density_dbm_per_hz", c.radio.noise_density_dbm_per_hz}};
  const TopologyConfig& t = c.topology;
  j["topology"] = {{"devices", t.num_devices},
                   {"base_stations", t.num_bs},
                   {"area_width_m", t.area_width_m},
                   {"area_height_m", t.area_height_m},
                   {"server_cycles_min", t.server_cycles_min},
                   {"server_cycles_max", t.server_cycles_max},
                   {"capacity_factor_min", t.capacity_factor_min},
                   {"capacity_factor_max", t.capacity_factor_max},
                   {"path_loss_exponent", t.path_loss_exponent},
                   {"reference_distance_m", t.reference_distance_m}};
  const WorkloadConfig& w = c.latency;
  j["latency"] = {{"history_bits_min", w.history_bits_min}, {"history_bits_max", w.history_bits_max},
                  {"update_bits_min", w.update_bits_min},   {"update_bits_max", w.update_bits_max},
                  {"backhaul_coeff", w.backhaul_coeff},     {"cycles_per_bit", w.cycles_per_bit}};
  j["chain"] = {{"q", c.content_q}};
  j["delivery"] = {
      {"mode", c.delivery.mode == DeliveryModel::Mode::kFixed ? "fixed" : "rayleigh-outage"},
      {"p_tx", c.delivery.p_tx},
      {"snr_threshold", c.delivery.snr_threshold},
      {"mean_snr", c.delivery.mean_snr}};
  j["mdp"] = {{"aoci_cap", c.mdp.aoci_cap},   {"aoi_cap", c.mdp.aoi_cap},
              {"update_cost", c.mdp.update_cost}, {"weight", c.mdp.weight},
              {"max_iterations", c.mdp.max_iterations}, {"shortcut", shortcut_name(c.mdp.shortcut)}};
  j["reward"] = {{"latency_weight", c.reward.latency_weight},
                 {"per_dt_cost", c.reward.per_dt_cost},
                 {"latency_scale", c.reward.latency_scale},
                 {"cost_scale", c.reward.cost_scale}};
  const LearnerConfig& l = c.learner;
  j["learner"] = {{"hidden_width", l.hidden_width},   {"actor_lr", l.actor_lr},
                  {"critic_lr", l.critic_lr},         {"discount", l.discount},
                  {"noise_start", l.noise_start},     {"noise_end", l.noise_end},
                  {"iterations", l.iterations},       {"episode_length", l.episode_length},
                  {"batch", l.batch},                 {"eval_rollouts", l.eval_rollouts},
                  {"entropy_weight", l.entropy_weight}, {"grad_clip", l.grad_clip},
                  {"seed", l.seed},                   {"dynamics", dynamics_name(c.dynamics)}};
  j["simulation"] = {{"horizon", c.simulation.horizon}, {"warmup", c.simulation.warmup},
                     {"runs", c.simulation.runs},       {"seed", c.simulation.seed},
                     {"slot_ms", c.simulation.slot_ms}, {"workers", c.simulation.workers}};
  j["sweep"] = {{"p_tx", c.sweep.p_tx},
                {"q", c.sweep.q},
                {"update_cost", c.sweep.update_cost},
                {"weight", c.sweep.weight},
                {"devices", c.sweep.devices},
                {"base_stations", c.sweep.base_stations},
                {"policies", c.sweep.policies},
                {"instances", c.sweep.instances}};
  return j;
}

ExperimentConfig config_from_json(const json& doc) {
  json merged = to_json(ExperimentConfig{});
  merge_checked(merged, doc);

  ExperimentConfig c;
  c.scenario = read<std::string>(merged, "scenario", "name");
  c.seed = read<std::uint64_t>(merged, "scenario", "seed");
  c.radio.bandwidth_hz = read<double>(merged, "radio", "bandwidth_hz");
  c.radio.tx_power_dbm = read<double>(merged, "radio", "tx_power_dbm");
  c.radio.noise_density_dbm_per_hz = read<double>(merged, "radio", "noise_density_dbm_per_hz");

  const int devices = read<int>(merged, "topology", "devices");
  const int bss = read<int>(merged, "topology", "base_stations");
  require(devices >= 1, "topology.devices: must be >= 1");
  require(bss >= 1, "topology.base_stations: must be >= 1");
  c.topology.num_devices = static_cast<std::size_t>(devices);
  c.topology.num_bs = static_cast<std::size_t>(bss);
  c.topology.area_width_m = read<double>(merged, "topology", "area_width_m");
  c.topology.area_height_m = read<double>(merged, "topology", "area_height_m");
  c.topology.server_cycles_min = read<double>(merged, "topology", "server_cycles_min");
  c.topology.server_cycles_max = read<double>(merged, "topology", "server_cycles_max");
  c.topology.capacity_factor_min = read<double>(merged, "topology", "capacity_factor_min");
  c.topology.capacity_factor_max = read<double>(merged, "topology", "capacity_factor_max");
  c.topology.path_loss_exponent = read<double>(merged, "topology", "path_loss_exponent");
  c.topology.reference_distance_m = read<double>(merged, "topology", "reference_distance_m");

  c.latency.history_bits_min = read<double>(merged, "latency", "history_bits_min");
  c.latency.history_bits_max = read<double>(merged, "latency", "history_bits_max");
  c.latency.update_bits_min = read<double>(merged, "latency", "update_bits_min");
  c.latency.update_bits_max = read<double>(merged, "latency", "update_bits_max");
  c.latency.backhaul_coeff = read<double>(merged, "latency", "backhaul_coeff");
  c.latency.cycles_per_bit = read<double>(merged, "latency", "cycles_per_bit");

  c.content_q = read<double>(merged, "chain", "q");

  const auto mode = read<std::string>(merged, "delivery", "mode");
  const double p_tx = read<double>(merged, "delivery", "p_tx");
  const double thr = read<double>(merged, "delivery", "snr_threshold");
  const double mean = read<double>(merged, "delivery", "mean_snr");
  if (mode == "fixed") {
    c.delivery = DeliveryModel{};
    c.delivery.p_tx = p_tx;
    c.delivery.snr_threshold = thr;
    c.delivery.mean_snr = mean;
  } else if (mode == "rayleigh-outage") {
    require(mean > 0, "delivery.mean_snr: must be > 0");
    require(thr >= 0, "delivery.snr_threshold: must be >= 0");
    checked("delivery", [&] { c.delivery = DeliveryModel::rayleigh_outage(thr, mean); });
  } else {
    throw ConfigError("delivery.mode: expected fixed or rayleigh-outage (got '" + mode + "')");
  }

  c.mdp.aoci_cap = read<int>(merged, "mdp", "aoci_cap");
  c.mdp.aoi_cap = read<int>(merged, "mdp", "aoi_cap");
  c.mdp.update_cost = read<double>(merged, "mdp", "update_cost");
  c.mdp.weight = read<double>(merged, "mdp", "weight");
  c.mdp.max_iterations = read<std::size_t>(merged, "mdp", "max_iterations");
  c.mdp.shortcut = parse_shortcut(read<std::string>(merged, "mdp", "shortcut"));

  c.reward.latency_weight = read<double>(merged, "reward", "latency_weight");
  c.reward.per_dt_cost = read<double>(merged, "reward", "per_dt_cost");
  c.reward.latency_scale = read<double>(merged, "reward", "latency_scale");
  c.reward.cost_scale = read<double>(merged, "reward", "cost_scale");

  LearnerConfig& l = c.learner;
  l.hidden_width = read<int>(merged, "learner", "hidden_width");
  l.actor_lr = read<double>(merged, "learner", "actor_lr");
  l.critic_lr = read<double>(merged, "learner", "critic_lr");
  l.discount = read<double>(merged, "learner", "discount");
  l.noise_start = read<double>(merged, "learner", "noise_start");
  l.noise_end = read<double>(merged, "learner", "noise_end");
  l.iterations = read<std::size_t>(merged, "learner", "iterations");
  l.episode_length = read<std::size_t>(merged, "learner", "episode_length");
  l.batch = read<std::size_t>(merged, "learner", "batch");
  l.eval_rollouts = read<std::size_t>(merged, "learner", "eval_rollouts");
  l.entropy_weight = read<double>(merged, "learner", "entropy_weight");
  l.grad_clip = read<double>(merged, "learner", "grad_clip");
  l.seed = read<std::uint64_t>(merged, "learner", "seed");
  c.dynamics = parse_dynamics(read<std::string>(merged, "learner", "dynamics"));

  c.simulation.horizon = read<long>(merged, "simulation", "horizon");
  c.simulation.warmup = read<long>(merged, "simulation", "warmup");
  c.simulation.runs = read<std::size_t>(merged, "simulation", "runs");
  c.simulation.seed = read<std::uint64_t>(merged, "simulation", "seed");
  c.simulation.slot_ms = read<double>(merged, "simulation", "slot_ms");
  c.simulation.workers = read<unsigned>(merged, "simulation", "workers");

  c.sweep.p_tx = read<std::vector<double>>(merged, "sweep", "p_tx");
  c.sweep.q = read<std::vector<double>>(merged, "sweep", "q");
  c.sweep.update_cost = read<std::vector<double>>(merged, "sweep", "update_cost");
  c.sweep.weight = read<std::vector<double>>(merged, "sweep", "weight");
  c.sweep.devices = read<std::vector<int>>(merged, "sweep", "devices");
  c.sweep.base_stations = read<std::vector<int>>(merged, "sweep", "base_stations");
  c.sweep.policies = read<std::vector<std::string>>(merged, "sweep", "policies");
  c.sweep.instances = read<std::size_t>(merged, "sweep", "instances");

  c.validate();
  return c;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open configuration file '" + path + "'");
  json doc;
  try {
    doc = json::parse(in, nullptr, true, true);
  } catch (const json::parse_error& e) {
    throw ConfigError("malformed configuration file '" + path + "': " + e.what());
  }
  return config_from_json(doc);
}

ExperimentConfig apply_overrides(const ExperimentConfig& base, const std::vector<std::string>& assignments) {
  if (assignments.empty()) return base;
  json doc = to_json(base);
  json patch = json::object();
  for (const auto& a : assignments) {
    const auto eq = a.find('=');
    const auto dot = a.find('.');
    if (eq == std::string::npos || dot == std::string::npos || dot > eq)
      throw ConfigError("override '" + a + "' must look like section.key=value");
    const std::string section = a.substr(0, dot);
    const std::string key = a.substr(dot + 1, eq - dot - 1);
    const std::string text = a.substr(eq + 1);
    json value;
    try {
      value = json::parse(text);
    } catch (const json::parse_error&) {
      value = text;
    }
    patch[section][key] = value;
  }
  merge_checked(doc, patch);
  return config_from_json(doc);
}

std::uint64_t config_hash(const ExperimentConfig& config) {
  const std::string text = to_json(config).dump();
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : text) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string config_hash_hex(const ExperimentConfig& config) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(config_hash(config)));
  return buf;
}

}  // namespace dtsync
