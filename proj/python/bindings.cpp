#include <pybind11/operators.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <sstream>

#include "dtsync/config.hpp"
#include "dtsync/errors.hpp"
#include "dtsync/experiments.hpp"

namespace py = pybind11;
using namespace dtsync;

namespace {

py::dict estimate_dict(const Estimate& e) {
  py::dict d;
  d["mean"] = e.mean;
  d["std_error"] = e.std_error;
  d["half_width"] = e.half_width;
  return d;
}

py::dict metrics_dict(const Metrics& m) {
  py::dict d;
  d["avg_aoci"] = estimate_dict(m.avg_aoci);
  d["avg_update_cost"] = estimate_dict(m.avg_update_cost);
  d["total_avg_cost"] = estimate_dict(m.total_avg_cost);
  d["update_rate"] = estimate_dict(m.update_rate);
  d["delivery_rate"] = estimate_dict(m.delivery_rate);
  d["runs"] = m.runs;
  d["slots"] = m.slots;
  return d;
}

SchedulingPolicy policy_by_name(const std::string& name) {
  if (name == "zw") return zw_policy();
  if (name == "sac") return sac_policy();
  if (name == "idle") return SchedulingPolicy::idle();
  throw InvalidParameter("unknown policy '" + name + "' (expected zw, sac, idle or a PolicyTable)");
}

ExperimentConfig config_from_text(const std::string& text) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(std::string("malformed configuration: ") + e.what());
  }
  return config_from_json(doc);
}

ExperimentConfig resolve(const std::string& text, const std::vector<std::string>& overrides) {
  return apply_overrides(text.empty() ? ExperimentConfig{} : config_from_text(text), overrides);
}

std::vector<std::string> paths(const Outputs& outputs) {
  std::vector<std::string> out;
  for (const auto& p : outputs) out.push_back(p.string());
  return out;
}

}  // namespace

PYBIND11_MODULE(_dtsync, m) {
  m.doc() = "Digital-twin synchronization scheduling and placement";
  m.attr("__version__") = kVersion;

  py::register_exception<InvalidParameter>(m, "InvalidParameter", PyExc_ValueError);
  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<SolverFailure>(m, "SolverFailure", PyExc_RuntimeError);
  py::register_exception<NonConvergence>(m, "NonConvergence", PyExc_RuntimeError);
  py::register_exception<TrainingFailure>(m, "TrainingFailure", PyExc_RuntimeError);

  py::enum_<Action>(m, "Action").value("IDLE", Action::kIdle).value("UPDATE", Action::kUpdate);

  py::class_<MdpSpec>(m, "MdpSpec")
      .def(py::init([](int aoci_cap, int aoi_cap, double p_tx, double q, double update_cost,
                       double weight) {
             MdpSpec s{aoci_cap, aoi_cap, p_tx, q, update_cost, weight};
             s.validate();
             return s;
           }),
           py::arg("aoci_cap") = 100, py::arg("aoi_cap") = 100, py::arg("p_tx") = 0.8,
           py::arg("q") = 0.3, py::arg("update_cost") = 12.0, py::arg("weight") = 1.0)
      .def_readonly("aoci_cap", &MdpSpec::aoci_cap)
      .def_readonly("aoi_cap", &MdpSpec::aoi_cap)
      .def_readonly("p_tx", &MdpSpec::p_tx)
      .def_readonly("q", &MdpSpec::content_q)
      .def_readonly("update_cost", &MdpSpec::update_cost)
      .def_readonly("weight", &MdpSpec::weight)
      .def_property_readonly("num_states", &MdpSpec::num_states)
      .def("return_prob", &MdpSpec::return_prob, py::arg("aoi"))
      .def("__repr__", [](const MdpSpec& s) {
        std::ostringstream os;
        os << "MdpSpec(aoci_cap=" << s.aoci_cap << ", aoi_cap=" << s.aoi_cap << ", p_tx=" << s.p_tx
           << ", q=" << s.content_q << ", update_cost=" << s.update_cost << ", weight=" << s.weight << ")";
        return os.str();
      });

  py::class_<PolicyTable>(m, "PolicyTable")
      .def_property_readonly("aoci_cap", &PolicyTable::aoci_cap)
      .def_property_readonly("aoi_cap", &PolicyTable::aoi_cap)
      .def("update", [](const PolicyTable& p, int aoci, int aoi) {
             if (aoci < 1 || aoci > p.aoci_cap() || aoi < 1 || aoi > p.aoi_cap())
               throw py::index_error("state outside the policy grid");
             return p.at({aoci, aoi}) == Action::kUpdate;
           },
           py::arg("aoci"), py::arg("aoi"))
      .def("to_rows", [](const PolicyTable& p) {
        std::vector<std::vector<int>> rows(p.aoci_cap(), std::vector<int>(p.aoi_cap()));
        for (int a = 1; a <= p.aoci_cap(); ++a)
          for (int d = 1; d <= p.aoi_cap(); ++d) rows[a - 1][d - 1] = static_cast<int>(p.at({a, d}));
        return rows;
      }, "Actions indexed [aoci - 1][aoi - 1].")
      .def("is_monotone", &is_monotone_in_aoci)
      .def("to_csv", [](const PolicyTable& p) {
        std::ostringstream os;
        write_policy_csv(os, p);
        return os.str();
      })
      .def_static("from_csv", [](const std::string& text) {
        std::istringstream is(text);
        return read_policy_csv(is);
      })
      .def(py::self == py::self);

  m.def("transitions", [](const MdpSpec& spec, int aoci, int aoi, bool update) {
          std::vector<std::tuple<int, int, double>> out;
          for (const auto& t : transitions({aoci, aoi}, update ? Action::kUpdate : Action::kIdle, spec))
            out.emplace_back(t.next.aoci, t.next.aoi, t.prob);
          return out;
        },
        py::arg("spec"), py::arg("aoci"), py::arg("aoi"), py::arg("update"),
        "Successors (aoci, aoi, probability) of a state under an action.");

  m.def("solve", [](const MdpSpec& spec, const std::string& shortcut) {
          RpiOptions opts;
          if (shortcut == "trust") opts.shortcut = ShortcutMode::kTrust;
          else if (shortcut == "verify") opts.shortcut = ShortcutMode::kVerify;
          else if (shortcut == "off") opts.shortcut = ShortcutMode::kOff;
          else throw InvalidParameter("shortcut must be trust, verify or off");
          SolveResult r;
          {
            py::gil_scoped_release release;
            r = relative_policy_iteration(spec, opts);
          }
          py::dict d;
          d["gain"] = r.gain;
          d["iterations"] = r.iterations;
          d["policy"] = r.policy;
          d["bias"] = r.bias;
          d["gain_history"] = r.gain_history;
          return d;
        },
        py::arg("spec"), py::arg("shortcut") = "trust", "Relative policy iteration.");

  m.def("value_iteration", [](const MdpSpec& spec) {
          SolveResult r;
          {
            py::gil_scoped_release release;
            r = relative_value_iteration(spec);
          }
          py::dict d;
          d["gain"] = r.gain;
          d["iterations"] = r.iterations;
          d["policy"] = r.policy;
          return d;
        },
        py::arg("spec"));

  m.def("enumerate_policies", [](const MdpSpec& spec) {
          const auto r = enumerate_policies_oracle(spec);
          return py::make_tuple(r.gain, r.policy);
        },
        py::arg("spec"), "Exhaustive search; returns (gain, policy).");

  m.def("average_cost_of", &average_cost_of, py::arg("policy"), py::arg("spec"));
  m.def("threshold_for", &threshold_for, py::arg("aoi"), py::arg("spec"));
  m.def("uniform_policy", [](const MdpSpec& spec, bool update) {
          return PolicyTable::uniform(spec, update ? Action::kUpdate : Action::kIdle);
        },
        py::arg("spec"), py::arg("update"));

  auto simulate = [](const SchedulingPolicy& policy, double p_tx, double q, double update_cost,
                     double weight, int aoci_cap, int aoi_cap, long horizon, long warmup,
                     std::size_t runs, std::uint64_t seed) {
    SimConfig c;
    c.delivery = DeliveryModel::fixed(p_tx);
    c.content_q = q;
    c.update_cost = update_cost;
    c.weight = weight;
    c.aoci_cap = aoci_cap;
    c.aoi_cap = aoi_cap;
    c.horizon = horizon;
    c.warmup = warmup;
    c.runs = runs;
    c.seed = seed;
    c.validate();
    Metrics metrics;
    {
      py::gil_scoped_release release;
      metrics = run_monte_carlo(policy, c);
    }
    return metrics_dict(metrics);
  };
  const char* sim_doc = "Monte-Carlo metrics of a policy ('zw', 'sac', 'idle' or a PolicyTable).";
  m.def("simulate",
        [simulate](const std::string& name, double p_tx, double q, double update_cost, double weight,
                   int aoci_cap, int aoi_cap, long horizon, long warmup, std::size_t runs,
                   std::uint64_t seed) {
          return simulate(policy_by_name(name), p_tx, q, update_cost, weight, aoci_cap, aoi_cap,
                          horizon, warmup, runs, seed);
        },
        py::arg("policy"), py::arg("p_tx") = 0.8, py::arg("q") = 0.3, py::arg("update_cost") = 12.0,
        py::arg("weight") = 1.0, py::arg("aoci_cap") = 100, py::arg("aoi_cap") = 100,
        py::arg("horizon") = 1000, py::arg("warmup") = 0, py::arg("runs") = 1000, py::arg("seed") = 1,
        sim_doc);
  m.def("simulate",
        [simulate](const PolicyTable& table, double p_tx, double q, double update_cost, double weight,
                   long horizon, long warmup, std::size_t runs, std::uint64_t seed) {
          return simulate(threshold_policy(table), p_tx, q, update_cost, weight, table.aoci_cap(),
                          table.aoi_cap(), horizon, warmup, runs, seed);
        },
        py::arg("policy"), py::arg("p_tx") = 0.8, py::arg("q") = 0.3, py::arg("update_cost") = 12.0,
        py::arg("weight") = 1.0, py::arg("horizon") = 1000, py::arg("warmup") = 0,
        py::arg("runs") = 1000, py::arg("seed") = 1, sim_doc);

  m.def("deployment_baselines", [](std::uint64_t seed, std::size_t devices, std::size_t base_stations,
                                   bool oracle) {
          TopologyConfig tc;
          tc.num_devices = devices;
          tc.num_bs = base_stations;
          tc.validate();
          const Scenario sc = sample_scenario(seed, tc, WorkloadConfig{}, RadioParams{});
          py::dict d;
          d["nearest"] = deployment_objective(nearest_baseline(sc), sc);
          Rng rng = make_rng(seed, 0x7a4d);
          d["random"] = deployment_objective(random_baseline(sc, rng), sc);
          if (oracle) d["oracle"] = deployment_objective(exhaustive_oracle(sc), sc);
          return d;
        },
        py::arg("seed"), py::arg("devices") = 6, py::arg("base_stations") = 4, py::arg("oracle") = false,
        "Average interaction latency (s) of the baselines on a seeded instance.");

  m.def("default_config", [] { return to_json(ExperimentConfig{}).dump(2); },
        "Default configuration as JSON text.");
  m.def("validate_config", [](const std::string& text, const std::vector<std::string>& overrides) {
          const auto c = resolve(text, overrides);
          return config_hash_hex(c);
        },
        py::arg("config") = "", py::arg("overrides") = std::vector<std::string>{},
        "Validates JSON text plus overrides; returns the configuration hash.");

  auto run = [](auto&& command) {
    return [command](const std::string& out_dir, const std::string& text,
                     const std::vector<std::string>& overrides) {
      const auto c = resolve(text, overrides);
      Outputs outputs;
      {
        py::gil_scoped_release release;
        outputs = command(c, out_dir);
      }
      return paths(outputs);
    };
  };
  m.def("cmd_solve", run([](const ExperimentConfig& c, const std::string& d) { return cmd_solve(c, d); }),
        py::arg("out_dir"), py::arg("config") = "", py::arg("overrides") = std::vector<std::string>{});
  m.def("cmd_simulate", run([](const ExperimentConfig& c, const std::string& d) { return cmd_simulate(c, d); }),
        py::arg("out_dir"), py::arg("config") = "", py::arg("overrides") = std::vector<std::string>{});
  m.def("cmd_deploy", run([](const ExperimentConfig& c, const std::string& d) { return cmd_deploy(c, d); }),
        py::arg("out_dir"), py::arg("config") = "", py::arg("overrides") = std::vector<std::string>{});
  m.def("cmd_experiment",
        [](const std::string& figure_id, const std::string& out_dir, const std::string& text,
           const std::vector<std::string>& overrides) {
          const auto c = resolve(text, overrides);
          Outputs outputs;
          {
            py::gil_scoped_release release;
            outputs = cmd_experiment(figure_id, c, out_dir);
          }
          return paths(outputs);
        },
        py::arg("figure_id"), py::arg("out_dir"), py::arg("config") = "",
        py::arg("overrides") = std::vector<std::string>{});
  m.attr("figure_ids") = figure_ids();
}
