// Python bindings: configs cross the boundary as JSON text, fields as numpy arrays.

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <sstream>

#include "spdectl/bench.hpp"
#include "spdectl/config.hpp"
#include "spdectl/parallel.hpp"
#include "spdectl/pipeline.hpp"

namespace py = pybind11;
using namespace spdectl;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

Array to_array(const std::vector<double>& v, std::vector<py::ssize_t> shape) {
  Array out(shape);
  std::copy(v.begin(), v.end(), out.mutable_data());
  return out;
}

std::vector<double> to_vector(const Array& a) { return {a.data(), a.data() + a.size()}; }

std::vector<double> checked(const Array& a, std::size_t expected, const char* what) {
  if (static_cast<std::size_t>(a.size()) != expected) {
    throw std::invalid_argument(std::string(what) + ": expected " + std::to_string(expected) + " values, got " +
                                std::to_string(a.size()));
  }
  return to_vector(a);
}

RunConfig parse_config(const std::string& text) { return run_config_from_json(Json::parse(text)); }

std::vector<py::ssize_t> field_shape(const Grid& g) {
  if (g.dim == 1) return {static_cast<py::ssize_t>(g.n)};
  return {static_cast<py::ssize_t>(g.n), static_cast<py::ssize_t>(g.n)};
}

std::vector<py::ssize_t> with_lead(std::vector<py::ssize_t> lead, const Grid& g) {
  for (auto d : field_shape(g)) lead.push_back(d);
  return lead;
}

py::dict dataset_dict(const Dataset& d) {
  const Grid& g = d.problem.grid;
  const std::size_t f = g.field_size(), n = d.size();
  std::vector<double> states, forcing;
  states.reserve(n * g.frames * f);
  forcing.reserve(n * (g.frames - 1) * f);
  for (const auto& t : d.trajectories) {
    states.insert(states.end(), t.states.begin(), t.states.end());
    forcing.insert(forcing.end(), t.forcing.begin(), t.forcing.end());
  }
  py::dict out;
  out["states"] = to_array(states, with_lead({static_cast<py::ssize_t>(n), static_cast<py::ssize_t>(g.frames)}, g));
  out["forcing"] =
      to_array(forcing, with_lead({static_cast<py::ssize_t>(n), static_cast<py::ssize_t>(g.frames - 1)}, g));
  out["config_hash"] = d.config_hash;
  out["split"] = d.split;
  out["problem"] = to_json(d.problem).dump();
  return out;
}

py::dict metrics_dict(const TrackingMetrics& m) {
  py::dict out;
  out["e"] = m.total;
  out["e_track"] = m.track;
  out["e_energy"] = m.energy;
  return out;
}

py::dict loop_dict(const ControlLoopResult& r, const Grid& g) {
  py::dict out = metrics_dict(r.metrics);
  out["states"] = to_array(r.states, with_lead({static_cast<py::ssize_t>(g.frames)}, g));
  out["forcing"] = to_array(r.forcing, with_lead({static_cast<py::ssize_t>(g.frames - 1)}, g));
  out["inference_seconds"] = r.inference_seconds;
  return out;
}

TrackingTask make_task(const Grid& g, const Array& u0, const Array& target, double alpha, std::uint64_t seed) {
  TrackingTask t;
  t.u0 = checked(u0, g.field_size(), "u0");
  t.target = checked(target, g.field_size(), "target");
  t.alpha = alpha;
  t.seed = seed;
  return t;
}

void run_stage(const std::string& stage, const std::string& config, const std::string& out) {
  using Fn = void (*)(const RunConfig&, const RunPaths&, std::ostream&);
  static const std::map<std::string, Fn> stages{{"generate", run_generate},
                                                {"train-surrogate", run_train_surrogate},
                                                {"train-policy", run_train_policy},
                                                {"control", run_control},
                                                {"bench", run_bench},
                                                {"ablate", run_ablate}};
  const auto it = stages.find(stage);
  if (it == stages.end()) throw std::invalid_argument("unknown stage '" + stage + "'");
  const RunConfig cfg = parse_config(config);
  py::gil_scoped_release release;
  std::ostringstream log;
  it->second(cfg, RunPaths{out}, log);
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "SPDE simulation, regularity features, surrogates and control";

  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<SolverError>(m, "SolverError", PyExc_RuntimeError);
  py::register_exception<RunError>(m, "RunError", PyExc_RuntimeError);

  m.def("set_threads", &set_default_threads, py::arg("threads"));

  m.def(
      "normalize_config", [](const std::string& text) { return to_json(parse_config(text)).dump(); },
      py::arg("config"), "Validates a run config (JSON text) and returns it with every default filled in.");

  m.def(
      "simulate",
      [](const std::string& config, const Array& u0, const Array& forcing, std::uint64_t seed) {
        const Problem p = parse_config(config).problem;
        const Grid& g = p.grid;
        const auto u = checked(u0, g.field_size(), "u0");
        const auto f = checked(forcing, (g.frames - 1) * g.field_size(), "forcing");
        Trajectory t;
        {
          py::gil_scoped_release release;
          t = simulate(p, u, f, seed);
        }
        return to_array(t.states, with_lead({static_cast<py::ssize_t>(g.frames)}, g));
      },
      py::arg("config"), py::arg("u0"), py::arg("forcing"), py::arg("seed"),
      "Reference solver run; returns states [frames, *field].");

  m.def(
      "generate",
      [](const std::string& config, std::size_t count, std::uint64_t seed, const std::string& split) {
        const RunConfig c = parse_config(config);
        Dataset d;
        {
          py::gil_scoped_release release;
          d = generate_dataset(c.problem, count, seed, c.sampler, split);
        }
        return dataset_dict(d);
      },
      py::arg("config"), py::arg("count"), py::arg("seed"), py::arg("split") = "train");

  m.def(
      "load_dataset", [](const std::string& path) { return dataset_dict(load_dataset(path)); }, py::arg("path"));

  m.def(
      "features",
      [](const std::string& config, const Array& u0, const Array& forcing, const Array& noise) {
        const RunConfig c = parse_config(config);
        const Grid& g = c.problem.grid;
        const std::size_t f = g.field_size(), steps = g.fine_steps;
        const FeatureBlock block(c.surrogate.features, g, grid_operator(g, c.problem.nu), g.fine_dt());
        const Tensor noise_t = c.surrogate.features.forcing == ForcingMode::split
                                   ? Tensor({1, steps, f}, checked(noise, steps * f, "noise"))
                                   : Tensor();
        const Tensor out = block.evaluate(Tensor({1, f}, checked(u0, f, "u0")),
                                          Tensor({1, steps, f}, checked(forcing, steps * f, "forcing")), noise_t,
                                          steps);
        std::vector<std::string> names;
        for (const auto& term : block.terms()) names.push_back(term.key);
        const std::vector<double> values(out.values().begin(), out.values().end());
        return py::make_tuple(
            names,
            to_array(values, with_lead({static_cast<py::ssize_t>(block.size()), static_cast<py::ssize_t>(steps + 1)}, g)));
      },
      py::arg("config"), py::arg("u0"), py::arg("forcing"), py::arg("noise"),
      "Feature block on the fine grid. forcing and noise are [fine_steps, *field]; returns (names, "
      "values [features, fine_steps + 1, *field]).");

  py::class_<SurrogateModel>(m, "Surrogate")
      .def_static("load", &load_model, py::arg("path"))
      .def_property_readonly("problem", [](const SurrogateModel& s) { return to_json(s.problem()).dump(); })
      .def_property_readonly("config", [](const SurrogateModel& s) { return to_json(s.config()).dump(); })
      .def(
          "rollout",
          [](const SurrogateModel& s, const Array& u0, const Array& forcing, const Array& noise) {
            const Grid& g = s.grid();
            const std::size_t f = g.field_size(), k = g.frames - 1;
            const Tensor out = s.rollout(Tensor({1, f}, checked(u0, f, "u0")),
                                         Tensor({1, k, f}, checked(forcing, k * f, "forcing")),
                                         Tensor({1, g.fine_steps, f}, checked(noise, g.fine_steps * f, "noise")));
            const std::vector<double> values(out.values().begin(), out.values().end());
            return to_array(values, with_lead({static_cast<py::ssize_t>(g.frames)}, g));
          },
          py::arg("u0"), py::arg("forcing"), py::arg("noise"),
          "Autoregressive prediction; forcing [frames-1, *field], noise [fine_steps, *field].")
      .def(
          "evaluate",
          [](const SurrogateModel& s, const std::string& dataset) {
            const ErrorReport r = evaluate_model(s, load_dataset(dataset));
            py::dict out;
            out["f_recon"] = r.f_recon;
            out["u0_recon"] = r.u0_recon;
            out["u1"] = r.u1;
            out["prediction"] = r.prediction;
            return out;
          },
          py::arg("dataset"));

  py::class_<PolicyNet>(m, "Policy")
      .def_static("load", &load_policy, py::arg("path"))
      .def(
          "act",
          [](const PolicyNet& p, const Array& u, const Array& target, double t) {
            const Grid& g = p.problem().grid;
            const std::size_t f = g.field_size();
            const Tensor a = p.act(Tensor({1, f}, checked(u, f, "u")), Tensor({1, f}, checked(target, f, "target")), t);
            return to_array({a.values().begin(), a.values().end()}, field_shape(g));
          },
          py::arg("u"), py::arg("target"), py::arg("t"))
      .def(
          "_closed_loop",
          [](const PolicyNet& p, const std::string& environment, const Array& u0, const Array& target, double alpha,
             std::uint64_t seed) {
            const Problem env = parse_config(environment).problem;
            const TrackingTask task = make_task(env.grid, u0, target, alpha, seed);
            ControlLoopResult r;
            {
              py::gil_scoped_release release;
              r = run_closed_loop(p, env, task);
            }
            return loop_dict(r, env.grid);
          },
          py::arg("environment"), py::arg("u0"), py::arg("target"), py::arg("alpha"), py::arg("seed"),
          "Runs the policy against the reference solver of `environment` (a run config).");

  m.def(
      "open_loop",
      [](const std::string& environment, const Array& u0, const Array& target, const Array& forcing, double alpha,
         std::uint64_t seed) {
        const Problem env = parse_config(environment).problem;
        const Grid& g = env.grid;
        const TrackingTask task = make_task(g, u0, target, alpha, seed);
        const auto r = run_open_loop(env, task, checked(forcing, (g.frames - 1) * g.field_size(), "forcing"));
        return loop_dict(r, g);
      },
      py::arg("environment"), py::arg("u0"), py::arg("target"), py::arg("forcing"), py::arg("alpha"),
      py::arg("seed"));

  m.def("run_stage", &run_stage, py::arg("stage"), py::arg("config"), py::arg("out"),
        "Runs one CLI stage (generate, train-surrogate, ...) in run directory `out`.");
}
