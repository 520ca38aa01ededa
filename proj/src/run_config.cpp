#include "spdectl/run_config.hpp"

namespace spdectl {

RunConfig default_run_config(ProblemKind kind) {
  RunConfig c;
  c.problem = kind == ProblemKind::navier_stokes ? make_ns_problem() : make_rd_problem();
  if (kind == ProblemKind::navier_stokes) {
    c.tasks.alpha = 100.0;
    c.tasks.noise_samples = 20;
    c.policy_training.alpha = 100.0;
    c.policy_training.noise_samples = 20;
    c.surrogate.features.derivatives = false;
    c.training.lr = 2e-4;
    c.policy_training.lr = 8e-5;
    c.policy_training.batch_size = 32;
  }
  return c;
}

namespace {

ModelVariant variant_from_json(const Json& j, const std::string& path) {
  ConfigReader r(j, path);
  ModelVariant v;
  v.name = r.text("name", "");
  if (v.name.empty()) throw ConfigError(r.child_path("name"), "variant needs a name");
  v.config = surrogate_config_from_json(r.object("surrogate"), r.child_path("surrogate"));
  v.train = train_config_from_json(r.object("training"), r.child_path("training"));
  r.finish();
  return v;
}

}  // namespace

RunConfig run_config_from_json(const Json& j) {
  ConfigReader r(j, "");
  const Problem problem = problem_from_json(r.object("problem"), "/problem");
  RunConfig c = default_run_config(problem.kind);
  c.problem = problem;
  c.name = r.text("name", c.name);
  if (c.name.empty() || c.name.find('/') != std::string::npos) throw ConfigError("/name", "must be a plain file name");
  c.sampler = sampler_from_json(r.object("sampler"), "/sampler");

  {
    ConfigReader d(r.object("data"), "/data");
    c.data.train_count = d.count("train_count", c.data.train_count);
    c.data.test_count = d.count("test_count", c.data.test_count);
    c.data.seed = d.u64("seed", c.data.seed);
    c.data.with_noise = d.boolean("with_noise", c.data.with_noise);
    d.finish();
    if (c.data.train_count == 0) throw ConfigError("/data/train_count", "must be >= 1");
    if (c.data.test_count == 0) throw ConfigError("/data/test_count", "must be >= 1");
  }

  {
    // overlay on the problem default so 2-D configs keep a capped feature set
    Json merged = to_json(c.surrogate);
    for (const auto& [k, v] : r.object("surrogate").items()) {
      if (k == "features" && v.is_object()) {
        for (const auto& [fk, fv] : v.items()) merged["features"][fk] = fv;
      } else {
        merged[k] = v;
      }
    }
    c.surrogate = surrogate_config_from_json(merged, "/surrogate");
  }
  {
    Json merged = to_json(c.training);
    for (const auto& [k, v] : r.object("training").items()) merged[k] = v;
    c.training = train_config_from_json(merged, "/training");
  }
  c.policy = policy_config_from_json(r.object("policy"), "/policy");
  {
    Json merged = to_json(c.policy_training);
    for (const auto& [k, v] : r.object("policy_training").items()) merged[k] = v;
    c.policy_training = policy_train_config_from_json(merged, "/policy_training");
  }
  c.policy_pool = r.count("policy_pool", c.policy_pool);
  c.open_loop = open_loop_config_from_json(r.object("open_loop"), "/open_loop");
  c.open_loop_lrs = r.numbers("open_loop_lrs", c.open_loop_lrs);
  for (double lr : c.open_loop_lrs) {
    if (!(lr > 0.0)) throw ConfigError("/open_loop_lrs", "step sizes must be positive");
  }
  c.lr_calibration_tasks = r.count("lr_calibration_tasks", c.lr_calibration_tasks);

  {
    ConfigReader t(r.object("tasks"), "/tasks");
    c.tasks.count = t.count("count", c.tasks.count);
    c.tasks.alpha = t.number("alpha", c.tasks.alpha);
    c.tasks.noise_samples = t.count("noise_samples", c.tasks.noise_samples);
    c.tasks.jitter = t.number("jitter", c.tasks.jitter);
    c.tasks.seed = t.u64("seed", c.tasks.seed);
    c.tasks.repeats = t.count("repeats", c.tasks.repeats);
    t.finish();
    if (c.tasks.repeats == 0) throw ConfigError("/tasks/repeats", "must be >= 1");
    if (c.tasks.count == 0) throw ConfigError("/tasks/count", "must be >= 1");
    if (c.tasks.noise_samples == 0) throw ConfigError("/tasks/noise_samples", "must be >= 1");
    if (c.tasks.alpha < 0.0) throw ConfigError("/tasks/alpha", "must be >= 0");
    if (c.tasks.jitter < 0.0) throw ConfigError("/tasks/jitter", "must be >= 0");
  }

  {
    ConfigReader b(r.object("bench"), "/bench");
    if (const Json* models = b.array("models")) {
      for (std::size_t i = 0; i < models->size(); ++i) {
        const Json& m = (*models)[i];
        if (!m.is_string()) throw ConfigError("/bench/models/" + std::to_string(i), "expected a string");
        c.bench_models.push_back(m.get<std::string>());
      }
    }
    b.finish();
  }

  {
    ConfigReader a(r.object("ablation"), "/ablation");
    c.ablation.mode = a.text("mode", c.ablation.mode);
    if (c.ablation.mode != "control" && c.ablation.mode != "model") {
      throw ConfigError("/ablation/mode", "expected \"control\" or \"model\"");
    }
    c.ablation.sigmas = a.numbers("sigmas", c.ablation.sigmas);
    for (double s : c.ablation.sigmas) {
      if (s < 0.0) throw ConfigError("/ablation/sigmas", "noise scales must be >= 0");
    }
    if (const Json* seeds = a.array("seeds")) {
      if (seeds->empty()) throw ConfigError("/ablation/seeds", "needs at least one seed");
      c.ablation.seeds.clear();
      for (std::size_t i = 0; i < seeds->size(); ++i) {
        const Json& e = (*seeds)[i];
        if (!e.is_number_integer() || e.get<long long>() < 0) {
          throw ConfigError("/ablation/seeds/" + std::to_string(i), "expected an unsigned integer");
        }
        c.ablation.seeds.push_back(e.get<std::uint64_t>());
      }
    }
    if (const Json* variants = a.array("variants")) {
      for (std::size_t i = 0; i < variants->size(); ++i) {
        c.ablation.variants.push_back(variant_from_json((*variants)[i], "/ablation/variants/" + std::to_string(i)));
      }
    }
    a.finish();
  }
  r.finish();
  return c;
}
Json to_json(const RunConfig& c) {
  Json variants = Json::array();
  for (const auto& v : c.ablation.variants) {
    variants.push_back(Json{{"name", v.name}, {"surrogate", to_json(v.config)}, {"training", to_json(v.train)}});
  }
  return Json{{"name", c.name},
              {"problem", to_json(c.problem)},
              {"sampler", to_json(c.sampler)},
              {"data",
               {{"train_count", c.data.train_count},
                {"test_count", c.data.test_count},
                {"seed", c.data.seed},
                {"with_noise", c.data.with_noise}}},
              {"surrogate", to_json(c.surrogate)},
              {"training", to_json(c.training)},
              {"policy", to_json(c.policy)},
              {"policy_training", to_json(c.policy_training)},
              {"policy_pool", c.policy_pool},
              {"open_loop", to_json(c.open_loop)},
              {"open_loop_lrs", c.open_loop_lrs},
              {"lr_calibration_tasks", c.lr_calibration_tasks},
              {"tasks",
               {{"count", c.tasks.count},
                {"alpha", c.tasks.alpha},
                {"noise_samples", c.tasks.noise_samples},
                {"jitter", c.tasks.jitter},
                {"seed", c.tasks.seed},
                {"repeats", c.tasks.repeats}}},
              {"bench", {{"models", c.bench_models}}},
              {"ablation",
               {{"mode", c.ablation.mode},
                {"sigmas", c.ablation.sigmas},
                {"seeds", c.ablation.seeds},
                {"variants", variants}}}};
}

}  // namespace spdectl
