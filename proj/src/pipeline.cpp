#include "spdectl/pipeline.hpp"

#include <cstdio>
#include <fstream>
#include <memory>
#include <ostream>
#include <sstream>

#include "spdectl/parallel.hpp"
#include "spdectl/rng.hpp"

namespace spdectl {

namespace fs = std::filesystem;

namespace {

std::string hex(std::uint64_t v) {
  char buf[24];
  std::snprintf(buf, sizeof buf, "0x%016llx", static_cast<unsigned long long>(v));
  return buf;
}

std::ofstream open_out(const fs::path& path) {
  fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw RunError("cannot write " + path.string());
  return out;
}

Dataset load_split(const RunConfig& cfg, const fs::path& path, std::uint64_t seed) {
  if (!fs::exists(path)) throw RunError(path.string() + " not found; run `spdectl generate` first");
  Dataset data = load_dataset(path.string());
  const std::uint64_t expect = config_hash(cfg.problem, cfg.sampler, seed, data.size());
  if (data.config_hash != expect) {
    throw RunError(path.string() + " was generated from a different config (hash " + hex(data.config_hash) +
                   ", expected " + hex(expect) + "); rerun `spdectl generate`");
  }
  return data;
}

Dataset load_train(const RunConfig& cfg, const RunPaths& paths) {
  return load_split(cfg, paths.train(), cfg.data.seed);
}
Dataset load_test(const RunConfig& cfg, const RunPaths& paths) {
  return load_split(cfg, paths.test(), test_split_seed(cfg.data.seed));
}

std::unique_ptr<SurrogateModel> require_model(const RunPaths& paths, const std::string& name) {
  const fs::path path = paths.model(name);
  if (!fs::exists(path)) throw RunError(path.string() + " not found; run `spdectl train-surrogate` first");
  return load_model(path.string());
}

/// Tasks for planning and policy training come from the training split; the
/// evaluation tasks come from the test split.
std::vector<TrackingTask> pool_tasks(const RunConfig& cfg, const Dataset& train, std::size_t count) {
  TaskConfig tc = cfg.tasks;
  tc.count = count;
  tc.repeats = 1;
  tc.seed = derive_seed(cfg.tasks.seed, 0x9001);
  return make_tasks(train, tc);
}

double calibrate_open_loop(const RunConfig& cfg, const SurrogateModel& model, const Dataset& train,
                           std::ostream& log) {
  if (cfg.open_loop_lrs.size() <= 1 || cfg.lr_calibration_tasks == 0) {
    return cfg.open_loop_lrs.empty() ? cfg.open_loop.lr : cfg.open_loop_lrs.front();
  }
  const auto tasks = pool_tasks(cfg, train, cfg.lr_calibration_tasks);
  const double lr = select_open_loop_lr(model, tasks, cfg.open_loop_lrs, cfg.open_loop);
  log << "open-loop step size " << lr << " (chosen on " << tasks.size() << " training tasks)\n";
  return lr;
}

struct LoadedMethods {
  std::vector<std::unique_ptr<SurrogateModel>> models;
  std::vector<std::unique_ptr<PolicyNet>> policies;
  std::vector<ControlMethod> methods;
};

/// Loads every checkpoint the config names. Missing files are reported through
/// `missing`; methods are only built for what exists.
LoadedMethods load_methods(const RunConfig& cfg, const RunPaths& paths, const Dataset& train,
                           std::vector<std::string>& missing, std::ostream& log) {
  LoadedMethods out;
  const std::vector<std::string> names = cfg.bench_models.empty() ? std::vector<std::string>{cfg.name} : cfg.bench_models;
  for (const auto& name : names) {
    const fs::path mpath = paths.model(name), ppath = paths.policy(name);
    if (fs::exists(mpath)) {
      out.models.push_back(load_model(mpath.string()));
      OpenLoopConfig ol = cfg.open_loop;
      ol.lr = calibrate_open_loop(cfg, *out.models.back(), train, log);
      out.methods.push_back({name + "/open_loop", MethodKind::open_loop, out.models.back().get(), nullptr, ol});
    } else {
      missing.push_back(mpath.string());
    }
    if (fs::exists(ppath)) {
      out.policies.push_back(load_policy(ppath.string()));
      out.methods.push_back({name + "/policy", MethodKind::policy, nullptr, out.policies.back().get(), {}});
    } else {
      missing.push_back(ppath.string());
    }
  }
  return out;
}

std::string join(const std::vector<std::string>& items, const std::string& sep) {
  std::string s;
  for (std::size_t i = 0; i < items.size(); ++i) s += (i ? sep : "") + items[i];
  return s;
}

}  // namespace

void apply_seed(RunConfig& cfg, std::uint64_t seed) {
  cfg.data.seed = seed;
  cfg.surrogate.seed = seed;
  cfg.training.seed = seed;
  cfg.policy.seed = seed;
  cfg.policy_training.seed = seed;
  cfg.open_loop.seed = seed;
  cfg.tasks.seed = seed;
}

std::uint64_t test_split_seed(std::uint64_t data_seed) { return derive_seed(data_seed, 0x7E57); }

void run_generate(const RunConfig& cfg, const RunPaths& paths, std::ostream& log) {
  fs::create_directories(paths.root);
  const struct {
    const char* split;
    std::size_t count;
    std::uint64_t seed;
    fs::path path;
  } splits[] = {{"train", cfg.data.train_count, cfg.data.seed, paths.train()},
                {"test", cfg.data.test_count, test_split_seed(cfg.data.seed), paths.test()}};
  for (const auto& s : splits) {
    const Dataset data = generate_dataset(cfg.problem, s.count, s.seed, cfg.sampler, s.split);
    save_dataset(s.path.string(), data, cfg.data.with_noise);
    log << s.path.string() << ": " << data.size() << " trajectories, config hash " << hex(data.config_hash) << "\n";
  }
  open_out(paths.root / "config.json") << to_json(cfg).dump(2) << "\n";
}

void run_train_surrogate(const RunConfig& cfg, const RunPaths& paths, std::ostream& log) {
  const Dataset train = load_train(cfg, paths), test = load_test(cfg, paths);
  SurrogateModel model(cfg.problem, cfg.surrogate);
  log << "training " << cfg.name << " (" << (cfg.surrogate.use_features ? "RF-" : "")
      << to_string(cfg.surrogate.backbone) << ", " << model.params().count() << " parameters) on " << train.size()
      << " trajectories\n";
  const TrainResult result = train_surrogate(model, train, cfg.training);
  const ErrorReport err = evaluate_model(model, test);

  const fs::path ckpt = paths.model(cfg.name);
  fs::create_directories(ckpt.parent_path());
  save_model(ckpt.string(), model);
  write_loss_csv((paths.root / "models" / (cfg.name + "_loss.csv")).string(), result.curve);
  const Json report{{"name", cfg.name},
                    {"f_recon", err.f_recon},
                    {"u0_recon", err.u0_recon},
                    {"u1", err.u1},
                    {"prediction", err.prediction},
                    {"sum", err.sum()},
                    {"final_loss", result.curve.empty() ? 0.0 : result.curve.back().loss},
                    {"augmented", result.augmented},
                    {"train_seconds", result.seconds}};
  open_out(paths.root / "models" / (cfg.name + "_eval.json")) << report.dump(2) << "\n";
  log << ckpt.string() << ": test prediction error " << err.prediction << " (" << result.seconds << " s)\n";
}

void run_train_policy(const RunConfig& cfg, const RunPaths& paths, std::ostream& log) {
  const Dataset train = load_train(cfg, paths);
  const auto model = require_model(paths, cfg.name);
  const auto tasks = pool_tasks(cfg, train, cfg.policy_pool ? cfg.policy_pool : train.size());
  PolicyNet policy(model->problem(), cfg.policy);
  policy.fit_input_scale(tasks);
  log << "training policy for " << cfg.name << " on " << tasks.size() << " tasks\n";
  const PolicyTrainResult result = train_policy(policy, *model, tasks, cfg.policy_training);

  const fs::path ckpt = paths.policy(cfg.name);
  fs::create_directories(ckpt.parent_path());
  save_policy(ckpt.string(), policy);
  write_loss_csv((paths.root / "policies" / (cfg.name + "_loss.csv")).string(), result.curve);
  log << ckpt.string() << ": final objective " << (result.curve.empty() ? 0.0 : result.curve.back().loss) << " ("
      << result.seconds << " s)\n";
}

void run_control(const RunConfig& cfg, const RunPaths& paths, std::ostream& log) {
  const Dataset test = load_test(cfg, paths);
  const fs::path ppath = paths.policy(cfg.name);
  if (!fs::exists(ppath)) throw RunError(ppath.string() + " not found; run `spdectl train-policy` first");
  const auto policy = load_policy(ppath.string());
  const auto tasks = make_tasks(test, cfg.tasks);

  std::vector<std::string> logs(tasks.size());
  std::vector<ControlLoopResult> results(tasks.size());
  parallel_for(tasks.size(), [&](std::size_t i) {
    std::ostringstream buf;
    results[i] = run_closed_loop(*policy, cfg.problem, tasks[i], &buf);
    logs[i] = buf.str();
  });

  std::ofstream events = open_out(paths.root / "control" / (cfg.name + ".jsonl"));
  std::ofstream metrics = open_out(paths.root / "control" / (cfg.name + "_metrics.csv"));
  metrics << "task,e,e_track,e_energy,inference_seconds\n";
  metrics.precision(17);
  TrackingMetrics mean;
  for (std::size_t i = 0; i < tasks.size(); ++i) {
    std::istringstream lines(logs[i]);
    for (std::string line; std::getline(lines, line);) {
      Json event = Json::parse(line);
      Json tagged{{"task", i}};
      for (auto& [k, v] : event.items()) tagged[k] = v;
      events << tagged.dump() << "\n";
    }
    const auto& m = results[i].metrics;
    metrics << i << "," << m.total << "," << m.track << "," << m.energy << "," << results[i].inference_seconds << "\n";
    mean.track += m.track / static_cast<double>(tasks.size());
    mean.energy += m.energy / static_cast<double>(tasks.size());
  }
  mean.total = mean.track + mean.energy;
  log << "closed loop on " << tasks.size() << " tasks: e " << mean.total << " (track " << mean.track << ", energy "
      << mean.energy << ")\n";
}

void run_bench(const RunConfig& cfg, const RunPaths& paths, std::ostream& log) {
  std::vector<std::string> missing;
  // check checkpoints before touching the datasets, so an empty run directory
  // reports what is missing rather than the first absent file
  const std::vector<std::string> names = cfg.bench_models.empty() ? std::vector<std::string>{cfg.name} : cfg.bench_models;
  bool any = false;
  for (const auto& name : names) any = any || fs::exists(paths.model(name)) || fs::exists(paths.policy(name));
  if (!any) {
    for (const auto& name : names) {
      missing.push_back(paths.model(name).string());
      missing.push_back(paths.policy(name).string());
    }
    throw RunError("no checkpoints to benchmark; missing: " + join(missing, ", "));
  }

  const Dataset train = load_train(cfg, paths), test = load_test(cfg, paths);
  LoadedMethods loaded = load_methods(cfg, paths, train, missing, log);
  for (const auto& m : missing) log << "warning: skipping missing checkpoint " << m << "\n";
  loaded.methods.insert(loaded.methods.begin(), ControlMethod{"zero", MethodKind::zero, nullptr, nullptr, {}});

  const auto tasks = make_tasks(test, cfg.tasks);
  log << "benchmarking " << loaded.methods.size() << " methods on " << tasks.size() << " tasks\n";
  const auto results = run_benchmark(cfg.problem, tasks, loaded.methods);
  const std::string table = format_benchmark_table(results);
  open_out(paths.root / "table.txt") << table;
  std::ofstream csv = open_out(paths.root / "bench.csv");
  write_benchmark_csv(csv, results);
  std::ofstream timing = open_out(paths.root / "timing.csv");
  write_timing_csv(timing, results);
  log << table;
}

void run_ablate(const RunConfig& cfg, const RunPaths& paths, std::ostream& log) {
  std::vector<AblationRow> rows;
  if (cfg.ablation.mode == "control") {
    const Dataset train = load_train(cfg, paths), test = load_test(cfg, paths);
    std::vector<std::string> missing;
    LoadedMethods loaded = load_methods(cfg, paths, train, missing, log);
    if (loaded.methods.empty()) throw RunError("no checkpoints for the control ablation; missing: " + join(missing, ", "));
    for (const auto& m : missing) log << "warning: skipping missing checkpoint " << m << "\n";
    const std::vector<double> sigmas = cfg.ablation.sigmas.empty() ? std::vector<double>{0.05, 1.0} : cfg.ablation.sigmas;
    rows = run_control_ablation(cfg.problem, make_tasks(test, cfg.tasks), loaded.methods, sigmas);
  } else {
    ModelAblationConfig mc;
    mc.problem = cfg.problem;
    mc.sampler = cfg.sampler;
    if (!cfg.ablation.sigmas.empty()) mc.sigmas = cfg.ablation.sigmas;
    mc.train_count = cfg.data.train_count;
    mc.test_count = cfg.data.test_count;
    mc.data_seed = cfg.data.seed;
    mc.seeds = cfg.ablation.seeds;
    std::vector<ModelVariant> variants = cfg.ablation.variants;
    if (variants.empty()) {
      const std::string backbone = to_string(cfg.surrogate.backbone);
      SurrogateConfig plain = cfg.surrogate, rf = cfg.surrogate;
      plain.use_features = false;
      rf.use_features = true;
      variants = {{backbone, plain, cfg.training}, {"rf-" + backbone, rf, cfg.training}};
    }
    log << "model ablation: " << variants.size() << " variants x " << mc.sigmas.size() << " noise scales x "
        << mc.seeds.size() << " seeds\n";
    rows = run_model_ablation(mc, variants);
    std::ofstream slopes = open_out(paths.root / "ablation_model_slopes.csv");
    slopes << "method,slope\n";
    slopes.precision(17);
    for (const auto& v : variants) {
      const double slope = median_error_slope(rows, v.name);
      slopes << v.name << "," << slope << "\n";
      log << v.name << ": median error slope over sigma " << slope << "\n";
    }
  }
  std::ofstream csv = open_out(paths.root / ("ablation_" + cfg.ablation.mode + ".csv"));
  write_ablation_csv(csv, rows);
  for (const auto& r : rows) {
    log << "sigma " << r.sigma << "  " << r.method << "  seed " << r.seed << "  error " << r.error << "\n";
  }
}

}  // namespace spdectl
