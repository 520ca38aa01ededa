#include "spdectl/bench.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <iomanip>
#include <map>
#include <ostream>
#include <sstream>

#include "spdectl/binary_io.hpp"
#include "spdectl/config.hpp"
#include "spdectl/hash.hpp"
#include "spdectl/parallel.hpp"

namespace spdectl {

// ---------------------------------------------------------------------------
// SPDD container

std::vector<std::uint8_t> encode_dataset(const Dataset& data, bool with_noise) {
  const Grid& g = data.problem.grid;
  const std::size_t f = g.field_size(), k = g.frames;
  ByteWriter w;
  w.raw("SPDD", 4);
  w.u32(DatasetFileInfo::version);
  w.u64(data.config_hash);
  const Json meta{{"problem", to_json(data.problem)},
                  {"sampler", to_json(data.sampler)},
                  {"split", data.split},
                  {"base_seed", data.base_seed}};
  w.str(meta.dump());
  w.u32(with_noise ? 1u : 0u);
  w.u64(data.size());
  for (const auto& t : data.trajectories) w.u64(t.seed);
  for (const auto& t : data.trajectories) {
    if (t.states.size() != k * f || t.forcing.size() != (k - 1) * f) {
      throw std::invalid_argument("encode_dataset: trajectory does not match the grid");
    }
    w.f64s(t.states);
  }
  for (const auto& t : data.trajectories) w.f64s(t.forcing);
  if (with_noise) {
    for (const auto& t : data.trajectories) w.f64s(problem_noise(data.problem, t.seed).values);
  }
  w.u64(Fnv1a().bytes(w.bytes().data(), w.size()).digest());
  return w.bytes();
}

Dataset decode_dataset(const std::vector<std::uint8_t>& bytes, const std::string& source,
                       std::vector<double>* noise) {
  if (bytes.size() < 8) throw FormatError(source + ": file too short for an SPDD container");
  const std::size_t body = bytes.size() - 8;
  ByteReader trailer(bytes.data() + body, 8, source);
  if (trailer.u64() != Fnv1a().bytes(bytes.data(), body).digest()) {
    throw FormatError(source + ": checksum mismatch (file corrupted or truncated)");
  }
  ByteReader r(bytes.data(), body, source);
  char magic[4];
  r.raw(magic, 4);
  if (std::string(magic, 4) != "SPDD") throw FormatError(source + ": bad magic, not an SPDD container");
  const auto version = r.u32();
  if (version != DatasetFileInfo::version) {
    throw FormatError(source + ": unsupported SPDD version " + std::to_string(version));
  }
  Dataset data;
  data.config_hash = r.u64();
  Json meta;
  try {
    meta = Json::parse(r.str());
    data.problem = problem_from_json(meta.at("problem"), "/problem");
    data.sampler = sampler_from_json(meta.at("sampler"), "/sampler");
    data.split = meta.at("split").get<std::string>();
    data.base_seed = meta.at("base_seed").get<std::uint64_t>();
  } catch (const std::exception& e) {
    throw FormatError(source + ": bad metadata: " + e.what());
  }
  const auto flags = r.u32();
  const std::uint64_t count = r.u64();
  const Grid& g = data.problem.grid;
  const std::size_t f = g.field_size(), k = g.frames;
  const std::size_t per_traj = (2 * k - 1 + ((flags & 1u) ? g.fine_steps : 0)) * f * 8 + 8;
  if (count == 0 || count > r.remaining() / per_traj) throw FormatError(source + ": trajectory count does not fit the file");
  if (config_hash(data.problem, data.sampler, data.base_seed, count) != data.config_hash) {
    throw FormatError(source + ": header config hash does not match the metadata");
  }
  data.trajectories.resize(count);
  for (auto& t : data.trajectories) t.seed = r.u64();
  for (auto& t : data.trajectories) t.states = r.f64s(k * f);
  for (auto& t : data.trajectories) t.forcing = r.f64s((k - 1) * f);
  if (noise) noise->clear();
  if (flags & 1u) {
    auto block = r.f64s(count * g.fine_steps * f);
    if (noise) *noise = std::move(block);
  }
  if (r.remaining() != 0) throw FormatError(source + ": trailing bytes after the data blocks");
  return data;
}

void save_dataset(const std::string& path, const Dataset& data, bool with_noise) {
  write_file_bytes(path, encode_dataset(data, with_noise));
}

Dataset load_dataset(const std::string& path, std::vector<double>* noise) {
  return decode_dataset(read_file_bytes(path), path, noise);
}

// ---------------------------------------------------------------------------
// Tasks and scoring

std::vector<TrackingTask> make_tasks(const Dataset& data, const TaskConfig& cfg) {
  if (data.size() == 0) throw std::invalid_argument("make_tasks: empty dataset");
  const Grid& g = data.problem.grid;
  const std::size_t f = g.field_size(), last = (g.frames - 1) * f;
  double sq = 0.0;
  for (const auto& t : data.trajectories) {
    for (std::size_t i = 0; i < f; ++i) sq += t.states[last + i] * t.states[last + i];
  }
  const double rms = std::sqrt(sq / static_cast<double>(data.size() * f));
  // sample_field draws coefficients with std amplitude * k^-decay; rescale so
  // the perturbation's rms is about jitter * rms(last frames).
  double shape = 0.0;
  for (int k = 1; k <= data.sampler.k_max; ++k) shape += std::pow(static_cast<double>(k), -2.0 * data.sampler.decay);
  const double amplitude = cfg.jitter * rms / std::sqrt(std::max(shape * (g.dim == 1 ? 0.5 : 1.0), 1e-300));

  std::vector<TrackingTask> tasks(cfg.count);
  for (std::size_t i = 0; i < cfg.count; ++i) {
    CounterRng rng(derive_seed(cfg.seed, 2 * i));
    TrackingTask& task = tasks[i];
    task.u0 = sample_initial(data.problem, data.sampler, rng);
    const auto& src = data.trajectories[rng.below(data.size())].states;
    task.target.assign(src.begin() + static_cast<long>(last), src.end());
    if (cfg.jitter > 0.0) {
      const auto bump = sample_field(g, data.sampler, amplitude, rng);
      for (std::size_t j = 0; j < f; ++j) task.target[j] += bump[j];
    }
    task.alpha = cfg.alpha;
    task.noise_samples = cfg.noise_samples;
    task.seed = derive_seed(cfg.seed, 2 * i + 1);
  }
  if (cfg.repeats == 0) throw std::invalid_argument("make_tasks: repeats must be >= 1");
  for (std::size_t r = 1; r < cfg.repeats; ++r) {
    for (std::size_t i = 0; i < cfg.count; ++i) {
      TrackingTask copy = tasks[i];
      copy.seed = derive_seed(copy.seed, r);
      tasks.push_back(std::move(copy));
    }
  }
  return tasks;
}

TrackingMetrics score(const Grid& grid, const Trajectory& traj, const TrackingTask& task) {
  return tracking_metrics(grid, traj.states, traj.forcing, task.target, task.alpha);
}

std::string to_string(MethodKind kind) {
  switch (kind) {
    case MethodKind::open_loop:
      return "open_loop";
    case MethodKind::policy:
      return "policy";
    case MethodKind::zero:
      break;
  }
  return "zero";
}

// ---------------------------------------------------------------------------
// Benchmark

std::vector<std::vector<MethodResult>> run_benchmark(const std::vector<Problem>& environments,
                                                     const std::vector<TrackingTask>& tasks,
                                                     const std::vector<ControlMethod>& methods, std::size_t threads) {
  if (environments.empty()) throw std::invalid_argument("run_benchmark: no environments");
  const Grid& g = environments.front().grid;
  for (const auto& env : environments) {
    if (!(env.grid == g)) throw std::invalid_argument("run_benchmark: environments must share a grid");
  }
  const std::size_t steps = g.frames - 1, f = g.field_size();
  for (const auto& m : methods) {
    if (m.kind == MethodKind::open_loop && !m.model) throw std::invalid_argument(m.name + ": open loop needs a model");
    if (m.kind == MethodKind::policy && !m.policy) throw std::invalid_argument(m.name + ": needs a policy");
    // freeze up front so parallel planners only read the flags
    if (m.model) m.model->params().set_requires_grad(false);
  }
  std::vector<std::vector<MethodResult>> results(environments.size(), std::vector<MethodResult>(methods.size()));
  for (auto& per_env : results) {
    for (std::size_t m = 0; m < methods.size(); ++m) {
      per_env[m].name = methods[m].name;
      per_env[m].kind = methods[m].kind;
      per_env[m].per_task.resize(tasks.size());
      per_env[m].seconds.resize(tasks.size());
    }
  }
  parallel_for(
      tasks.size(),
      [&](std::size_t t) {
        const TrackingTask& task = tasks[t];
        for (std::size_t m = 0; m < methods.size(); ++m) {
          const ControlMethod& method = methods[m];
          // a plan depends only on the surrogate, so one serves every environment
          OpenLoopPlan plan;
          if (method.kind == MethodKind::open_loop) plan = open_loop_optimize(*method.model, task, method.open_loop);
          for (std::size_t e = 0; e < environments.size(); ++e) {
            const Problem& env = environments[e];
            ControlLoopResult r;
            double seconds = 0.0;
            switch (method.kind) {
              case MethodKind::zero:
                r = run_open_loop(env, task, std::vector<double>(steps * f, 0.0));
                break;
              case MethodKind::open_loop:
                seconds = plan.seconds;
                r = run_open_loop(env, task, plan.forcing);
                break;
              case MethodKind::policy:
                r = run_closed_loop(*method.policy, env, task);
                seconds = r.inference_seconds;
                break;
            }
            results[e][m].per_task[t] = r.metrics;
            results[e][m].seconds[t] = seconds;
          }
        }
      },
      threads);
  for (auto& per_env : results) {
    for (auto& res : per_env) {
      const double n = static_cast<double>(std::max<std::size_t>(tasks.size(), 1));
      for (std::size_t t = 0; t < tasks.size(); ++t) {
        res.mean.track += res.per_task[t].track / n;
        res.mean.energy += res.per_task[t].energy / n;
        res.mean_seconds += res.seconds[t] / n;
      }
      res.mean.total = res.mean.track + res.mean.energy;
    }
  }
  return results;
}

std::vector<MethodResult> run_benchmark(const Problem& environment, const std::vector<TrackingTask>& tasks,
                                        const std::vector<ControlMethod>& methods, std::size_t threads) {
  return run_benchmark(std::vector<Problem>{environment}, tasks, methods, threads).front();
}

std::string format_benchmark_table(const std::vector<MethodResult>& results) {
  std::size_t width = 6;
  for (const auto& r : results) width = std::max(width, r.name.size());
  std::ostringstream out;
  out << std::left << std::setw(static_cast<int>(width)) << "method" << std::right << std::setw(12) << "e"
      << std::setw(12) << "e_track" << std::setw(12) << "e_energy" << std::setw(12) << "time[s]" << '\n';
  out << std::fixed;
  for (const auto& r : results) {
    out << std::left << std::setw(static_cast<int>(width)) << r.name << std::right << std::setprecision(4)
        << std::setw(12) << r.mean.total << std::setw(12) << r.mean.track << std::setw(12) << r.mean.energy
        << std::setprecision(5) << std::setw(12) << r.mean_seconds << '\n';
  }
  return out.str();
}

void write_benchmark_csv(std::ostream& out, const std::vector<MethodResult>& results) {
  out << "method,kind,e,e_track,e_energy\n" << std::setprecision(12);
  for (const auto& r : results) {
    out << r.name << ',' << to_string(r.kind) << ',' << r.mean.total << ',' << r.mean.track << ',' << r.mean.energy
        << '\n';
  }
}

void write_timing_csv(std::ostream& out, const std::vector<MethodResult>& results) {
  out << "method,kind,mean_seconds\n" << std::setprecision(8);
  for (const auto& r : results) out << r.name << ',' << to_string(r.kind) << ',' << r.mean_seconds << '\n';
}

void write_ablation_csv(std::ostream& out, const std::vector<AblationRow>& rows) {
  out << "sigma,method,seed,error\n" << std::setprecision(12);
  for (const auto& r : rows) out << r.sigma << ',' << r.method << ',' << r.seed << ',' << r.error << '\n';
}

std::vector<AblationRow> run_control_ablation(const Problem& environment, const std::vector<TrackingTask>& tasks,
                                              const std::vector<ControlMethod>& methods,
                                              const std::vector<double>& sigmas, std::size_t threads) {
  std::vector<Problem> envs;
  for (double sigma : sigmas) {
    envs.push_back(environment);
    envs.back().sigma = sigma;
  }
  const auto results = run_benchmark(envs, tasks, methods, threads);
  std::vector<AblationRow> rows;
  for (std::size_t e = 0; e < envs.size(); ++e) {
    for (const auto& r : results[e]) rows.push_back({sigmas[e], r.name, 0, r.mean.total});
  }
  return rows;
}

// ---------------------------------------------------------------------------
// Modeling comparisons

std::vector<ModelRun> run_model_comparison(const Dataset& train, const Dataset& test,
                                           const std::vector<ModelVariant>& variants,
                                           const std::vector<std::uint64_t>& seeds, std::size_t threads) {
  std::vector<ModelRun> runs;
  for (const auto& v : variants) {
    for (std::uint64_t seed : seeds) {
      SurrogateConfig config = v.config;
      config.seed = seed;
      TrainConfig tc = v.train;
      tc.seed = seed;
      SurrogateModel model(train.problem, config);
      const auto result = train_surrogate(model, train, tc, threads);
      runs.push_back({v.name, seed, evaluate_model(model, test, threads), result.seconds});
    }
  }
  return runs;
}

std::vector<AblationRow> run_model_ablation(const ModelAblationConfig& cfg, const std::vector<ModelVariant>& variants,
                                            std::size_t threads) {
  std::vector<AblationRow> rows;
  for (double sigma : cfg.sigmas) {
    Problem p = cfg.problem;
    p.sigma = sigma;
    const Dataset train = generate_dataset(p, cfg.train_count, cfg.data_seed, cfg.sampler, "train", threads);
    const Dataset test =
        generate_dataset(p, cfg.test_count, derive_seed(cfg.data_seed, 0x7E57), cfg.sampler, "test", threads);
    for (const auto& run : run_model_comparison(train, test, variants, cfg.seeds, threads)) {
      rows.push_back({sigma, run.name, run.seed, run.error.prediction});
    }
  }
  return rows;
}

double median(std::vector<double> values) {
  if (values.empty()) throw std::invalid_argument("median of an empty set");
  std::sort(values.begin(), values.end());
  const std::size_t n = values.size();
  return n % 2 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

double median_error_slope(const std::vector<AblationRow>& rows, const std::string& method) {
  std::map<double, std::vector<double>> by_sigma;
  for (const auto& r : rows) {
    if (r.method == method) by_sigma[r.sigma].push_back(r.error);
  }
  if (by_sigma.size() < 2) throw std::invalid_argument("median_error_slope: need at least two sigma values");
  double sx = 0.0, sy = 0.0, sxx = 0.0, sxy = 0.0;
  for (const auto& [sigma, errors] : by_sigma) {
    const double y = median(errors);
    sx += sigma;
    sy += y;
    sxx += sigma * sigma;
    sxy += sigma * y;
  }
  const double n = static_cast<double>(by_sigma.size());
  return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

}  // namespace spdectl
