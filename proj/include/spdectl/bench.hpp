#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "spdectl/control.hpp"
#include "spdectl/solver.hpp"
#include "spdectl/surrogate.hpp"

namespace spdectl {

/// SPDD dataset container.
///
/// Layout (little endian): "SPDD", u32 version, u64 config hash, str metadata
/// (JSON: problem, sampler, split, base_seed), u32 flags (bit 0: noise block
/// present), u64 trajectory count, u64 seed per trajectory, f64 states
/// [T, K, F], f64 forcing [T, K-1, F], optional f64 raw noise [T, fine, F];
/// trailer u64 FNV-1a of every preceding byte.
struct DatasetFileInfo {
  static constexpr std::uint32_t version = 1;
  bool has_noise = false;
};

std::vector<std::uint8_t> encode_dataset(const Dataset& data, bool with_noise = false);
/// `noise` receives the stored noise block when present (cleared otherwise).
Dataset decode_dataset(const std::vector<std::uint8_t>& bytes, const std::string& source = "dataset",
                       std::vector<double>* noise = nullptr);

void save_dataset(const std::string& path, const Dataset& data, bool with_noise = false);
Dataset load_dataset(const std::string& path, std::vector<double>* noise = nullptr);

struct TaskConfig {
  std::size_t count = 50;
  double alpha = 0.01;
  std::size_t noise_samples = 50;
  double jitter = 0.05;  // relative amplitude of the smooth target perturbation
  std::uint64_t seed = 0;
  std::size_t repeats = 1;  // environment runs per task, each with its own noise seed

  bool operator==(const TaskConfig&) const = default;
};

/// u0 from the dataset's initial-condition sampler; u* is the last frame of a
/// randomly chosen dataset trajectory plus a smooth random perturbation of
/// relative size `jitter`. Each task gets its own environment seed. With
/// repeats R > 1 the list holds count * R entries; copy r of a task differs only
/// in its seed, so plain means over the list weight every task equally.
std::vector<TrackingTask> make_tasks(const Dataset& data, const TaskConfig& cfg);

/// Metrics of one realized trajectory against a task.
TrackingMetrics score(const Grid& grid, const Trajectory& traj, const TrackingTask& task);

enum class MethodKind { zero, open_loop, policy };
std::string to_string(MethodKind kind);

struct ControlMethod {
  std::string name;
  MethodKind kind = MethodKind::zero;
  const SurrogateModel* model = nullptr;  // open_loop
  const PolicyNet* policy = nullptr;      // policy
  OpenLoopConfig open_loop;
};

struct MethodResult {
  std::string name;
  MethodKind kind = MethodKind::zero;
  std::vector<TrackingMetrics> per_task;
  std::vector<double> seconds;  // planning time (open loop) or inference time (policy)
  TrackingMetrics mean;         // mean.total == mean.track + mean.energy
  double mean_seconds = 0.0;
};

/// Runs every method on every task against the reference solver. Tasks are
/// evaluated in parallel; results are assembled in task order.
std::vector<MethodResult> run_benchmark(const Problem& environment, const std::vector<TrackingTask>& tasks,
                                        const std::vector<ControlMethod>& methods, std::size_t threads = 0);

/// Same, evaluated in several environments that share a grid (for instance
/// differing noise scales). Each open-loop plan is computed once per task and
/// applied in every environment. Result [environment][method].
std::vector<std::vector<MethodResult>> run_benchmark(const std::vector<Problem>& environments,
                                                     const std::vector<TrackingTask>& tasks,
                                                     const std::vector<ControlMethod>& methods,
                                                     std::size_t threads = 0);

/// Aligned text table of e, e_track, e_energy and mean time.
std::string format_benchmark_table(const std::vector<MethodResult>& results);
/// method,kind,e,e_track,e_energy (no timings, so the bytes are reproducible).
void write_benchmark_csv(std::ostream& out, const std::vector<MethodResult>& results);
/// method,kind,mean_seconds
void write_timing_csv(std::ostream& out, const std::vector<MethodResult>& results);

struct AblationRow {
  double sigma = 0.0;
  std::string method;
  std::uint64_t seed = 0;
  double error = 0.0;
};

void write_ablation_csv(std::ostream& out, const std::vector<AblationRow>& rows);

/// Control ablation: the same methods and tasks in environments whose noise
/// scale is replaced by each sigma. One row per (sigma, method) with mean e.
std::vector<AblationRow> run_control_ablation(const Problem& environment, const std::vector<TrackingTask>& tasks,
                                              const std::vector<ControlMethod>& methods,
                                              const std::vector<double>& sigmas, std::size_t threads = 0);

struct ModelVariant {
  std::string name;
  SurrogateConfig config;
  TrainConfig train;
};

struct ModelRun {
  std::string name;
  std::uint64_t seed = 0;
  ErrorReport error;
  double seconds = 0.0;
};

/// Trains each variant once per seed (overriding both model and training
/// seeds) and scores it on the test set.
std::vector<ModelRun> run_model_comparison(const Dataset& train, const Dataset& test,
                                           const std::vector<ModelVariant>& variants,
                                           const std::vector<std::uint64_t>& seeds, std::size_t threads = 0);

struct ModelAblationConfig {
  Problem problem;
  SamplerConfig sampler;
  std::vector<double> sigmas{0.05, 0.2, 0.3, 0.5};
  std::size_t train_count = 500;
  std::size_t test_count = 100;
  std::uint64_t data_seed = 1;
  std::vector<std::uint64_t> seeds{0, 1, 2};
};

/// Trains and tests every variant at every sigma. Datasets at different sigma
/// share seeds, so only the noise scale differs between them. Rows carry the
/// test prediction error.
std::vector<AblationRow> run_model_ablation(const ModelAblationConfig& cfg, const std::vector<ModelVariant>& variants,
                                            std::size_t threads = 0);

/// Median over seeds per sigma, then the least-squares slope against sigma.
double median_error_slope(const std::vector<AblationRow>& rows, const std::string& method);

double median(std::vector<double> values);

}  // namespace spdectl
