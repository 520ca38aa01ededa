#pragma once

#include <string>
#include <vector>

#include "spdectl/bench.hpp"
#include "spdectl/config.hpp"

namespace spdectl {

struct DataConfig {
  std::size_t train_count = 500;
  std::size_t test_count = 100;
  std::uint64_t seed = 1;
  bool with_noise = false;  // store the raw noise block in SPDD files
};

struct AblationSettings {
  std::string mode = "control";  // "control" or "model"
  std::vector<double> sigmas;    // empty: mode default
  std::vector<std::uint64_t> seeds{0, 1, 2};
  std::vector<ModelVariant> variants;
};

/// Everything a CLI run reads. Each top-level section is optional; unknown keys
/// anywhere are schema errors.
struct RunConfig {
  std::string name = "model";
  Problem problem = make_rd_problem();
  SamplerConfig sampler;
  DataConfig data;
  SurrogateConfig surrogate;
  TrainConfig training;
  PolicyConfig policy;
  PolicyTrainConfig policy_training;
  std::size_t policy_pool = 0;  // tasks in the policy training pool; 0: training set size
  OpenLoopConfig open_loop;
  std::vector<double> open_loop_lrs{0.03, 0.1, 0.3};
  std::size_t lr_calibration_tasks = 3;
  TaskConfig tasks;
  std::vector<std::string> bench_models;  // empty: every checkpoint found
  AblationSettings ablation;
};

/// Problem-dependent defaults: tracking weight and noise count (0.01 / 50 for
/// RD, 100 / 20 for NS) and a 2-D feature set that fits the feature cap.
RunConfig default_run_config(ProblemKind kind);

RunConfig run_config_from_json(const Json& j);
Json to_json(const RunConfig& c);

}  // namespace spdectl
