#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "spdectl/run_config.hpp"

namespace spdectl {

/// Run directory layout shared by the CLI stages.
///   train.spdd, test.spdd, config.json
///   models/<name>.spdm, <name>_loss.csv, <name>_eval.json
///   policies/<name>.spdm, <name>_loss.csv
///   control/<name>.jsonl, <name>_metrics.csv
///   bench.csv, timing.csv, table.txt, ablation_<mode>.csv
struct RunPaths {
  std::filesystem::path root;

  std::filesystem::path train() const { return root / "train.spdd"; }
  std::filesystem::path test() const { return root / "test.spdd"; }
  std::filesystem::path model(const std::string& name) const { return root / "models" / (name + ".spdm"); }
  std::filesystem::path policy(const std::string& name) const { return root / "policies" / (name + ".spdm"); }
};

/// A stage precondition that is not met (missing files, stale data).
class RunError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Overrides every seed in the config with `seed`.
void apply_seed(RunConfig& cfg, std::uint64_t seed);

/// Seed of the test split, distinct from the training split's.
std::uint64_t test_split_seed(std::uint64_t data_seed);

void run_generate(const RunConfig& cfg, const RunPaths& paths, std::ostream& log);
void run_train_surrogate(const RunConfig& cfg, const RunPaths& paths, std::ostream& log);
void run_train_policy(const RunConfig& cfg, const RunPaths& paths, std::ostream& log);
void run_control(const RunConfig& cfg, const RunPaths& paths, std::ostream& log);
/// Missing checkpoints are skipped with a warning; RunError when none exist.
void run_bench(const RunConfig& cfg, const RunPaths& paths, std::ostream& log);
void run_ablate(const RunConfig& cfg, const RunPaths& paths, std::ostream& log);

}  // namespace spdectl
