// spdectl: command-line driver for the data / training / control pipeline.
//
// Every subcommand reads one JSON config and works inside a run directory.
// Exit codes: 0 success, 2 config or usage error, 1 runtime failure.

#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include "CLI11.hpp"
#include "spdectl/parallel.hpp"
#include "spdectl/pipeline.hpp"

namespace {

using namespace spdectl;

struct Options {
  std::string config;
  std::string out = "run";
  std::optional<std::uint64_t> seed;
  std::size_t threads = 0;
};

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

RunConfig load_run_config(const Options& opts) {
  RunConfig cfg = run_config_from_json(read_json_file(opts.config));
  if (opts.seed) apply_seed(cfg, *opts.seed);
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"SPDE simulation, surrogate training and control workbench"};
  app.footer(
      "Environment overrides: SPDECTL_CONFIG, SPDECTL_OUT, SPDECTL_SEED, SPDECTL_THREADS\n"
      "(command-line flags win over the environment).");
  app.require_subcommand(1);
  app.fallthrough();

  Options opts;
  app.add_option("-c,--config", opts.config, "JSON run config")->envname("SPDECTL_CONFIG")->required();
  app.add_option("-o,--out", opts.out, "run directory")->envname("SPDECTL_OUT")->capture_default_str();
  app.add_option("--seed", opts.seed, "override every seed in the config")->envname("SPDECTL_SEED");
  app.add_option("--threads", opts.threads, "worker threads (0: hardware concurrency)")
      ->envname("SPDECTL_THREADS")
      ->check(CLI::NonNegativeNumber);

  using Stage = void (*)(const RunConfig&, const RunPaths&, std::ostream&);
  const std::pair<const char*, std::pair<const char*, Stage>> commands[] = {
      {"generate", {"simulate train and test splits into SPDD files", run_generate}},
      {"train-surrogate", {"train the configured surrogate and score it on the test split", run_train_surrogate}},
      {"train-policy", {"train a closed-loop policy through the saved surrogate", run_train_policy}},
      {"control", {"run the saved policy against the reference solver, logging JSONL", run_control}},
      {"bench", {"compare zero, open-loop and policy control on the tracking tasks", run_bench}},
      {"ablate", {"noise-scale ablation (control or model mode)", run_ablate}},
  };
  Stage stage = nullptr;
  for (const auto& [name, entry] : commands) {
    auto* sub = app.add_subcommand(name, entry.first);
    sub->callback([&stage, fn = entry.second] { stage = fn; });
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (opts.threads) set_default_threads(opts.threads);
    const RunConfig cfg = load_run_config(opts);
    stage(cfg, RunPaths{opts.out}, std::cout);
  } catch (const ConfigError& e) {
    const std::size_t line = e.line() ? e.line() : pointer_line(slurp(opts.config), e.path());
    std::cerr << opts.config << ":" << (line ? std::to_string(line) + ":" : "") << " error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "spdectl: error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
