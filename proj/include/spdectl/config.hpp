#pragma once

#include <stdexcept>
#include <string>

#include "json.hpp"
#include "spdectl/control.hpp"
#include "spdectl/regfeat.hpp"
#include "spdectl/solver.hpp"
#include "spdectl/surrogate.hpp"

namespace spdectl {

using Json = nlohmann::ordered_json;

/// Config that violates the schema; `path` is a JSON pointer (empty for
/// syntax errors, whose message carries the line and column).
class ConfigError : public std::runtime_error {
 public:
  ConfigError(const std::string& path, const std::string& message)
      : std::runtime_error(path.empty() ? message : path + ": " + message), path_(path) {}
  ConfigError(std::size_t line, const std::string& message) : std::runtime_error(message), line_(line) {}
  const std::string& path() const { return path_; }
  /// Source line when known at throw time (syntax errors), else 0.
  std::size_t line() const { return line_; }

 private:
  std::string path_;
  std::size_t line_ = 0;
};

/// Strict field reader: unknown keys and wrong types raise ConfigError.
class ConfigReader {
 public:
  ConfigReader(const Json& obj, std::string path);

  double number(const std::string& key, double fallback);
  std::size_t count(const std::string& key, std::size_t fallback);
  std::uint64_t u64(const std::string& key, std::uint64_t fallback);
  int integer(const std::string& key, int fallback);
  bool boolean(const std::string& key, bool fallback);
  std::string text(const std::string& key, const std::string& fallback);
  std::vector<std::size_t> counts(const std::string& key, const std::vector<std::size_t>& fallback);
  std::vector<double> numbers(const std::string& key, const std::vector<double>& fallback);
  /// Array member (nullptr if absent).
  const Json* array(const std::string& key);
  /// Sub-object (empty object if absent).
  const Json& object(const std::string& key);
  std::string child_path(const std::string& key) const { return path_ + "/" + key; }
  bool has(const std::string& key) const { return obj_.contains(key); }

  /// Throws on keys that were never read.
  void finish() const;

 private:
  const Json* get(const std::string& key);

  const Json& obj_;
  std::string path_;
  std::vector<std::string> seen_;
  static const Json empty_;
};

Json to_json(const Grid& g);
Json to_json(const Problem& p);
Json to_json(const SamplerConfig& s);
Json to_json(const FeatureSpec& s);
Json to_json(const SurrogateConfig& s);
Json to_json(const TrainConfig& t);
Json to_json(const PolicyConfig& c);
Json to_json(const PolicyTrainConfig& c);
Json to_json(const OpenLoopConfig& c);

Grid grid_from_json(const Json& j, const std::string& path, const Grid& base);
Problem problem_from_json(const Json& j, const std::string& path);
SamplerConfig sampler_from_json(const Json& j, const std::string& path);
FeatureSpec feature_spec_from_json(const Json& j, const std::string& path, const FeatureSpec& base = {});
SurrogateConfig surrogate_config_from_json(const Json& j, const std::string& path);
TrainConfig train_config_from_json(const Json& j, const std::string& path);
PolicyConfig policy_config_from_json(const Json& j, const std::string& path);
PolicyTrainConfig policy_train_config_from_json(const Json& j, const std::string& path);
OpenLoopConfig open_loop_config_from_json(const Json& j, const std::string& path);

/// Parses a JSON file; syntax errors become ConfigError with line/column.
Json read_json_file(const std::string& path);

/// 1-based line of the member named by a JSON pointer in `text`, found by
/// following the pointer's keys in order; 0 when it cannot be located.
std::size_t pointer_line(const std::string& text, const std::string& pointer);

}  // namespace spdectl
