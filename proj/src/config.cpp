#include "spdectl/config.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

namespace spdectl {

const Json ConfigReader::empty_ = Json::object();

ConfigReader::ConfigReader(const Json& obj, std::string path) : obj_(obj), path_(std::move(path)) {
  if (!obj_.is_object()) throw ConfigError(path_.empty() ? "/" : path_, "expected an object");
}

const Json* ConfigReader::get(const std::string& key) {
  seen_.push_back(key);
  auto it = obj_.find(key);
  return it == obj_.end() || it->is_null() ? nullptr : &*it;
}

double ConfigReader::number(const std::string& key, double fallback) {
  const Json* v = get(key);
  if (!v) return fallback;
  if (!v->is_number()) throw ConfigError(child_path(key), "expected a number");
  return v->get<double>();
}

std::size_t ConfigReader::count(const std::string& key, std::size_t fallback) {
  const Json* v = get(key);
  if (!v) return fallback;
  if (!v->is_number_integer() || v->get<long long>() < 0) {
    throw ConfigError(child_path(key), "expected a non-negative integer");
  }
  return v->get<std::size_t>();
}

std::uint64_t ConfigReader::u64(const std::string& key, std::uint64_t fallback) {
  const Json* v = get(key);
  if (!v) return fallback;
  if (!v->is_number_unsigned() && !(v->is_number_integer() && v->get<long long>() >= 0)) {
    throw ConfigError(child_path(key), "expected an unsigned integer");
  }
  return v->get<std::uint64_t>();
}

int ConfigReader::integer(const std::string& key, int fallback) {
  const Json* v = get(key);
  if (!v) return fallback;
  if (!v->is_number_integer()) throw ConfigError(child_path(key), "expected an integer");
  return v->get<int>();
}

bool ConfigReader::boolean(const std::string& key, bool fallback) {
  const Json* v = get(key);
  if (!v) return fallback;
  if (!v->is_boolean()) throw ConfigError(child_path(key), "expected true or false");
  return v->get<bool>();
}

std::string ConfigReader::text(const std::string& key, const std::string& fallback) {
  const Json* v = get(key);
  if (!v) return fallback;
  if (!v->is_string()) throw ConfigError(child_path(key), "expected a string");
  return v->get<std::string>();
}

std::vector<std::size_t> ConfigReader::counts(const std::string& key, const std::vector<std::size_t>& fallback) {
  const Json* v = get(key);
  if (!v) return fallback;
  if (!v->is_array()) throw ConfigError(child_path(key), "expected an array of positive integers");
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < v->size(); ++i) {
    const Json& e = (*v)[i];
    if (!e.is_number_integer() || e.get<long long>() <= 0) {
      throw ConfigError(child_path(key) + "/" + std::to_string(i), "expected a positive integer");
    }
    out.push_back(e.get<std::size_t>());
  }
  return out;
}

std::vector<double> ConfigReader::numbers(const std::string& key, const std::vector<double>& fallback) {
  const Json* v = get(key);
  if (!v) return fallback;
  if (!v->is_array()) throw ConfigError(child_path(key), "expected an array of numbers");
  std::vector<double> out;
  for (std::size_t i = 0; i < v->size(); ++i) {
    if (!(*v)[i].is_number()) throw ConfigError(child_path(key) + "/" + std::to_string(i), "expected a number");
    out.push_back((*v)[i].get<double>());
  }
  return out;
}

const Json* ConfigReader::array(const std::string& key) {
  const Json* v = get(key);
  if (v && !v->is_array()) throw ConfigError(child_path(key), "expected an array");
  return v;
}

const Json& ConfigReader::object(const std::string& key) {
  const Json* v = get(key);
  if (!v) return empty_;
  if (!v->is_object()) throw ConfigError(child_path(key), "expected an object");
  return *v;
}

void ConfigReader::finish() const {
  for (auto it = obj_.begin(); it != obj_.end(); ++it) {
    if (std::find(seen_.begin(), seen_.end(), it.key()) == seen_.end()) {
      throw ConfigError(child_path(it.key()), "unknown key");
    }
  }
}

// ---------------------------------------------------------------------------

Json to_json(const Grid& g) {
  return Json{{"dim", g.dim},         {"n", g.n},           {"length", g.length},        {"boundary", to_string(g.bc)},
              {"horizon", g.horizon}, {"frames", g.frames}, {"fine_steps", g.fine_steps}};
}

Json to_json(const Problem& p) {
  return Json{{"kind", to_string(p.kind)},
              {"grid", to_json(p.grid)},
              {"nu", p.nu},
              {"sigma", p.sigma},
              {"coupling", p.coupling == NoiseCoupling::multiplicative ? "multiplicative" : "additive"},
              {"noise_window", p.noise_window},
              {"c1", p.c1},
              {"c3", p.c3}};
}

Json to_json(const SamplerConfig& s) {
  return Json{{"k_max", s.k_max}, {"decay", s.decay}, {"u0_amplitude", s.u0_amplitude}, {"f_amplitude", s.f_amplitude}};
}

Json to_json(const FeatureSpec& s) {
  return Json{{"n", s.n},
              {"m", s.m},
              {"l", s.l},
              {"forcing", to_string(s.forcing)},
              {"derivatives", s.derivatives},
              {"max_features", s.max_features}};
}

Json to_json(const SurrogateConfig& s) {
  return Json{{"use_features", s.use_features},       {"features", to_json(s.features)},
              {"backbone", to_string(s.backbone)},    {"conv_width", s.conv_width},
              {"conv_layers", s.conv_layers},         {"kernel", s.kernel},
              {"spectral_width", s.spectral_width},   {"spectral_layers", s.spectral_layers},
              {"modes", s.modes},                     {"seed", s.seed}};
}

Json to_json(const TrainConfig& t) {
  return Json{{"lr", t.lr},
              {"final_lr_fraction", t.final_lr_fraction},
              {"batch_size", t.batch_size},
              {"epochs", t.epochs},
              {"warmup_fraction", t.warmup_fraction},
              {"quantile", t.quantile},
              {"duplication", t.duplication},
              {"transition_weight", t.transition_weight},
              {"reconstruction_weight", t.reconstruction_weight},
              {"seed", t.seed}};
}

Json to_json(const PolicyConfig& c) {
  return Json{{"hidden", c.hidden},
              {"activation", nn::to_string(c.activation)},
              {"output_scale", c.output_scale},
              {"action_bound", c.action_bound},
              {"seed", c.seed}};
}

Json to_json(const PolicyTrainConfig& c) {
  return Json{{"lr", c.lr},
              {"final_lr_fraction", c.final_lr_fraction},
              {"batch_size", c.batch_size},
              {"epochs", c.epochs},
              {"noise_samples", c.noise_samples},
              {"alpha", c.alpha},
              {"seed", c.seed}};
}

Json to_json(const OpenLoopConfig& c) {
  return Json{{"iterations", c.iterations}, {"lr", c.lr}, {"seed", c.seed}};
}

namespace {

template <class F>
auto wrap_invalid(const std::string& path, F&& fn) {
  try {
    return fn();
  } catch (const ConfigError&) {
    throw;
  } catch (const std::invalid_argument& e) {
    throw ConfigError(path, e.what());
  }
}

}  // namespace

Grid grid_from_json(const Json& j, const std::string& path, const Grid& base) {
  ConfigReader r(j, path);
  Grid g = base;
  g.dim = r.integer("dim", g.dim);
  g.n = r.count("n", g.n);
  g.length = r.number("length", g.length);
  g.bc = wrap_invalid(r.child_path("boundary"), [&] { return boundary_from_string(r.text("boundary", to_string(g.bc))); });
  g.horizon = r.number("horizon", g.horizon);
  g.frames = r.count("frames", g.frames);
  g.fine_steps = r.count("fine_steps", g.fine_steps);
  r.finish();
  wrap_invalid(path, [&] {
    g.validate();
    return 0;
  });
  return g;
}

Problem problem_from_json(const Json& j, const std::string& path) {
  ConfigReader r(j, path);
  const auto kind =
      wrap_invalid(r.child_path("kind"), [&] { return problem_kind_from_string(r.text("kind", "reaction-diffusion")); });
  Problem p = kind == ProblemKind::navier_stokes ? make_ns_problem() : make_rd_problem();
  if (r.has("grid")) p.grid = grid_from_json(r.object("grid"), r.child_path("grid"), p.grid);
  else r.object("grid");
  p.nu = r.number("nu", p.nu);
  p.sigma = r.number("sigma", p.sigma);
  const std::string coupling =
      r.text("coupling", p.coupling == NoiseCoupling::multiplicative ? "multiplicative" : "additive");
  if (coupling == "multiplicative") {
    p.coupling = NoiseCoupling::multiplicative;
  } else if (coupling == "additive") {
    p.coupling = NoiseCoupling::additive;
  } else {
    throw ConfigError(r.child_path("coupling"), "expected \"multiplicative\" or \"additive\"");
  }
  p.noise_window = r.integer("noise_window", p.noise_window);
  p.c1 = r.number("c1", p.c1);
  p.c3 = r.number("c3", p.c3);
  r.finish();
  wrap_invalid(path, [&] {
    p.validate();
    return 0;
  });
  return p;
}

SamplerConfig sampler_from_json(const Json& j, const std::string& path) {
  ConfigReader r(j, path);
  SamplerConfig s;
  s.k_max = r.integer("k_max", s.k_max);
  s.decay = r.number("decay", s.decay);
  s.u0_amplitude = r.number("u0_amplitude", s.u0_amplitude);
  s.f_amplitude = r.number("f_amplitude", s.f_amplitude);
  r.finish();
  if (s.k_max < 1) throw ConfigError(r.child_path("k_max"), "must be >= 1");
  return s;
}

FeatureSpec feature_spec_from_json(const Json& j, const std::string& path, const FeatureSpec& base) {
  ConfigReader r(j, path);
  FeatureSpec s = base;
  s.n = r.integer("n", s.n);
  s.m = r.integer("m", s.m);
  s.l = r.integer("l", s.l);
  s.forcing = wrap_invalid(r.child_path("forcing"),
                           [&] { return forcing_mode_from_string(r.text("forcing", to_string(s.forcing))); });
  s.derivatives = r.boolean("derivatives", s.derivatives);
  s.max_features = r.count("max_features", s.max_features);
  r.finish();
  wrap_invalid(path, [&] {
    s.validate();
    return 0;
  });
  return s;
}

SurrogateConfig surrogate_config_from_json(const Json& j, const std::string& path) {
  ConfigReader r(j, path);
  SurrogateConfig s;
  s.use_features = r.boolean("use_features", s.use_features);
  if (r.has("features")) s.features = feature_spec_from_json(r.object("features"), r.child_path("features"));
  else r.object("features");
  s.backbone =
      wrap_invalid(r.child_path("backbone"), [&] { return backbone_from_string(r.text("backbone", to_string(s.backbone))); });
  s.conv_width = r.count("conv_width", s.conv_width);
  s.conv_layers = r.count("conv_layers", s.conv_layers);
  s.kernel = r.count("kernel", s.kernel);
  s.spectral_width = r.count("spectral_width", s.spectral_width);
  s.spectral_layers = r.count("spectral_layers", s.spectral_layers);
  s.modes = r.count("modes", s.modes);
  s.seed = r.u64("seed", s.seed);
  r.finish();
  if (s.kernel % 2 == 0) throw ConfigError(r.child_path("kernel"), "kernel size must be odd");
  return s;
}

TrainConfig train_config_from_json(const Json& j, const std::string& path) {
  ConfigReader r(j, path);
  TrainConfig t;
  t.lr = r.number("lr", t.lr);
  t.final_lr_fraction = r.number("final_lr_fraction", t.final_lr_fraction);
  t.batch_size = r.count("batch_size", t.batch_size);
  t.epochs = r.count("epochs", t.epochs);
  t.warmup_fraction = r.number("warmup_fraction", t.warmup_fraction);
  t.quantile = r.number("quantile", t.quantile);
  t.duplication = r.integer("duplication", t.duplication);
  t.transition_weight = r.number("transition_weight", t.transition_weight);
  t.reconstruction_weight = r.number("reconstruction_weight", t.reconstruction_weight);
  t.seed = r.u64("seed", t.seed);
  r.finish();
  wrap_invalid(path, [&] {
    t.validate();
    return 0;
  });
  return t;
}

PolicyConfig policy_config_from_json(const Json& j, const std::string& path) {
  ConfigReader r(j, path);
  PolicyConfig c;
  c.hidden = r.counts("hidden", c.hidden);
  const std::string act = r.text("activation", nn::to_string(c.activation));
  c.activation = wrap_invalid(r.child_path("activation"), [&] { return nn::activation_from_string(act); });
  c.output_scale = r.number("output_scale", c.output_scale);
  c.action_bound = r.number("action_bound", c.action_bound);
  c.seed = r.u64("seed", c.seed);
  r.finish();
  if (!(c.output_scale > 0.0)) throw ConfigError(r.child_path("output_scale"), "must be positive");
  if (!(c.action_bound >= 0.0)) throw ConfigError(r.child_path("action_bound"), "must be >= 0");
  return c;
}

PolicyTrainConfig policy_train_config_from_json(const Json& j, const std::string& path) {
  ConfigReader r(j, path);
  PolicyTrainConfig c;
  c.lr = r.number("lr", c.lr);
  c.final_lr_fraction = r.number("final_lr_fraction", c.final_lr_fraction);
  c.batch_size = r.count("batch_size", c.batch_size);
  c.epochs = r.count("epochs", c.epochs);
  c.noise_samples = r.count("noise_samples", c.noise_samples);
  c.alpha = r.number("alpha", c.alpha);
  c.seed = r.u64("seed", c.seed);
  r.finish();
  wrap_invalid(path, [&] {
    c.validate();
    return 0;
  });
  return c;
}

OpenLoopConfig open_loop_config_from_json(const Json& j, const std::string& path) {
  ConfigReader r(j, path);
  OpenLoopConfig c;
  c.iterations = r.count("iterations", c.iterations);
  c.lr = r.number("lr", c.lr);
  c.seed = r.u64("seed", c.seed);
  r.finish();
  if (!(c.lr > 0.0)) throw ConfigError(r.child_path("lr"), "must be positive");
  return c;
}

Json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  const std::string text = ss.str();
  try {
    return Json::parse(text);
  } catch (const Json::parse_error& e) {
    const auto end = text.begin() + static_cast<long>(std::min(e.byte, text.size()));
    throw ConfigError(static_cast<std::size_t>(std::count(text.begin(), end, '\n')) + 1, e.what());
  }
}

std::size_t pointer_line(const std::string& text, const std::string& pointer) {
  std::size_t pos = 0;
  std::size_t start = pointer.empty() || pointer[0] != '/' ? 0 : 1;
  bool found = false;
  while (start < pointer.size()) {
    std::size_t end = pointer.find('/', start);
    if (end == std::string::npos) end = pointer.size();
    const std::string key = pointer.substr(start, end - start);
    start = end + 1;
    if (!key.empty() && std::all_of(key.begin(), key.end(), ::isdigit)) continue;  // array index
    const std::size_t hit = text.find("\"" + key + "\"", pos);
    if (hit == std::string::npos) break;
    pos = hit;
    found = true;
  }
  if (!found) return 0;
  return static_cast<std::size_t>(std::count(text.begin(), text.begin() + static_cast<long>(pos), '\n')) + 1;
}

}  // namespace spdectl
