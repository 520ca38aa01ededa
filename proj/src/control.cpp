#include "spdectl/control.hpp"

#include <chrono>
#include <cmath>
#include <numbers>
#include <ostream>

#include "spdectl/binary_io.hpp"
#include "spdectl/checkpoint.hpp"
#include "spdectl/config.hpp"
#include "spdectl/hash.hpp"
#include "spdectl/noise.hpp"
#include "spdectl/optim.hpp"

namespace spdectl {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

double norm_weight(const Grid& g) { return g.coarse_dt() * g.cell_volume(); }

// Surrogate parameters only need to stop tracking gradients once; the check
// keeps concurrent callers on an already frozen model read-only.
void freeze(const SurrogateModel& model) {
  for (const auto& p : model.params().list()) {
    if (p.value.requires_grad()) {
      model.params().set_requires_grad(false);
      return;
    }
  }
}

Tensor repeat_rows(const Tensor& x, std::size_t times) {
  const std::size_t b = x.size(0), f = x.size(1);
  return reshape(add(Tensor::zeros({b, times, f}), reshape(x, {b, 1, f})), {b * times, f});
}

double cosine_lr(double lr, double floor_fraction, std::size_t epoch, std::size_t epochs) {
  const double progress = epochs > 1 ? static_cast<double>(epoch) / static_cast<double>(epochs - 1) : 0.0;
  return lr * (floor_fraction + (1.0 - floor_fraction) * 0.5 * (1.0 + std::cos(std::numbers::pi * progress)));
}

}  // namespace

TrackingMetrics tracking_metrics(const Grid& grid, std::span<const double> states, std::span<const double> forcing,
                                 std::span<const double> target, double alpha) {
  const std::size_t f = grid.field_size(), k = grid.frames;
  if (states.size() != k * f || forcing.size() != (k - 1) * f || target.size() != f) {
    throw std::invalid_argument("tracking_metrics: sizes do not match the grid");
  }
  double track = 0.0, energy = 0.0;
  for (std::size_t t = 1; t < k; ++t) {
    for (std::size_t i = 0; i < f; ++i) track += std::pow(states[t * f + i] - target[i], 2);
  }
  for (double v : forcing) energy += v * v;
  const double w = norm_weight(grid);
  TrackingMetrics m;
  m.track = std::sqrt(w * track);
  m.energy = alpha * std::sqrt(w * energy);
  m.total = m.track + m.energy;
  return m;
}

Tensor tracking_loss(const Grid& grid, const Tensor& states, const Tensor& forcing, const Tensor& target,
                     double alpha) {
  const std::size_t f = grid.field_size(), k = grid.frames;
  if (states.dim() != 3 || states.size(1) != k || states.size(2) != f) {
    throw std::invalid_argument("tracking_loss: states must be [B, K, F]");
  }
  const std::size_t b = states.size(0);
  if (forcing.shape() != Shape{b, k - 1, f} || target.shape() != Shape{b, f}) {
    throw std::invalid_argument("tracking_loss: forcing or target shape mismatch");
  }
  const double w = norm_weight(grid);
  const Tensor diff = sub(slice(states, 1, 1, k - 1), reshape(target, {b, 1, f}));
  const Tensor track = sqrt(scale(sum_trailing(square(diff), 1), w));
  const Tensor energy = sqrt(scale(sum_trailing(square(forcing), 1), w));
  return mean(add(track, scale(energy, alpha)));
}

// ---------------------------------------------------------------------------

Tensor encode_state(const Grid& grid, const DiscreteOperator& op, const Tensor& u, const Tensor& target, double t) {
  const std::size_t f = grid.field_size();
  if (u.dim() != 2 || u.size(1) != f || target.shape() != u.shape()) {
    throw std::invalid_argument("encode_state: u and target must be [B, " + std::to_string(f) + "]");
  }
  const auto map = std::make_shared<DiscreteOperator>(op);
  return concat({u, apply_field_map(u, map), target, apply_field_map(target, map), Tensor::full({u.size(0), 1}, t)},
                1);
}

PolicyNet::PolicyNet(Problem problem, PolicyConfig config)
    : problem_(std::move(problem)), config_(std::move(config)), op_(grid_operator(problem_.grid, problem_.nu)) {
  problem_.validate();
  if (!(config_.output_scale > 0.0)) throw std::invalid_argument("policy output_scale must be positive");
  if (!(config_.action_bound >= 0.0)) throw std::invalid_argument("policy action_bound must be >= 0");
  std::vector<std::size_t> sizes{input_width()};
  sizes.insert(sizes.end(), config_.hidden.begin(), config_.hidden.end());
  sizes.push_back(grid().field_size());
  CounterRng rng(derive_seed(config_.seed, 0x901));
  mlp_ = nn::Mlp(sizes, config_.activation, true, rng, params_, "policy");
  input_scale_.assign(4, 1.0);
  std::vector<double> mask(grid().field_size(), 1.0);
  if (grid().bc == Boundary::dirichlet_zero) mask.front() = mask.back() = 0.0;
  mask_ = Tensor({grid().field_size()}, std::move(mask));
}

Tensor PolicyNet::encode(const Tensor& u, const Tensor& target, double t) const {
  return encode_state(grid(), op_, u, target, t);
}

Tensor PolicyNet::act(const Tensor& u, const Tensor& target, double t) const {
  const std::size_t f = grid().field_size();
  std::vector<double> s(input_width());
  for (std::size_t block = 0; block < 4; ++block) std::fill_n(s.begin() + block * f, f, input_scale_[block]);
  s.back() = 1.0 / grid().horizon;
  const Tensor x = mul(encode(u, target, t), Tensor({input_width()}, std::move(s)));
  Tensor a = scale(mlp_.forward(x), config_.output_scale);
  if (config_.action_bound > 0.0) {
    a = scale(tanh(scale(a, 1.0 / config_.action_bound)), config_.action_bound);
  }
  return mul(a, mask_);
}

void PolicyNet::set_input_scale(std::vector<double> scale) {
  if (scale.size() != 4) throw std::invalid_argument("policy input scale needs 4 entries");
  input_scale_ = std::move(scale);
}

void PolicyNet::fit_input_scale(const std::vector<TrackingTask>& tasks) {
  const std::size_t f = grid().field_size();
  double su = 0.0, sl = 0.0;
  std::vector<double> lu(f);
  std::size_t count = 0;
  for (const auto& task : tasks) {
    for (const auto* field : {&task.u0, &task.target}) {
      if (field->size() != f) throw std::invalid_argument("fit_input_scale: task field size mismatch");
      op_.apply(*field, lu);
      for (std::size_t i = 0; i < f; ++i) {
        su += (*field)[i] * (*field)[i];
        sl += lu[i] * lu[i];
      }
      count += f;
    }
  }
  if (count == 0) return;
  const double ru = std::sqrt(su / static_cast<double>(count)), rl = std::sqrt(sl / static_cast<double>(count));
  const double a = ru > 1e-12 ? 1.0 / ru : 1.0, b = rl > 1e-12 ? 1.0 / rl : 1.0;
  input_scale_ = {a, b, a, b};
}

std::uint64_t PolicyNet::spec_hash() const {
  return Fnv1a().text(to_json(problem_).dump()).text(to_json(config_).dump()).digest();
}

// ---------------------------------------------------------------------------

PolicyRollout policy_rollout(const PolicyNet& policy, const SurrogateModel& model, const Tensor& u0,
                             const Tensor& target, const Tensor& noise) {
  const Grid& g = model.grid();
  if (!(policy.grid() == g)) throw std::invalid_argument("policy_rollout: policy and surrogate grids differ");
  const std::size_t f = g.field_size(), b = u0.size(0), sub = g.substeps(), steps = g.frames - 1;
  if (noise.shape() != Shape{b, g.fine_steps, f}) {
    throw std::invalid_argument("policy_rollout: noise must be " + shape_str({b, g.fine_steps, f}));
  }
  std::vector<Tensor> states{reshape(u0, {b, 1, f})}, actions;
  Tensor u = u0;
  for (std::size_t k = 0; k < steps; ++k) {
    const Tensor a = policy.act(u, target, static_cast<double>(k) * g.coarse_dt());
    u = model.step(u, a, slice(noise, 1, k * sub, sub), k).u_next;
    actions.push_back(reshape(a, {b, 1, f}));
    states.push_back(reshape(u, {b, 1, f}));
  }
  return {concat(states, 1), concat(actions, 1)};
}

Tensor policy_loss(const PolicyNet& policy, const SurrogateModel& model, const Tensor& u0, const Tensor& target,
                   const Tensor& noise, double alpha) {
  const std::size_t b = u0.size(0);
  if (b == 0 || noise.size(0) % b != 0) throw std::invalid_argument("policy_loss: noise rows must be a multiple of B");
  const std::size_t n = noise.size(0) / b;
  const Tensor target_rep = repeat_rows(target, n);
  const auto roll = policy_rollout(policy, model, repeat_rows(u0, n), target_rep, noise);
  return tracking_loss(model.grid(), roll.states, roll.forcing, target_rep, alpha);
}

Tensor sample_model_noise(const Problem& problem, std::size_t count, std::uint64_t seed) {
  const Grid& g = problem.grid;
  const std::size_t block = g.fine_steps * g.field_size();
  std::vector<double> v(count * block);
  for (std::size_t i = 0; i < count; ++i) {
    const auto xi = sample_noise(g, derive_seed(seed, i), problem.noise_window);
    std::copy(xi.values.begin(), xi.values.end(), v.begin() + static_cast<long>(i * block));
  }
  return Tensor({count, g.fine_steps, g.field_size()}, std::move(v));
}

void PolicyTrainConfig::validate() const {
  if (!(lr > 0.0)) throw std::invalid_argument("lr must be positive");
  if (batch_size == 0) throw std::invalid_argument("batch_size must be positive");
  if (noise_samples == 0) throw std::invalid_argument("noise_samples must be positive");
  if (alpha < 0.0) throw std::invalid_argument("alpha must be >= 0");
  if (final_lr_fraction < 0.0 || final_lr_fraction > 1.0) throw std::invalid_argument("final_lr_fraction must lie in [0, 1]");
}

namespace {

Tensor stack_fields(const std::vector<TrackingTask>& tasks, std::span<const std::size_t> idx, bool target,
                    std::size_t f) {
  std::vector<double> v;
  v.reserve(idx.size() * f);
  for (std::size_t i : idx) {
    const auto& src = target ? tasks[i].target : tasks[i].u0;
    if (src.size() != f) throw std::invalid_argument("task field size does not match the grid");
    v.insert(v.end(), src.begin(), src.end());
  }
  return Tensor({idx.size(), f}, std::move(v));
}

}  // namespace

PolicyTrainResult train_policy(PolicyNet& policy, const SurrogateModel& model, const std::vector<TrackingTask>& pool,
                               const PolicyTrainConfig& cfg) {
  cfg.validate();
  if (pool.empty()) throw std::invalid_argument("train_policy: empty task pool");
  freeze(model);
  const auto t0 = Clock::now();
  const std::size_t f = model.grid().field_size();
  std::vector<Tensor> params = policy.params().tensors();
  AdamState state = make_adam_state(params, AdamOptions{cfg.lr});
  CounterRng rng(derive_seed(cfg.seed, 0x9071C7));
  std::vector<std::size_t> order(pool.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  PolicyTrainResult result;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
    state.options.lr = cosine_lr(cfg.lr, cfg.final_lr_fraction, epoch, cfg.epochs);
    const std::uint64_t epoch_seed = derive_seed(cfg.seed, epoch);
    double total = 0.0;
    std::size_t batch = 0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size, ++batch) {
      const std::size_t end = std::min(order.size(), start + cfg.batch_size);
      std::span<const std::size_t> idx(order.data() + start, end - start);
      const Tensor noise = sample_model_noise(model.problem(), idx.size() * cfg.noise_samples,
                                              derive_seed(epoch_seed, batch));
      Tensor loss;
      try {
        zero_grads(params);
        loss = policy_loss(policy, model, stack_fields(pool, idx, false, f), stack_fields(pool, idx, true, f), noise,
                           cfg.alpha);
        backward(loss);
      } catch (const TensorError& e) {
        throw std::runtime_error("policy training diverged at epoch " + std::to_string(epoch) + ": " + e.what());
      }
      adam_step(params, state);
      total += loss.item() * static_cast<double>(idx.size());
    }
    result.curve.push_back({epoch, total / static_cast<double>(order.size()), state.options.lr, order.size()});
  }
  result.seconds = seconds_since(t0);
  return result;
}

// ---------------------------------------------------------------------------

OpenLoopPlan open_loop_optimize(const SurrogateModel& model, const TrackingTask& task, const OpenLoopConfig& cfg) {
  if (!(cfg.lr > 0.0)) throw std::invalid_argument("open-loop lr must be positive");
  if (task.noise_samples == 0) throw std::invalid_argument("task needs at least one noise sample");
  freeze(model);
  const auto t0 = Clock::now();
  const Grid& g = model.grid();
  const std::size_t f = g.field_size(), steps = g.frames - 1, n = task.noise_samples;
  if (task.u0.size() != f || task.target.size() != f) throw std::invalid_argument("task field size mismatch");
  const Tensor noise = sample_model_noise(model.problem(), n, derive_seed(cfg.seed, task.seed));
  const Tensor u0 = repeat_rows(Tensor({1, f}, task.u0), n);
  const Tensor target = repeat_rows(Tensor({1, f}, task.target), n);

  std::vector<Tensor> plan{Tensor::zeros({1, steps, f}, true)};
  AdamState state = make_adam_state(plan, AdamOptions{cfg.lr});
  OpenLoopPlan out;
  out.forcing.assign(steps * f, 0.0);
  out.objective = std::numeric_limits<double>::infinity();
  for (std::size_t it = 0; it < cfg.iterations; ++it) {
    zero_grads(plan);
    const Tensor forcing = add(Tensor::zeros({n, steps, f}), plan[0]);
    Tensor loss;
    try {
      loss = tracking_loss(g, model.rollout(u0, forcing, noise), forcing, target, task.alpha);
    } catch (const TensorError&) {
      break;  // diverged iterate: keep the best so far
    }
    if (loss.item() < out.objective) {
      out.objective = loss.item();
      const auto v = plan[0].values();
      out.forcing.assign(v.begin(), v.end());
      out.improved = it > 0;
    }
    out.best_history.push_back(out.objective);
    backward(loss);
    adam_step(plan, state);
  }
  out.seconds = seconds_since(t0);
  return out;
}

double select_open_loop_lr(const SurrogateModel& model, const std::vector<TrackingTask>& tasks,
                           const std::vector<double>& lrs, OpenLoopConfig cfg) {
  if (lrs.empty() || tasks.empty()) throw std::invalid_argument("select_open_loop_lr: need tasks and candidate lrs");
  double best_lr = lrs.front(), best = std::numeric_limits<double>::infinity();
  for (double lr : lrs) {
    cfg.lr = lr;
    double total = 0.0;
    for (const auto& task : tasks) total += open_loop_optimize(model, task, cfg).objective;
    if (total < best) {
      best = total;
      best_lr = lr;
    }
  }
  return best_lr;
}

// ---------------------------------------------------------------------------

ControlLoopResult run_closed_loop(const PolicyNet& policy, const Problem& environment, const TrackingTask& task,
                                  std::ostream* log) {
  const Grid& g = environment.grid;
  if (!(policy.grid() == g)) throw std::invalid_argument("run_closed_loop: policy grid differs from the environment");
  const std::size_t f = g.field_size(), steps = g.frames - 1;
  if (task.u0.size() != f || task.target.size() != f) throw std::invalid_argument("task field size mismatch");
  const Simulator sim(environment);
  const NoiseField noise = problem_noise(environment, task.seed);
  const Tensor target({1, f}, task.target);

  ControlLoopResult r;
  std::vector<double> u = task.u0;
  if (environment.kind == ProblemKind::reaction_diffusion) u.front() = u.back() = 0.0;
  r.states = u;
  auto write_log = [&](std::size_t k, double action_norm) {
    if (!log) return;
    double err = 0.0;
    for (std::size_t i = 0; i < f; ++i) err += std::pow(u[i] - task.target[i], 2);
    Json line{{"frame", k},
              {"t", static_cast<double>(k) * g.coarse_dt()},
              {"state_hash", Fnv1a().bytes(u.data(), u.size() * sizeof(double)).digest()},
              {"action_norm", action_norm},
              {"tracking_error", std::sqrt(err * g.cell_volume())}};
    *log << line.dump() << '\n';
  };
  for (std::size_t k = 0; k < steps; ++k) {
    const auto t0 = Clock::now();
    const Tensor a = policy.act(Tensor({1, f}, u), target, static_cast<double>(k) * g.coarse_dt());
    const double infer = seconds_since(t0);
    r.inference_seconds += infer;
    const auto action = a.to_vector();
    double norm = 0.0;
    for (double v : action) norm += v * v;
    write_log(k, std::sqrt(norm * g.cell_volume()));
    sim.advance(u, action, noise, k);
    r.forcing.insert(r.forcing.end(), action.begin(), action.end());
    r.states.insert(r.states.end(), u.begin(), u.end());
    r.step_seconds.push_back(seconds_since(t0));
  }
  write_log(steps, 0.0);
  r.metrics = tracking_metrics(g, r.states, r.forcing, task.target, task.alpha);
  return r;
}

ControlLoopResult run_open_loop(const Problem& environment, const TrackingTask& task,
                                const std::vector<double>& forcing) {
  const auto t0 = Clock::now();
  const Trajectory traj = simulate(environment, task.u0, forcing, task.seed);
  ControlLoopResult r;
  r.states = traj.states;
  r.forcing = traj.forcing;
  r.step_seconds.push_back(seconds_since(t0));
  r.metrics = tracking_metrics(environment.grid, r.states, r.forcing, task.target, task.alpha);
  return r;
}

// ---------------------------------------------------------------------------

void save_policy(const std::string& path, const PolicyNet& policy) {
  Checkpoint ckpt;
  ckpt.section = "PLCY";
  ckpt.spec_hash = policy.spec_hash();
  ckpt.metadata = Json{{"problem", to_json(policy.problem())},
                       {"policy", to_json(policy.config())},
                       {"input_scale", policy.input_scale()}}
                      .dump();
  ckpt.tensors = policy.params().list();
  save_checkpoint(path, ckpt);
}

std::unique_ptr<PolicyNet> load_policy(const std::string& path) {
  const Checkpoint ckpt = load_checkpoint(path);
  if (ckpt.section != "PLCY") throw FormatError(path + ": section '" + ckpt.section + "' is not a policy");
  Json meta;
  try {
    meta = Json::parse(ckpt.metadata);
  } catch (const Json::parse_error&) {
    throw FormatError(path + ": metadata is not valid JSON");
  }
  auto policy = std::make_unique<PolicyNet>(problem_from_json(meta.at("problem"), "/problem"),
                                            policy_config_from_json(meta.at("policy"), "/policy"));
  if (policy->spec_hash() != ckpt.spec_hash) throw FormatError(path + ": spec hash does not match metadata");
  restore_params(policy->params(), ckpt);
  policy->set_input_scale(meta.at("input_scale").get<std::vector<double>>());
  return policy;
}

}  // namespace spdectl
