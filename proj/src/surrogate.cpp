#include "spdectl/surrogate.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <numbers>

#include "spdectl/binary_io.hpp"
#include "spdectl/checkpoint.hpp"
#include "spdectl/config.hpp"
#include "spdectl/hash.hpp"
#include "spdectl/optim.hpp"
#include "spdectl/parallel.hpp"

namespace spdectl {

std::string to_string(BackboneKind kind) {
  switch (kind) {
    case BackboneKind::none:
      return "none";
    case BackboneKind::spectral:
      return "spectral";
    case BackboneKind::conv:
      break;
  }
  return "conv";
}

BackboneKind backbone_from_string(const std::string& name) {
  if (name == "none") return BackboneKind::none;
  if (name == "conv" || name == "cnn") return BackboneKind::conv;
  if (name == "spectral" || name == "fno") return BackboneKind::spectral;
  throw std::invalid_argument("unknown backbone '" + name + "'");
}

// ---------------------------------------------------------------------------

SurrogateModel::SurrogateModel(Problem problem, SurrogateConfig config)
    : problem_(std::move(problem)), config_(std::move(config)) {
  problem_.validate();
  const Grid& g = problem_.grid;
  const std::size_t f = g.field_size();
  std::size_t channels = 3;
  if (config_.use_features) {
    block_ = std::make_unique<FeatureBlock>(config_.features, g, grid_operator(g, problem_.nu), g.fine_dt());
    channels = block_->size();
    std::vector<double> theta(channels, 0.0);
    theta[0] = 1.0;  // start from the linear propagation of u_t
    theta_ = params_.add("theta", Tensor({channels}, std::move(theta), true));
  } else if (config_.backbone == BackboneKind::none) {
    throw std::invalid_argument("a plain model needs a backbone");
  }
  input_scale_.assign(channels, 1.0);

  CounterRng rng(derive_seed(config_.seed, 0xB0B));
  const std::size_t in = channels + static_cast<std::size_t>(g.dim) + 1;
  const Padding pad = g.bc == Boundary::periodic ? Padding::periodic : Padding::zero;
  if (config_.backbone == BackboneKind::conv) {
    conv_ = nn::ConvBackbone(in, 3, config_.conv_width, config_.conv_layers, config_.kernel, g.dim, pad, rng, params_,
                             "backbone");
  } else if (config_.backbone == BackboneKind::spectral) {
    const std::size_t cap = g.dim == 1 ? g.n / 2 + 1 : g.n / 2;
    spectral_ = nn::SpectralBackbone(in, 3, config_.spectral_width, config_.spectral_layers,
                                     std::min(config_.modes, cap), g.dim, rng, params_, "backbone");
  }
  std::vector<double> mask(f, 1.0);
  if (g.bc == Boundary::dirichlet_zero) mask.front() = mask.back() = 0.0;
  mask_ = Tensor({f}, std::move(mask));
}

std::size_t SurrogateModel::input_channels() const { return input_scale_.size(); }

void SurrogateModel::set_input_scale(std::vector<double> scale) {
  if (scale.size() != input_scale_.size()) throw std::invalid_argument("input scale size mismatch");
  input_scale_ = std::move(scale);
}

Tensor SurrogateModel::model_inputs(const Tensor& u, const Tensor& f, const Tensor& xi) const {
  const Grid& g = grid();
  const std::size_t fs = g.field_size(), sub = g.substeps();
  if (u.dim() != 2 || u.size(1) != fs) throw std::invalid_argument("model_inputs: u must be [B, F]");
  const std::size_t b = u.size(0);
  if (f.shape() != Shape{b, fs}) throw std::invalid_argument("model_inputs: f must be [B, F]");
  if (xi.shape() != Shape{b, sub, fs}) {
    throw std::invalid_argument("model_inputs: xi must be " + shape_str({b, sub, fs}) + ", got " + shape_str(xi.shape()));
  }
  if (block_) {
    const Tensor f_fine = add(Tensor::zeros({b, sub, fs}), reshape(f, {b, 1, fs}));
    if (config_.features.forcing == ForcingMode::combined) {
      return block_->evaluate_final(u, add(f_fine, scale(xi, problem_.sigma)), Tensor(), sub);
    }
    return block_->evaluate_final(u, f_fine, xi, sub);
  }
  const Tensor dw = scale(sum_axis(xi, 1), g.fine_dt());
  return concat({reshape(u, {b, 1, fs}), reshape(f, {b, 1, fs}), reshape(dw, {b, 1, fs})}, 1);
}

Tensor SurrogateModel::coordinates(std::size_t batch, std::span<const std::size_t> intervals) const {
  const Grid& g = grid();
  const std::size_t fs = g.field_size(), c = static_cast<std::size_t>(g.dim) + 1;
  const auto x = g.axis_coords();
  std::vector<double> v(batch * c * fs);
  for (std::size_t b = 0; b < batch; ++b) {
    const std::size_t k = intervals.size() == 1 ? intervals[0] : intervals[b];
    const double t = static_cast<double>(k) * g.coarse_dt() / g.horizon;
    double* base = v.data() + b * c * fs;
    for (std::size_t i = 0; i < fs; ++i) {
      if (g.dim == 1) {
        base[i] = x[i] / g.length;
      } else {
        base[i] = x[i / g.n] / g.length;
        base[fs + i] = x[i % g.n] / g.length;
      }
      base[(c - 1) * fs + i] = t;
    }
  }
  return Tensor({batch, c, fs}, std::move(v));
}

StepOutput SurrogateModel::head(const Tensor& inputs, std::span<const std::size_t> intervals) const {
  const Grid& g = grid();
  const std::size_t fs = g.field_size(), ch = input_channels();
  if (inputs.dim() != 3 || inputs.size(1) != ch || inputs.size(2) != fs) {
    throw std::invalid_argument("head: inputs must be [B, " + std::to_string(ch) + ", " + std::to_string(fs) +
                                "], got " + shape_str(inputs.shape()));
  }
  const std::size_t b = inputs.size(0);
  if (intervals.size() != 1 && intervals.size() != b) throw std::invalid_argument("head: interval count mismatch");
  StepOutput out;
  if (block_) out.linear = sum_axis(mul(inputs, reshape(theta_, {ch, 1})), 1);
  if (config_.backbone == BackboneKind::none) {
    out.residual = Tensor::zeros({b, fs});
    out.u_rec = Tensor::zeros({b, fs});
    out.f_rec = Tensor::zeros({b, fs});
  } else {
    const Tensor scaled = mul(inputs, Tensor({ch, 1}, input_scale_));
    const Tensor x = concat({scaled, coordinates(b, intervals)}, 1);
    const std::size_t cin = x.size(1);
    Shape spatial = g.dim == 1 ? Shape{b, cin, g.n} : Shape{b, cin, g.n, g.n};
    const Tensor y = config_.backbone == BackboneKind::conv ? conv_.forward(reshape(x, spatial))
                                                            : spectral_.forward(reshape(x, spatial));
    const Tensor masked = mul(reshape(y, {b, 3, fs}), mask_);
    out.residual = reshape(slice(masked, 1, 0, 1), {b, fs});
    out.u_rec = reshape(slice(masked, 1, 1, 1), {b, fs});
    out.f_rec = reshape(slice(masked, 1, 2, 1), {b, fs});
  }
  out.u_next = block_ ? add(out.linear, out.residual) : out.residual;
  return out;
}

StepOutput SurrogateModel::step(const Tensor& u, const Tensor& f, const Tensor& xi, std::size_t interval) const {
  const std::size_t k[1] = {interval};
  return head(model_inputs(u, f, xi), k);
}

Tensor SurrogateModel::rollout(const Tensor& u0, const Tensor& forcing, const Tensor& noise) const {
  const Grid& g = grid();
  const std::size_t fs = g.field_size(), sub = g.substeps(), steps = g.frames - 1;
  const std::size_t b = u0.size(0);
  if (forcing.shape() != Shape{b, steps, fs}) throw std::invalid_argument("rollout: forcing must be [B, K-1, F]");
  if (noise.shape() != Shape{b, g.fine_steps, fs}) throw std::invalid_argument("rollout: noise must be [B, fine, F]");
  std::vector<Tensor> frames{reshape(u0, {b, 1, fs})};
  Tensor u = u0;
  for (std::size_t k = 0; k < steps; ++k) {
    const Tensor fk = reshape(slice(forcing, 1, k, 1), {b, fs});
    const Tensor xk = slice(noise, 1, k * sub, sub);
    u = step(u, fk, xk, k).u_next;
    frames.push_back(reshape(u, {b, 1, fs}));
  }
  return concat(frames, 1);
}

std::uint64_t SurrogateModel::spec_hash() const {
  return Fnv1a().text(to_json(problem_).dump()).text(to_json(config_).dump()).digest();
}

// ---------------------------------------------------------------------------

void TrainConfig::validate() const {
  if (!(lr > 0.0)) throw std::invalid_argument("lr must be positive");
  if (batch_size == 0) throw std::invalid_argument("batch_size must be positive");
  if (!(quantile > 0.0 && quantile < 1.0)) throw std::invalid_argument("quantile must lie in (0, 1)");
  if (duplication < 0) throw std::invalid_argument("duplication must be >= 0");
  if (warmup_fraction < 0.0 || warmup_fraction > 1.0) throw std::invalid_argument("warmup_fraction must lie in [0, 1]");
  if (final_lr_fraction < 0.0 || final_lr_fraction > 1.0) throw std::invalid_argument("final_lr_fraction must lie in [0, 1]");
}

PairSet build_pairs(const SurrogateModel& model, const Dataset& data, std::size_t threads) {
  const Grid& g = model.grid();
  if (!(data.problem.grid == g)) throw std::invalid_argument("build_pairs: dataset grid does not match the model");
  const std::size_t fs = g.field_size(), steps = g.frames - 1, sub = g.substeps();
  const std::size_t ch = model.input_channels();
  PairSet ps;
  ps.channels = ch;
  ps.field = fs;
  const std::size_t total = data.size() * steps;
  ps.inputs.resize(total * ch * fs);
  ps.u.resize(total * fs);
  ps.f.resize(total * fs);
  ps.u_next.resize(total * fs);
  ps.interval.resize(total);
  parallel_for(
      data.size(),
      [&](std::size_t t) {
        const auto& traj = data.trajectories[t];
        const auto noise = problem_noise(data.problem, traj.seed);
        std::vector<double> u(traj.states.begin(), traj.states.begin() + static_cast<long>(steps * fs));
        const Tensor inputs = model.model_inputs(Tensor({steps, fs}, u), Tensor({steps, fs}, traj.forcing),
                                                 Tensor({steps, sub, fs}, noise.values));
        const std::size_t p0 = t * steps;
        std::copy(inputs.values().begin(), inputs.values().end(), ps.inputs.begin() + static_cast<long>(p0 * ch * fs));
        std::copy(u.begin(), u.end(), ps.u.begin() + static_cast<long>(p0 * fs));
        std::copy(traj.forcing.begin(), traj.forcing.end(), ps.f.begin() + static_cast<long>(p0 * fs));
        std::copy(traj.states.begin() + static_cast<long>(fs), traj.states.end(),
                  ps.u_next.begin() + static_cast<long>(p0 * fs));
        for (std::size_t k = 0; k < steps; ++k) ps.interval[p0 + k] = k;
      },
      threads);
  return ps;
}

void fit_input_scale(SurrogateModel& model, const PairSet& pairs) {
  const std::size_t ch = pairs.channels, fs = pairs.field;
  std::vector<double> sq(ch, 0.0);
  for (std::size_t p = 0; p < pairs.size(); ++p) {
    for (std::size_t c = 0; c < ch; ++c) {
      const double* v = pairs.inputs.data() + (p * ch + c) * fs;
      for (std::size_t i = 0; i < fs; ++i) sq[c] += v[i] * v[i];
    }
  }
  std::vector<double> scale(ch, 1.0);
  const double n = static_cast<double>(pairs.size() * fs);
  for (std::size_t c = 0; c < ch; ++c) {
    const double rms = std::sqrt(sq[c] / n);
    if (rms > 1e-12) scale[c] = 1.0 / rms;
  }
  model.set_input_scale(std::move(scale));
}

namespace {

struct Batch {
  Tensor inputs, u, f, u_next;
  std::vector<std::size_t> interval;
};

Batch gather(const PairSet& ps, std::span<const std::size_t> idx) {
  const std::size_t b = idx.size(), ch = ps.channels, fs = ps.field;
  std::vector<double> in(b * ch * fs), u(b * fs), f(b * fs), un(b * fs);
  Batch out;
  for (std::size_t j = 0; j < b; ++j) {
    const std::size_t p = idx[j];
    std::copy_n(ps.inputs.data() + p * ch * fs, ch * fs, in.data() + j * ch * fs);
    std::copy_n(ps.u.data() + p * fs, fs, u.data() + j * fs);
    std::copy_n(ps.f.data() + p * fs, fs, f.data() + j * fs);
    std::copy_n(ps.u_next.data() + p * fs, fs, un.data() + j * fs);
    out.interval.push_back(ps.interval[p]);
  }
  out.inputs = Tensor({b, ch, fs}, std::move(in));
  out.u = Tensor({b, fs}, std::move(u));
  out.f = Tensor({b, fs}, std::move(f));
  out.u_next = Tensor({b, fs}, std::move(un));
  return out;
}

Tensor mse(const Tensor& a, const Tensor& b) { return mean(square(sub(a, b))); }

}  // namespace

Tensor pair_loss(const SurrogateModel& model, const PairSet& pairs, std::span<const std::size_t> idx,
                 const TrainConfig& cfg) {
  const Batch batch = gather(pairs, idx);
  const StepOutput out = model.head(batch.inputs, batch.interval);
  Tensor loss = scale(mse(out.u_next, batch.u_next), cfg.transition_weight);
  if (model.config().backbone != BackboneKind::none && cfg.reconstruction_weight != 0.0) {
    loss = add(loss, scale(add(mse(out.u_rec, batch.u), mse(out.f_rec, batch.f)), cfg.reconstruction_weight));
  }
  return loss;
}

std::vector<double> per_sample_loss(const SurrogateModel& model, const PairSet& pairs, const TrainConfig& cfg) {
  const std::size_t fs = pairs.field;
  const bool recon = model.config().backbone != BackboneKind::none && cfg.reconstruction_weight != 0.0;
  std::vector<double> out(pairs.size());
  const std::size_t chunk = 256;
  for (std::size_t start = 0; start < pairs.size(); start += chunk) {
    const std::size_t end = std::min(pairs.size(), start + chunk);
    std::vector<std::size_t> idx(end - start);
    for (std::size_t j = 0; j < idx.size(); ++j) idx[j] = start + j;
    const Batch batch = gather(pairs, idx);
    const StepOutput o = model.head(batch.inputs, batch.interval);
    for (std::size_t j = 0; j < idx.size(); ++j) {
      double a = 0.0, b = 0.0, c = 0.0;
      for (std::size_t i = 0; i < fs; ++i) {
        const std::size_t q = j * fs + i;
        a += std::pow(o.u_next.at(q) - batch.u_next.at(q), 2);
        if (recon) {
          b += std::pow(o.u_rec.at(q) - batch.u.at(q), 2);
          c += std::pow(o.f_rec.at(q) - batch.f.at(q), 2);
        }
      }
      const double n = static_cast<double>(fs);
      out[start + j] = cfg.transition_weight * a / n + cfg.reconstruction_weight * (b + c) / n;
    }
  }
  return out;
}

TrainResult train_surrogate(SurrogateModel& model, const PairSet& pairs, const TrainConfig& cfg) {
  cfg.validate();
  if (pairs.size() == 0) throw std::invalid_argument("train_surrogate: no training pairs");
  const auto t0 = std::chrono::steady_clock::now();
  model.params().set_requires_grad(true);
  std::vector<Tensor> params = model.params().tensors();
  AdamState state = make_adam_state(params, AdamOptions{cfg.lr});
  CounterRng rng(derive_seed(cfg.seed, 0x7EA1));
  std::vector<std::size_t> order(pairs.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  const auto warmup = static_cast<std::size_t>(std::lround(cfg.warmup_fraction * static_cast<double>(cfg.epochs)));

  TrainResult result;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    if (epoch == warmup && epoch > 0 && cfg.duplication > 0) {
      const auto losses = per_sample_loss(model, pairs, cfg);
      std::vector<double> sorted = losses;
      const auto qi = static_cast<std::size_t>(cfg.quantile * static_cast<double>(sorted.size() - 1));
      std::nth_element(sorted.begin(), sorted.begin() + static_cast<long>(qi), sorted.end());
      const double threshold = sorted[qi];
      for (std::size_t i = 0; i < losses.size(); ++i) {
        if (losses[i] > threshold) {
          for (int d = 0; d < cfg.duplication; ++d) order.push_back(i);
          result.augmented += static_cast<std::size_t>(cfg.duplication);
        }
      }
    }
    // Fisher-Yates
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
    const double progress = cfg.epochs > 1 ? static_cast<double>(epoch) / static_cast<double>(cfg.epochs - 1) : 0.0;
    state.options.lr =
        cfg.lr * (cfg.final_lr_fraction + (1.0 - cfg.final_lr_fraction) * 0.5 * (1.0 + std::cos(std::numbers::pi * progress)));
    double total = 0.0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), start + cfg.batch_size);
      std::span<const std::size_t> idx(order.data() + start, end - start);
      Tensor loss;
      try {
        zero_grads(params);
        loss = pair_loss(model, pairs, idx, cfg);
        backward(loss);
      } catch (const TensorError& e) {
        throw std::runtime_error("surrogate training diverged at epoch " + std::to_string(epoch) + ": " + e.what());
      }
      adam_step(params, state);
      total += loss.item() * static_cast<double>(idx.size());
    }
    result.curve.push_back({epoch, total / static_cast<double>(order.size()), state.options.lr, order.size()});
  }
  result.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return result;
}

TrainResult train_surrogate(SurrogateModel& model, const Dataset& data, const TrainConfig& cfg, std::size_t threads) {
  const PairSet pairs = build_pairs(model, data, threads);
  fit_input_scale(model, pairs);
  return train_surrogate(model, pairs, cfg);
}

void write_loss_csv(const std::string& path, const std::vector<EpochRecord>& curve) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write '" + path + "'");
  out.precision(10);
  out << "epoch,loss,lr,samples\n";
  for (const auto& r : curve) out << r.epoch << ',' << r.loss << ',' << r.lr << ',' << r.samples << '\n';
}

// ---------------------------------------------------------------------------

double relative_l2(std::span<const double> pred, std::span<const double> truth) {
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    num += (pred[i] - truth[i]) * (pred[i] - truth[i]);
    den += truth[i] * truth[i];
  }
  return den > 0.0 ? std::sqrt(num / den) : std::sqrt(num);
}

ErrorReport score_predictions(std::size_t field, const std::vector<double>& f, const std::vector<double>& f_hat,
                              const std::vector<double>& u0, const std::vector<double>& u0_hat,
                              const std::vector<double>& u1, const std::vector<double>& u1_hat,
                              const std::vector<double>& traj, const std::vector<double>& traj_hat) {
  const std::size_t count = f.size() / field;
  if (count == 0) throw std::invalid_argument("score_predictions: empty test set");
  const std::size_t tl = traj.size() / count;
  ErrorReport r;
  auto span_at = [](const std::vector<double>& v, std::size_t off, std::size_t len) {
    return std::span<const double>(v.data() + off, len);
  };
  for (std::size_t t = 0; t < count; ++t) {
    r.f_recon += relative_l2(span_at(f_hat, t * field, field), span_at(f, t * field, field));
    r.u0_recon += relative_l2(span_at(u0_hat, t * field, field), span_at(u0, t * field, field));
    r.u1 += relative_l2(span_at(u1_hat, t * field, field), span_at(u1, t * field, field));
    r.prediction += relative_l2(span_at(traj_hat, t * tl, tl), span_at(traj, t * tl, tl));
  }
  const double n = static_cast<double>(count);
  r.f_recon /= n;
  r.u0_recon /= n;
  r.u1 /= n;
  r.prediction /= n;
  return r;
}

ErrorReport evaluate_model(const SurrogateModel& model, const Dataset& test, std::size_t threads) {
  const Grid& g = model.grid();
  if (!(test.problem.grid == g)) throw std::invalid_argument("evaluate_model: dataset grid does not match the model");
  const std::size_t fs = g.field_size(), steps = g.frames - 1, sub = g.substeps(), count = test.size();
  std::vector<double> f(count * fs), f_hat(count * fs), u0(count * fs), u0_hat(count * fs), u1(count * fs),
      u1_hat(count * fs), traj(count * steps * fs), traj_hat(count * steps * fs);
  const std::size_t chunk = 32;
  const std::size_t chunks = (count + chunk - 1) / chunk;
  parallel_for(
      chunks,
      [&](std::size_t c) {
        const std::size_t begin = c * chunk, end = std::min(count, begin + chunk), b = end - begin;
        std::vector<double> bu0, bf, bnoise;
        for (std::size_t t = begin; t < end; ++t) {
          const auto& tr = test.trajectories[t];
          bu0.insert(bu0.end(), tr.states.begin(), tr.states.begin() + static_cast<long>(fs));
          bf.insert(bf.end(), tr.forcing.begin(), tr.forcing.end());
          const auto nz = problem_noise(test.problem, tr.seed);
          bnoise.insert(bnoise.end(), nz.values.begin(), nz.values.end());
        }
        const Tensor tu0({b, fs}, bu0), tf({b, steps, fs}, bf), tn({b, g.fine_steps, fs}, bnoise);
        const StepOutput first = model.step(tu0, reshape(slice(tf, 1, 0, 1), {b, fs}), slice(tn, 1, 0, sub), 0);
        const Tensor roll = model.rollout(tu0, tf, tn);
        for (std::size_t j = 0; j < b; ++j) {
          const std::size_t t = begin + j;
          const auto& tr = test.trajectories[t];
          std::copy_n(tr.forcing.data(), fs, f.data() + t * fs);
          std::copy_n(tr.states.data(), fs, u0.data() + t * fs);
          std::copy_n(tr.states.data() + fs, fs, u1.data() + t * fs);
          std::copy_n(tr.states.data() + fs, steps * fs, traj.data() + t * steps * fs);
          std::copy_n(first.f_rec.values().data() + j * fs, fs, f_hat.data() + t * fs);
          std::copy_n(first.u_rec.values().data() + j * fs, fs, u0_hat.data() + t * fs);
          std::copy_n(first.u_next.values().data() + j * fs, fs, u1_hat.data() + t * fs);
          std::copy_n(roll.values().data() + (j * (steps + 1) + 1) * fs, steps * fs, traj_hat.data() + t * steps * fs);
        }
      },
      threads);
  return score_predictions(fs, f, f_hat, u0, u0_hat, u1, u1_hat, traj, traj_hat);
}

// ---------------------------------------------------------------------------

void save_model(const std::string& path, const SurrogateModel& model) {
  Checkpoint ckpt;
  ckpt.section = "SURR";
  ckpt.spec_hash = model.spec_hash();
  Json meta{{"problem", to_json(model.problem())},
            {"surrogate", to_json(model.config())},
            {"input_scale", model.input_scale()}};
  ckpt.metadata = meta.dump();
  ckpt.tensors = model.params().list();
  save_checkpoint(path, ckpt);
}

std::unique_ptr<SurrogateModel> load_model(const std::string& path) {
  const Checkpoint ckpt = load_checkpoint(path);
  if (ckpt.section != "SURR") throw FormatError(path + ": section '" + ckpt.section + "' is not a surrogate model");
  Json meta;
  try {
    meta = Json::parse(ckpt.metadata);
  } catch (const Json::parse_error& e) {
    throw FormatError(path + ": metadata is not valid JSON");
  }
  auto model = std::make_unique<SurrogateModel>(problem_from_json(meta.at("problem"), "/problem"),
                                                surrogate_config_from_json(meta.at("surrogate"), "/surrogate"));
  if (model->spec_hash() != ckpt.spec_hash) throw FormatError(path + ": spec hash does not match metadata");
  restore_params(model->params(), ckpt);
  model->set_input_scale(meta.at("input_scale").get<std::vector<double>>());
  return model;
}

}  // namespace spdectl
