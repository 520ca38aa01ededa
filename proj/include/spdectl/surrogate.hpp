#pragma once

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "spdectl/nn.hpp"
#include "spdectl/regfeat.hpp"
#include "spdectl/solver.hpp"

namespace spdectl {

enum class BackboneKind { none, conv, spectral };

std::string to_string(BackboneKind kind);
BackboneKind backbone_from_string(const std::string& name);

struct SurrogateConfig {
  bool use_features = true;  // false: plain backbone on [u, f, dW] channels
  FeatureSpec features;
  BackboneKind backbone = BackboneKind::conv;
  std::size_t conv_width = 32;
  std::size_t conv_layers = 3;
  std::size_t kernel = 3;
  std::size_t spectral_width = 16;
  std::size_t spectral_layers = 2;
  std::size_t modes = 12;
  std::uint64_t seed = 0;

  bool operator==(const SurrogateConfig&) const = default;
};

/// One transition u_t -> u_{t+1} over a coarse interval plus reconstructions
/// of the inputs u_t and f_t. All tensors are [B, F].
struct StepOutput {
  Tensor u_next;
  Tensor u_rec;
  Tensor f_rec;
  Tensor linear;  // theta . s^out for feature models, undefined otherwise
  Tensor residual;  // backbone contribution to u_next
};

/// Feature model: u_{t+1} = theta . s^out + W(s^out / scale, coords).
/// Plain model:   u_{t+1} = W([u, f, dW] / scale, coords).
/// Backbone outputs three channels (u_{t+1} part, u_t, f_t); on Dirichlet
/// grids all outputs are masked to zero at the boundary.
class SurrogateModel {
 public:
  SurrogateModel(Problem problem, SurrogateConfig config);

  const Problem& problem() const { return problem_; }
  const SurrogateConfig& config() const { return config_; }
  const Grid& grid() const { return problem_.grid; }
  nn::ParamStore& params() { return params_; }
  const nn::ParamStore& params() const { return params_; }
  const FeatureBlock* features() const { return block_.get(); }

  /// Channel count of model_inputs.
  std::size_t input_channels() const;

  /// u, f: [B, F]; xi: [B, substeps, F] raw noise over the interval.
  /// Feature models: s^out at the interval end, [B, N_S, F].
  /// Plain models: [B, 3, F] with channels u, f, sum(xi) * dt_fine.
  Tensor model_inputs(const Tensor& u, const Tensor& f, const Tensor& xi) const;

  /// Head on precomputed inputs. `intervals` gives each sample's coarse
  /// interval for the time channel (one entry applies to the whole batch).
  StepOutput head(const Tensor& inputs, std::span<const std::size_t> intervals) const;

  StepOutput step(const Tensor& u, const Tensor& f, const Tensor& xi, std::size_t interval) const;

  /// u0 [B, F], forcing [B, K-1, F], noise [B, fine_steps, F] -> [B, K, F].
  Tensor rollout(const Tensor& u0, const Tensor& forcing, const Tensor& noise) const;

  /// Per-channel input scaling (1 / rms); identity until set.
  const std::vector<double>& input_scale() const { return input_scale_; }
  void set_input_scale(std::vector<double> scale);

  /// Hash of problem + architecture, stored in checkpoints.
  std::uint64_t spec_hash() const;

 private:
  Tensor coordinates(std::size_t batch, std::span<const std::size_t> intervals) const;

  Problem problem_;
  SurrogateConfig config_;
  nn::ParamStore params_;
  std::unique_ptr<FeatureBlock> block_;
  Tensor theta_;
  nn::ConvBackbone conv_;
  nn::SpectralBackbone spectral_;
  std::vector<double> input_scale_;
  Tensor mask_;  // [F], 0 at Dirichlet boundary
};

struct TrainConfig {
  double lr = 1e-3;
  double final_lr_fraction = 0.1;  // cosine decay floor
  std::size_t batch_size = 64;
  std::size_t epochs = 30;
  double warmup_fraction = 0.2;
  double quantile = 0.8;
  int duplication = 1;
  double transition_weight = 1.0;
  double reconstruction_weight = 0.5;
  std::uint64_t seed = 0;

  void validate() const;
  bool operator==(const TrainConfig&) const = default;
};

/// Single-step training pairs with precomputed model inputs.
struct PairSet {
  std::size_t channels = 0, field = 0;
  std::vector<double> inputs;  // [P, C, F]
  std::vector<double> u, f, u_next;  // [P, F]
  std::vector<std::size_t> interval;
  std::size_t size() const { return interval.size(); }
};

PairSet build_pairs(const SurrogateModel& model, const Dataset& data, std::size_t threads = 0);

/// Sets the model's input scale from pair statistics.
void fit_input_scale(SurrogateModel& model, const PairSet& pairs);

struct EpochRecord {
  std::size_t epoch = 0;
  double loss = 0.0;
  double lr = 0.0;
  std::size_t samples = 0;
};

struct TrainResult {
  std::vector<EpochRecord> curve;
  std::size_t augmented = 0;  // duplicated sample count
  double seconds = 0.0;
};

/// Weighted loss for a batch of pairs (transition + reconstructions).
Tensor pair_loss(const SurrogateModel& model, const PairSet& pairs, std::span<const std::size_t> idx,
                 const TrainConfig& cfg);

/// Per-sample losses, used by the augmentation step.
std::vector<double> per_sample_loss(const SurrogateModel& model, const PairSet& pairs, const TrainConfig& cfg);

TrainResult train_surrogate(SurrogateModel& model, const Dataset& data, const TrainConfig& cfg,
                            std::size_t threads = 0);
TrainResult train_surrogate(SurrogateModel& model, const PairSet& pairs, const TrainConfig& cfg);

void write_loss_csv(const std::string& path, const std::vector<EpochRecord>& curve);

/// Relative L2 components: mean over trajectories of ||pred - true|| / ||true||.
struct ErrorReport {
  double f_recon = 0.0;
  double u0_recon = 0.0;
  double u1 = 0.0;
  double prediction = 0.0;
  double sum() const { return f_recon + u0_recon + u1 + prediction; }
};

/// Scores arrays laid out like the test set: f, f_hat, u0, u0_hat [T, F];
/// u1, u1_hat [T, F]; traj, traj_hat [T, K-1, F] (frames 1..K-1).
ErrorReport score_predictions(std::size_t field, const std::vector<double>& f, const std::vector<double>& f_hat,
                              const std::vector<double>& u0, const std::vector<double>& u0_hat,
                              const std::vector<double>& u1, const std::vector<double>& u1_hat,
                              const std::vector<double>& traj, const std::vector<double>& traj_hat);

ErrorReport evaluate_model(const SurrogateModel& model, const Dataset& test, std::size_t threads = 0);

double relative_l2(std::span<const double> pred, std::span<const double> truth);

void save_model(const std::string& path, const SurrogateModel& model);
std::unique_ptr<SurrogateModel> load_model(const std::string& path);

}  // namespace spdectl
