#pragma once

#include <iosfwd>
#include <memory>
#include <string>
#include <vector>

#include "spdectl/nn.hpp"
#include "spdectl/surrogate.hpp"

namespace spdectl {

/// One tracking problem: drive u from `u0` towards the fixed target and hold it
/// there, paying `alpha` per unit of forcing norm.
struct TrackingTask {
  std::vector<double> u0;
  std::vector<double> target;
  double alpha = 0.01;
  std::size_t noise_samples = 50;  // N in the training and planning objectives
  std::uint64_t seed = 0;          // environment noise seed at evaluation
};

/// e = e_track + e_energy for one realized trajectory.
struct TrackingMetrics {
  double total = 0.0;
  double track = 0.0;
  double energy = 0.0;
};

/// Discrete norms: ||u - u*|| over frames 1..K-1 and ||f|| over all K-1
/// slices, each weighted by dt_coarse * eps^d. states [K, F], forcing [K-1, F].
TrackingMetrics tracking_metrics(const Grid& grid, std::span<const double> states, std::span<const double> forcing,
                                 std::span<const double> target, double alpha);

/// Differentiable batch mean of the same objective.
///   states [B, K, F], forcing [B, K-1, F], target [B, F].
Tensor tracking_loss(const Grid& grid, const Tensor& states, const Tensor& forcing, const Tensor& target, double alpha);

struct PolicyConfig {
  std::vector<std::size_t> hidden{2048, 1024, 1024};
  nn::Activation activation = nn::Activation::relu;
  double output_scale = 1.0;
  double action_bound = 0.0;  // > 0: actions pass through bound * tanh(a / bound)
  std::uint64_t seed = 0;

  bool operator==(const PolicyConfig&) const = default;
};

/// (u_t, L u_t, u_T, L u_T, t) for a batch. u, target [B, F] -> [B, 4F + 1].
Tensor encode_state(const Grid& grid, const DiscreteOperator& op, const Tensor& u, const Tensor& target, double t);

/// Feedforward controller on the operator-encoded state. The last layer starts
/// at zero, so a fresh policy applies no forcing.
class PolicyNet {
 public:
  PolicyNet(Problem problem, PolicyConfig config);

  const Problem& problem() const { return problem_; }
  const Grid& grid() const { return problem_.grid; }
  const PolicyConfig& config() const { return config_; }
  nn::ParamStore& params() { return params_; }
  const nn::ParamStore& params() const { return params_; }
  std::size_t input_width() const { return 4 * grid().field_size() + 1; }

  Tensor encode(const Tensor& u, const Tensor& target, double t) const;

  /// Action f_t [B, F] at physical time t. Differentiable in the parameters and u.
  Tensor act(const Tensor& u, const Tensor& target, double t) const;

  /// Scale per encoded block (u, Lu, u*, Lu*); identity until fitted.
  const std::vector<double>& input_scale() const { return input_scale_; }
  void set_input_scale(std::vector<double> scale);
  /// 1 / rms of each block over the tasks' initial and target fields.
  void fit_input_scale(const std::vector<TrackingTask>& tasks);

  std::uint64_t spec_hash() const;

 private:
  Problem problem_;
  PolicyConfig config_;
  DiscreteOperator op_;
  nn::ParamStore params_;
  nn::Mlp mlp_;
  std::vector<double> input_scale_;
  Tensor mask_;
};

/// Rolls the surrogate forward under policy actions.
///   u0, target [B, F]; noise [B, fine_steps, F] raw xi.
/// Returns states [B, K, F] and actions [B, K-1, F].
struct PolicyRollout {
  Tensor states;
  Tensor forcing;
};
PolicyRollout policy_rollout(const PolicyNet& policy, const SurrogateModel& model, const Tensor& u0,
                             const Tensor& target, const Tensor& noise);

/// Objective over B tasks x N noise draws; rows of `noise` are ordered task-major.
Tensor policy_loss(const PolicyNet& policy, const SurrogateModel& model, const Tensor& u0, const Tensor& target,
                   const Tensor& noise, double alpha);

/// [count, fine_steps, F] unscaled model noise drawn from `seed`.
Tensor sample_model_noise(const Problem& problem, std::size_t count, std::uint64_t seed);

struct PolicyTrainConfig {
  double lr = 5e-4;
  double final_lr_fraction = 0.1;
  std::size_t batch_size = 100;
  std::size_t epochs = 128;
  std::size_t noise_samples = 50;
  double alpha = 0.01;
  std::uint64_t seed = 0;

  void validate() const;
  bool operator==(const PolicyTrainConfig&) const = default;
};

struct PolicyTrainResult {
  std::vector<EpochRecord> curve;
  double seconds = 0.0;
};

/// Minimizes policy_loss over the task pool. The surrogate is frozen (its
/// parameters stop requiring gradients) and noise is drawn fresh per batch.
PolicyTrainResult train_policy(PolicyNet& policy, const SurrogateModel& model, const std::vector<TrackingTask>& pool,
                               const PolicyTrainConfig& cfg);

struct OpenLoopConfig {
  std::size_t iterations = 200;
  double lr = 0.1;
  std::uint64_t seed = 0;

  bool operator==(const OpenLoopConfig&) const = default;
};

struct OpenLoopPlan {
  std::vector<double> forcing;       // [K-1, F], the best iterate
  double objective = 0.0;            // surrogate objective of `forcing`
  std::vector<double> best_history;  // best objective after each iteration
  bool improved = false;             // false: nothing beat the zero plan
  double seconds = 0.0;
};

/// Adam on the forcing itself, through the surrogate, with the task's N noise
/// draws fixed for the whole run. Freezes the surrogate.
OpenLoopPlan open_loop_optimize(const SurrogateModel& model, const TrackingTask& task, const OpenLoopConfig& cfg);

/// Picks the step size with the lowest mean planned objective over `tasks`.
double select_open_loop_lr(const SurrogateModel& model, const std::vector<TrackingTask>& tasks,
                           const std::vector<double>& lrs, OpenLoopConfig cfg);

struct ControlLoopResult {
  std::vector<double> states;   // [K, F] environment states
  std::vector<double> forcing;  // [K-1, F] applied actions
  std::vector<double> step_seconds;
  double inference_seconds = 0.0;  // policy forward passes only
  TrackingMetrics metrics;
};

/// Closed loop against the reference solver. The environment noise is
/// problem_noise(environment, task.seed), never shown to the policy. When `log`
/// is given, one JSON line per frame is written.
ControlLoopResult run_closed_loop(const PolicyNet& policy, const Problem& environment, const TrackingTask& task,
                                  std::ostream* log = nullptr);

/// Applies a fixed forcing schedule in the environment.
ControlLoopResult run_open_loop(const Problem& environment, const TrackingTask& task,
                                const std::vector<double>& forcing);

void save_policy(const std::string& path, const PolicyNet& policy);
std::unique_ptr<PolicyNet> load_policy(const std::string& path);

}  // namespace spdectl
