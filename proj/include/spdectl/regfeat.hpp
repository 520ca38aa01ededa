#pragma once

#include <memory>
#include <string>
#include <vector>

#include "spdectl/grid.hpp"
#include "spdectl/ops.hpp"

namespace spdectl {

/// How the forcing enters the feature grammar.
///   combined: one leaf f~ (the caller passes f + sigma xi), budget l.
///   split:    a deterministic leaf f with budget m and a noise leaf xi with
///             budget l, matching the separate I[f] and I[u^k xi] sums of the
///             mild-solution expansion.
enum class ForcingMode { combined, split };

std::string to_string(ForcingMode mode);
ForcingMode forcing_mode_from_string(const std::string& name);

struct FeatureSpec {
  int n = 2;  // Picard rounds
  int m = 2;  // product budget without a forcing factor
  int l = 1;  // product budget with the noise / combined forcing factor
  ForcingMode forcing = ForcingMode::split;
  bool derivatives = true;  // include first-derivative factors (both axes in 2-D)
  std::size_t max_features = 256;

  void validate() const;
  bool operator==(const FeatureSpec&) const = default;
};

enum class Leaf { none, combined, force, noise };

struct FeatureFactor {
  std::size_t feature = 0;  // index into the term list
  int axis = -1;            // -1: the feature itself, otherwise d/dx_axis
  bool operator==(const FeatureFactor&) const = default;
};

/// s^in, or I[leaf * prod factors].
struct FeatureTerm {
  bool initial = false;
  Leaf leaf = Leaf::none;
  std::vector<FeatureFactor> factors;
  int round = 0;
  std::string key;  // canonical: factor keys sorted, leaf last, e.g. "I[s*s*xi]"
};

/// Deduplicated term list ordered by (round introduced, key); s^in first.
/// Throws std::length_error when the count exceeds spec.max_features.
std::vector<FeatureTerm> enumerate_terms(const FeatureSpec& spec, int dim = 1);

/// d/dx_axis applied to every trailing field of `x`.
Tensor spatial_derivative(const Tensor& x, const Grid& grid, int axis = 0);

/// Numeric evaluation of the term list on one grid.
///
/// All fields use the recursion I[z]_{k+1} = P (I[z]_k + dt z_k) with
/// P = (Id - dt L)^{-1}, starting from I[z]_0 = 0, and s^in_{k+1} = P s^in_k.
class FeatureBlock {
 public:
  FeatureBlock(FeatureSpec spec, Grid grid, const DiscreteOperator& op, double dt);

  const FeatureSpec& spec() const { return spec_; }
  const Grid& grid() const { return grid_; }
  const std::vector<FeatureTerm>& terms() const { return terms_; }
  std::size_t size() const { return terms_.size(); }
  double dt() const { return dt_; }
  std::shared_ptr<const Propagator> propagator() const { return prop_; }

  /// s^in over `steps` steps: u0 [B, F] -> [B, steps+1, F].
  Tensor initial_feature(const Tensor& u0, std::size_t steps) const;

  /// All features over `steps` steps.
  ///   u0:      [B, F]
  ///   forcing: [B, steps, F]  f~ (combined) or f (split); undefined = 0
  ///   noise:   [B, steps, F]  xi (split only); undefined = 0
  /// Returns [B, N_S, steps+1, F]. Differentiable in u0, forcing and noise.
  Tensor evaluate(const Tensor& u0, const Tensor& forcing, const Tensor& noise, std::size_t steps) const;

  /// Features at the last time level only: [B, N_S, F].
  Tensor evaluate_final(const Tensor& u0, const Tensor& forcing, const Tensor& noise, std::size_t steps) const;

 private:
  std::vector<Tensor> fields(const Tensor& u0, const Tensor& forcing, const Tensor& noise,
                             std::size_t steps) const;

  FeatureSpec spec_;
  Grid grid_;
  double dt_;
  std::shared_ptr<const Propagator> prop_;
  std::vector<std::shared_ptr<const DerivativeOperator>> deriv_;
  std::vector<FeatureTerm> terms_;
};

/// Frames 0, stride, 2*stride, ... of a [B, N, S+1, F] feature tensor.
Tensor sample_frames(const Tensor& features, std::size_t stride);

}  // namespace spdectl
