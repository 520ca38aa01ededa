#pragma once

// Tiny problems and models shared by the learning-component tests.

#include <random>

#include "spdectl/surrogate.hpp"

namespace spdectl::testing {

inline Problem small_rd(double sigma = 0.1) {
  Problem p = make_rd_problem(sigma);
  p.grid = make_rd_grid(16, 3, 8);
  return p;
}

inline Problem small_ns(double sigma = 0.1) {
  Problem p = make_ns_problem(sigma);
  p.grid = make_ns_grid(8, 3, 8);
  return p;
}

inline SurrogateConfig small_config(BackboneKind kind, bool features = true) {
  SurrogateConfig c;
  c.use_features = features;
  c.features.n = 1;
  c.features.m = 2;
  c.features.l = 1;
  c.features.forcing = ForcingMode::split;
  c.backbone = kind;
  c.conv_width = 6;
  c.conv_layers = 2;
  c.spectral_width = 4;
  c.spectral_layers = 1;
  c.modes = 4;
  c.seed = 7;
  return c;
}

/// Shifts every parameter by U(-amp, amp) so zero-started layers contribute.
inline void perturb(const nn::ParamStore& store, std::uint64_t seed, double amp = 0.1) {
  std::mt19937_64 gen(seed);
  std::uniform_real_distribution<double> d(-amp, amp);
  for (const auto& p : store.list()) {
    Tensor t = p.value;
    for (double& v : t.mutable_values()) v += d(gen);
  }
}

}  // namespace spdectl::testing
