#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "spdectl/grid.hpp"
#include "spdectl/noise.hpp"
#include "spdectl/rng.hpp"

namespace spdectl {

enum class ProblemKind { reaction_diffusion, navier_stokes };
enum class NoiseCoupling { multiplicative, additive };

std::string to_string(ProblemKind kind);
ProblemKind problem_kind_from_string(const std::string& name);

/// Thrown when a state becomes non-finite during integration.
class SolverError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// One SPDE setup. RD: du = (nu Lap u + c1 u - c3 u^3 + f + sigma g(u) xi) dt
/// with g(u) = u (multiplicative) or 1 (additive), zero Dirichlet boundary.
/// NS: vorticity dw = (nu Lap w - vel . grad w + f + sigma xi) dt on the
/// periodic unit square.
struct Problem {
  ProblemKind kind = ProblemKind::reaction_diffusion;
  Grid grid = make_rd_grid();
  double nu = 0.1;
  double sigma = 0.05;
  NoiseCoupling coupling = NoiseCoupling::multiplicative;
  int noise_window = 3;
  double c1 = 3.0;  // RD reaction: c1 u - c3 u^3
  double c3 = 1.0;

  void validate() const;
  bool operator==(const Problem&) const = default;
};

Problem make_rd_problem(double sigma = 0.05);
Problem make_ns_problem(double sigma = 0.05);

/// Recorded solution: states [frames, field...] and piecewise-constant
/// forcing [frames-1, field...], row-major.
struct Trajectory {
  std::vector<double> states;
  std::vector<double> forcing;
  std::uint64_t seed = 0;

  std::span<const double> state(std::size_t k, std::size_t field_size) const {
    return {states.data() + k * field_size, field_size};
  }
  std::span<const double> force(std::size_t k, std::size_t field_size) const {
    return {forcing.data() + k * field_size, field_size};
  }
};

/// Reference integrator for one problem. Holds the diffusion factorization
/// and scratch; step functions are const and reentrant.
class Simulator {
 public:
  explicit Simulator(Problem problem);

  const Problem& problem() const { return problem_; }
  const Grid& grid() const { return problem_.grid; }

  /// One fine step from `u` with forcing `f` and noise slice `xi`.
  void step(std::span<const double> u, std::span<const double> f, std::span<const double> xi,
            std::span<double> out) const;

  /// Integrates coarse interval `interval` (its substeps fine steps) in place.
  void advance(std::span<double> u, std::span<const double> f, const NoiseField& noise,
               std::size_t interval) const;

  /// Full trajectory from u0 with forcing [frames-1, field] and a given noise.
  Trajectory simulate(std::span<const double> u0, std::span<const double> forcing,
                      const NoiseField& noise) const;

 private:
  void step_rd(std::span<const double> u, std::span<const double> f, std::span<const double> xi,
               std::span<double> out) const;
  void step_ns(std::span<const double> w, std::span<const double> f, std::span<const double> xi,
               std::span<double> out) const;

  Problem problem_;
  std::shared_ptr<const Propagator> diffusion_;  // RD
  std::vector<double> cn_plus_, cn_minus_inv_;  // NS Crank-Nicolson factors per mode
  std::vector<double> kx_, ky_, inv_k2_;         // NS angular wavenumbers, 1/|k|^2
  std::vector<unsigned char> keep_;              // NS 2/3-rule mask
};

/// Noise realization a problem uses for `seed` (smoothed per its window).
NoiseField problem_noise(const Problem& problem, std::uint64_t seed);

/// simulate with noise drawn from `seed`.
Trajectory simulate(const Problem& problem, std::span<const double> u0, std::span<const double> forcing,
                    std::uint64_t seed);

/// NS velocity (u, v) = (d_y psi, -d_x psi) with Lap psi = -w; returned as
/// two concatenated fields.
std::vector<double> ns_velocity(const Grid& grid, std::span<const double> w);

/// Spectral divergence d_x u + d_y v of a velocity from ns_velocity.
std::vector<double> spectral_divergence(const Grid& grid, std::span<const double> velocity);

/// Random initial state and forcing: truncated sine (RD) or Fourier (NS)
/// series with coefficient std amplitude * k^-decay.
struct SamplerConfig {
  int k_max = 8;
  double decay = 2.0;
  double u0_amplitude = 1.0;
  double f_amplitude = 1.0;
  bool operator==(const SamplerConfig&) const = default;
};

std::vector<double> sample_field(const Grid& grid, const SamplerConfig& cfg, double amplitude, CounterRng& rng);
std::vector<double> sample_initial(const Problem& problem, const SamplerConfig& cfg, CounterRng& rng);
std::vector<double> sample_forcing(const Problem& problem, const SamplerConfig& cfg, CounterRng& rng);

struct Dataset {
  Problem problem;
  SamplerConfig sampler;
  std::string split = "train";
  std::uint64_t base_seed = 0;
  std::uint64_t config_hash = 0;
  std::vector<Trajectory> trajectories;

  std::size_t size() const { return trajectories.size(); }
};

/// Hash of everything that determines a dataset's contents.
std::uint64_t config_hash(const Problem& problem, const SamplerConfig& sampler, std::uint64_t base_seed,
                          std::size_t count);

/// Trajectory i uses seed derive_seed(base_seed, i); output is independent of
/// the thread count.
Dataset generate_dataset(const Problem& problem, std::size_t count, std::uint64_t base_seed,
                         const SamplerConfig& sampler = {}, const std::string& split = "train",
                         std::size_t threads = 0);

}  // namespace spdectl
