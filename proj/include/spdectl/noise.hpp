#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "spdectl/grid.hpp"

namespace spdectl {

/// Discretized space-time white noise on a grid's fine time levels.
///
/// `values` is row-major [fine_steps, field...]. Entries are unscaled; the
/// solver multiplies by the problem's noise scale.
struct NoiseField {
  Grid grid;
  std::uint64_t seed = 0;
  double scale = 1.0;
  bool smoothed = false;
  int window = 1;
  std::vector<double> values;

  std::size_t steps() const { return grid.fine_steps; }
  std::span<const double> slice(std::size_t step) const;
  std::span<double> slice(std::size_t step);
  Shape shape() const;
};

/// Cell standard deviation 1/sqrt(dt_fine * eps^dim).
double white_noise_stddev(const Grid& grid);

/// i.i.d. N(0, 1/(dt eps^d)) per fine step and cell. Slice k is drawn from its
/// own derived stream, so any subset of slices can be regenerated.
NoiseField sample_white_noise(const Grid& grid, std::uint64_t seed);

/// Spatial moving average of odd width per time slice. Dirichlet grids clamp
/// at the edges (repeat the boundary sample); periodic grids wrap, separably
/// per axis in 2-D.
NoiseField smooth(const NoiseField& xi, int window = 3);

/// Same rule on one field.
void smooth_field(std::span<const double> in, std::span<double> out, const Grid& grid, int window);

/// sample_white_noise followed by smooth when window > 1.
NoiseField sample_noise(const Grid& grid, std::uint64_t seed, int window);

/// Brownian increments per coarse interval: sum of xi * dt_fine over the
/// interval's fine steps, shape [frames-1, field...].
std::vector<double> coarse_increments(const NoiseField& xi);

}  // namespace spdectl
