#include "spdectl/noise.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "spdectl/rng.hpp"

namespace spdectl {

std::span<const double> NoiseField::slice(std::size_t step) const {
  const std::size_t f = grid.field_size();
  return {values.data() + step * f, f};
}

std::span<double> NoiseField::slice(std::size_t step) {
  const std::size_t f = grid.field_size();
  return {values.data() + step * f, f};
}

Shape NoiseField::shape() const {
  Shape s{grid.fine_steps};
  for (auto e : grid.field_shape()) s.push_back(e);
  return s;
}

double white_noise_stddev(const Grid& grid) {
  return 1.0 / std::sqrt(grid.fine_dt() * grid.cell_volume());
}

NoiseField sample_white_noise(const Grid& grid, std::uint64_t seed) {
  grid.validate();
  NoiseField xi;
  xi.grid = grid;
  xi.seed = seed;
  xi.values.resize(grid.fine_steps * grid.field_size());
  const double sd = white_noise_stddev(grid);
  for (std::size_t k = 0; k < grid.fine_steps; ++k) {
    CounterRng rng(derive_seed(seed, k));
    rng.fill_normal(xi.slice(k), sd);
  }
  return xi;
}

namespace {

// Moving average along one axis of a row-major block; `stride` separates
// neighbours, `count` is the axis length.
void average_line(const double* in, double* out, std::size_t count, std::size_t stride, int half, bool wrap) {
  const auto n = static_cast<long>(count);
  const double inv = 1.0 / static_cast<double>(2 * half + 1);
  for (long i = 0; i < n; ++i) {
    double s = 0.0;
    for (long o = -half; o <= half; ++o) {
      long j = i + o;
      if (wrap) {
        j = ((j % n) + n) % n;
      } else {
        j = std::clamp(j, 0L, n - 1);
      }
      s += in[j * static_cast<long>(stride)];
    }
    out[i * static_cast<long>(stride)] = s * inv;
  }
}

}  // namespace

void smooth_field(std::span<const double> in, std::span<double> out, const Grid& grid, int window) {
  if (window < 1 || window % 2 == 0) throw std::invalid_argument("smoothing window must be odd and >= 1");
  if (in.size() != grid.field_size() || out.size() != in.size()) {
    throw std::invalid_argument("smooth_field: size mismatch");
  }
  if (window == 1) {
    std::copy(in.begin(), in.end(), out.begin());
    return;
  }
  const int half = window / 2;
  const bool wrap = grid.bc == Boundary::periodic;
  const std::size_t n = grid.n;
  if (grid.dim == 1) {
    average_line(in.data(), out.data(), n, 1, half, wrap);
    return;
  }
  std::vector<double> tmp(in.size());
  for (std::size_t i = 0; i < n; ++i) average_line(in.data() + i * n, tmp.data() + i * n, n, 1, half, wrap);
  for (std::size_t j = 0; j < n; ++j) average_line(tmp.data() + j, out.data() + j, n, n, half, wrap);
}

NoiseField smooth(const NoiseField& xi, int window) {
  if (window < 1 || window % 2 == 0) throw std::invalid_argument("smoothing window must be odd and >= 1");
  NoiseField out = xi;
  out.smoothed = xi.smoothed || window > 1;
  out.window = window;
  for (std::size_t k = 0; k < xi.steps(); ++k) smooth_field(xi.slice(k), out.slice(k), xi.grid, window);
  return out;
}

NoiseField sample_noise(const Grid& grid, std::uint64_t seed, int window) {
  auto xi = sample_white_noise(grid, seed);
  return window > 1 ? smooth(xi, window) : xi;
}

std::vector<double> coarse_increments(const NoiseField& xi) {
  const Grid& g = xi.grid;
  const std::size_t f = g.field_size(), sub = g.substeps();
  const double dt = g.fine_dt();
  std::vector<double> out((g.frames - 1) * f, 0.0);
  for (std::size_t k = 0; k < g.fine_steps; ++k) {
    double* dst = out.data() + (k / sub) * f;
    auto src = xi.slice(k);
    for (std::size_t i = 0; i < f; ++i) dst[i] += src[i] * dt;
  }
  return out;
}

}  // namespace spdectl
