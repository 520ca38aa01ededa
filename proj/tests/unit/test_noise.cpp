#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <random>

#include "spdectl/noise.hpp"

using namespace spdectl;

namespace {

double slice_norm(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

}  // namespace

TEST_CASE("white noise is reproducible from its seed") {
  const Grid g = make_rd_grid();
  const auto a = sample_white_noise(g, 42);
  const auto b = sample_white_noise(g, 42);
  const auto c = sample_white_noise(g, 43);
  CHECK(a.values == b.values);
  CHECK(a.values != c.values);
  CHECK(a.shape() == Shape{200, 64});
  CHECK(sample_white_noise(make_ns_grid(), 1).shape() == Shape{200, 40, 40});
}

TEST_CASE("white noise cell statistics") {
  // 10^4 independent fields, statistics at fixed cells
  const Grid g = make_rd_grid(64, 11, 10);
  const double var = 1.0 / (g.fine_dt() * g.spacing());
  CHECK(white_noise_stddev(g) == doctest::Approx(std::sqrt(var)));
  const int samples = 10000;
  const std::size_t cells[] = {5, 3 * 64 + 40, 9 * 64 + 63};
  for (std::size_t cell : cells) {
    double s = 0.0, s2 = 0.0;
    for (int i = 0; i < samples; ++i) {
      const double v = sample_white_noise(g, static_cast<std::uint64_t>(i)).values[cell];
      s += v;
      s2 += v * v;
    }
    const double mean = s / samples;
    const double sample_var = s2 / samples - mean * mean;
    CHECK(std::abs(mean) < 3.0 * std::sqrt(var) / 100.0);
    CHECK(std::abs(sample_var / var - 1.0) < 0.05);
  }
}

TEST_CASE("smoothing examples") {
  const Grid g = make_rd_grid(4, 2, 1);
  const std::vector<double> in{0, 3, 0, 0};
  std::vector<double> out(4);
  smooth_field(in, out, g, 3);
  const std::vector<double> expected{1, 1, 1, 0};
  for (std::size_t i = 0; i < 4; ++i) CHECK(out[i] == doctest::Approx(expected[i]));

  smooth_field(in, out, g, 1);
  CHECK(out == in);
  CHECK_THROWS_AS(smooth_field(in, out, g, 2), std::invalid_argument);

  const Grid p = make_ns_grid(6, 2, 1);
  std::vector<double> c(36, 2.5), cs(36);
  smooth_field(c, cs, p, 3);
  for (double v : cs) CHECK(v == doctest::Approx(2.5));
  smooth_field(std::vector<double>(4, -1.0), out, g, 3);
  for (double v : out) CHECK(v == doctest::Approx(-1.0));

  // periodic wrap in 2-D: a single spike spreads over its 3x3 neighbourhood
  std::vector<double> spike(36, 0.0), ss(36);
  spike[0] = 9.0;
  smooth_field(spike, ss, p, 3);
  for (std::size_t i : {0UL, 1UL, 5UL, 6UL, 30UL, 35UL, 31UL}) CHECK(ss[i] == doctest::Approx(1.0));
  CHECK(ss[2] == 0.0);
}

TEST_CASE("smoothing is linear and does not increase the slice norm") {
  for (const Grid& g : {make_rd_grid(64, 11, 20), make_ns_grid(16, 11, 20)}) {
    const auto x1 = sample_white_noise(g, 7);
    const auto x2 = sample_white_noise(g, 8);
    NoiseField comb = x1;
    const double a = 0.7, b = -1.3;
    for (std::size_t i = 0; i < comb.values.size(); ++i) comb.values[i] = a * x1.values[i] + b * x2.values[i];
    const auto s1 = smooth(x1, 3), s2 = smooth(x2, 3), sc = smooth(comb, 3);
    CHECK(sc.smoothed);
    CHECK(sc.window == 3);
    for (std::size_t i = 0; i < sc.values.size(); ++i) {
      CHECK(std::abs(sc.values[i] - (a * s1.values[i] + b * s2.values[i])) < 1e-10 * (1.0 + std::abs(sc.values[i])));
    }
    for (std::size_t k = 0; k < g.fine_steps; ++k) CHECK(slice_norm(s1.slice(k)) <= slice_norm(x1.slice(k)));
  }
}

TEST_CASE("coarse increments sum fine noise over each interval") {
  const Grid g = make_rd_grid(8, 3, 4);
  auto xi = sample_white_noise(g, 3);
  const auto inc = coarse_increments(xi);
  REQUIRE(inc.size() == 2 * 8);
  for (std::size_t i = 0; i < 8; ++i) {
    const double expect = (xi.values[i] + xi.values[8 + i]) * g.fine_dt();
    CHECK(inc[i] == doctest::Approx(expect));
  }
}
