#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "spdectl/solver.hpp"

using namespace spdectl;

namespace {

constexpr double pi = std::numbers::pi;

double norm2(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

double rel_diff(std::span<const double> a, std::span<const double> b) {
  double num = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) num += (a[i] - b[i]) * (a[i] - b[i]);
  return std::sqrt(num) / norm2(b);
}

Problem deterministic_rd(std::size_t fine_steps = 200) {
  Problem p = make_rd_problem(0.0);
  p.grid = make_rd_grid(64, 11, fine_steps);
  return p;
}

Problem deterministic_ns(std::size_t fine_steps = 200) {
  Problem p = make_ns_problem(0.0);
  p.grid = make_ns_grid(32, 11, fine_steps);
  return p;
}

std::vector<double> zeros(std::size_t n) { return std::vector<double>(n, 0.0); }

}  // namespace

TEST_CASE("reaction-diffusion zero state is a fixed point for any noise") {
  Problem p = make_rd_problem(1.0);
  const Simulator sim(p);
  const auto traj = sim.simulate(zeros(64), zeros(10 * 64), problem_noise(p, 99));
  for (double v : traj.states) CHECK(v == 0.0);
}

TEST_CASE("heat mode decay on the Dirichlet interval") {
  Problem p = deterministic_rd();
  p.c1 = p.c3 = 0.0;
  const Grid& g = p.grid;
  const auto x = g.axis_coords();
  std::vector<double> u0(g.n);
  for (std::size_t i = 0; i < g.n; ++i) u0[i] = std::sin(pi * x[i]);
  const auto traj = simulate(p, u0, zeros(10 * g.n), 0);
  const auto t = g.time_points();
  for (std::size_t k = 0; k < g.frames; ++k) {
    const auto s = traj.state(k, g.n);
    const double amp = std::exp(-p.nu * pi * pi * t[k]);
    for (std::size_t i = 0; i < g.n; ++i) CHECK(std::abs(s[i] - amp * u0[i]) <= 1e-2 * amp);
  }
}

TEST_CASE("reaction-diffusion stays bounded by the stable equilibria") {
  Problem p = deterministic_rd();
  CounterRng rng(5);
  SamplerConfig cfg;
  cfg.u0_amplitude = 3.0;
  for (int trial = 0; trial < 5; ++trial) {
    const auto u0 = sample_initial(p, cfg, rng);
    double bound = std::sqrt(3.0);
    for (double v : u0) bound = std::max(bound, std::abs(v));
    const auto traj = simulate(p, u0, zeros(10 * 64), 0);
    for (double v : traj.states) CHECK(std::abs(v) <= bound + 0.1);
    for (std::size_t k = 0; k < 11; ++k) {
      CHECK(traj.state(k, 64)[0] == 0.0);
      CHECK(traj.state(k, 64)[63] == 0.0);
    }
  }
}

TEST_CASE("Navier-Stokes shear mode decays viscously") {
  Problem p = make_ns_problem(0.0);
  const Grid& g = p.grid;
  const auto x = g.axis_coords();
  std::vector<double> w0(g.field_size());
  for (std::size_t i = 0; i < g.n; ++i) {
    for (std::size_t j = 0; j < g.n; ++j) w0[i * g.n + j] = std::sin(2.0 * pi * x[i]);
  }
  const auto traj = simulate(p, w0, zeros(10 * g.field_size()), 0);
  const auto t = g.time_points();
  for (std::size_t k = 1; k < g.frames; ++k) {
    const double amp = std::exp(-p.nu * 4.0 * pi * pi * t[k]);
    std::vector<double> exact(w0.size());
    for (std::size_t i = 0; i < w0.size(); ++i) exact[i] = amp * w0[i];
    CHECK(rel_diff(traj.state(k, g.field_size()), exact) < 1e-3);
  }
  CHECK(simulate(p, zeros(1600), zeros(16000), 0).states == zeros(11 * 1600));
}

TEST_CASE("Navier-Stokes velocity is divergence free") {
  const Problem p = make_ns_problem();
  CounterRng rng(11);
  for (int trial = 0; trial < 5; ++trial) {
    const auto w = sample_initial(p, SamplerConfig{}, rng);
    const auto vel = ns_velocity(p.grid, w);
    const auto div = spectral_divergence(p.grid, vel);
    double m = 0.0;
    for (double d : div) m = std::max(m, std::abs(d));
    CHECK(m < 1e-10);
  }
}

TEST_CASE("Navier-Stokes mean vorticity drifts only by the source mean") {
  Problem p = make_ns_problem(0.5);
  p.grid = make_ns_grid(16, 11, 200);
  const Simulator sim(p);
  CounterRng rng(3);
  const auto w = sample_initial(p, SamplerConfig{}, rng);
  const auto f = sample_field(p.grid, SamplerConfig{}, 1.0, rng);
  const auto xi = problem_noise(p, 8);
  std::vector<double> out(w.size());
  sim.step(w, f, xi.slice(0), out);
  auto mean = [](std::span<const double> v) {
    double s = 0.0;
    for (double x : v) s += x;
    return s / static_cast<double>(v.size());
  };
  const double expected = mean(w) + p.grid.fine_dt() * p.sigma * mean(xi.slice(0));
  CHECK(std::abs(mean(out) - expected) < 1e-12);
}

TEST_CASE("simulate shapes and determinism") {
  const Problem rd = make_rd_problem();
  CounterRng rng(1);
  const auto u0 = sample_initial(rd, SamplerConfig{}, rng);
  const auto f = sample_forcing(rd, SamplerConfig{}, rng);
  const auto a = simulate(rd, u0, f, 17), b = simulate(rd, u0, f, 17), c = simulate(rd, u0, f, 18);
  CHECK(a.states.size() == 11 * 64);
  CHECK(a.forcing.size() == 10 * 64);
  CHECK(a.states == b.states);
  CHECK(a.states != c.states);
  CHECK(std::equal(u0.begin(), u0.end(), a.states.begin()));

  const Problem ns = make_ns_problem();
  const auto w0 = sample_initial(ns, SamplerConfig{}, rng);
  const auto fw = sample_forcing(ns, SamplerConfig{}, rng);
  const auto t = simulate(ns, w0, fw, 3);
  CHECK(t.states.size() == 11 * 40 * 40);
  CHECK(simulate(ns, w0, fw, 3).states == t.states);

  CHECK_THROWS_AS(simulate(rd, u0, zeros(3), 1), std::invalid_argument);
}

TEST_CASE("self-convergence in the fine step") {
  SUBCASE("reaction-diffusion") {
    CounterRng rng(21);
    const Problem base = deterministic_rd();
    const auto u0 = sample_initial(base, SamplerConfig{}, rng);
    const auto f = sample_forcing(base, SamplerConfig{}, rng);
    std::vector<std::vector<double>> finals;
    for (std::size_t steps : {200, 400, 800, 3200}) {
      const auto tr = simulate(deterministic_rd(steps), u0, f, 0);
      finals.emplace_back(tr.states.end() - 64, tr.states.end());
    }
    CHECK(rel_diff(finals[0], finals[1]) < 5e-3);
    const double e1 = rel_diff(finals[0], finals[3]), e2 = rel_diff(finals[1], finals[3]);
    CHECK(e1 / e2 > 1.8);  // first order or better
  }
  SUBCASE("Navier-Stokes") {
    CounterRng rng(22);
    const Problem base = deterministic_ns();
    const auto w0 = sample_initial(base, SamplerConfig{}, rng);
    const auto f = sample_forcing(base, SamplerConfig{}, rng);
    std::vector<std::vector<double>> finals;
    for (std::size_t steps : {200, 400, 800, 3200}) {
      const auto tr = simulate(deterministic_ns(steps), w0, f, 0);
      finals.emplace_back(tr.states.end() - 1024, tr.states.end());
    }
    CHECK(rel_diff(finals[0], finals[1]) < 5e-3);
    const double e1 = rel_diff(finals[0], finals[3]), e2 = rel_diff(finals[1], finals[3]);
    CHECK(e1 / e2 > 1.8);
  }
}

TEST_CASE("dataset generation") {
  Problem p = make_rd_problem();
  const auto a = generate_dataset(p, 6, 123, {}, "train", 1);
  const auto b = generate_dataset(p, 6, 123, {}, "train", 3);
  REQUIRE(a.size() == 6);
  for (std::size_t i = 0; i < 6; ++i) {
    CHECK(a.trajectories[i].states == b.trajectories[i].states);
    CHECK(a.trajectories[i].seed == derive_seed(123, i));
  }
  CHECK(a.config_hash == b.config_hash);
  CHECK(generate_dataset(p, 1, 123, {}, "train", 1).trajectories[0].states == a.trajectories[0].states);

  Problem q = p;
  q.nu = 0.2;
  CHECK(config_hash(q, {}, 123, 6) != a.config_hash);
  CHECK_THROWS_AS(generate_dataset(p, 0, 1), std::invalid_argument);
}

TEST_CASE("initial-state sampler mean") {
  // Analytic mean is 0; per-cell variance is sum_k (k^-2 sin(k pi x))^2.
  const Problem p = make_rd_problem();
  const SamplerConfig cfg;
  const auto x = p.grid.axis_coords();
  const int samples = 1000;
  std::vector<double> sum(64, 0.0);
  CounterRng rng(77);
  for (int s = 0; s < samples; ++s) {
    const auto u = sample_initial(p, cfg, rng);
    for (std::size_t i = 0; i < 64; ++i) sum[i] += u[i];
  }
  for (std::size_t i = 1; i < 63; ++i) {
    double var = 0.0;
    for (int k = 1; k <= cfg.k_max; ++k) var += std::pow(std::pow(k, -cfg.decay) * std::sin(pi * k * x[i]), 2);
    CHECK(std::abs(sum[i] / samples) < 3.0 * std::sqrt(var / samples));
  }
}
