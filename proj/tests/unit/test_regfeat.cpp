#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <set>

#include "feature_oracle.hpp"
#include "gradcheck.hpp"
#include "spdectl/regfeat.hpp"
#include "spdectl/solver.hpp"

using namespace spdectl;
using spdectl::testing::directional_gradcheck;
using spdectl::testing::random_tensor;

namespace {

constexpr double pi = std::numbers::pi;

std::vector<std::string> keys_of(const FeatureSpec& spec, int dim = 1) {
  std::vector<std::string> out;
  for (const auto& t : enumerate_terms(spec, dim)) out.push_back(t.key);
  return out;
}

FeatureSpec make_spec(int n, int m, int l, ForcingMode mode, bool derivatives = true) {
  FeatureSpec s;
  s.n = n;
  s.m = m;
  s.l = l;
  s.forcing = mode;
  s.derivatives = derivatives;
  s.max_features = 100000;
  return s;
}

std::vector<double> column(const Tensor& t, std::size_t offset, std::size_t count) {
  auto v = t.values();
  return {v.begin() + static_cast<long>(offset), v.begin() + static_cast<long>(offset + count)};
}

}  // namespace

TEST_CASE("enumeration examples") {
  CHECK(keys_of(make_spec(0, 2, 2, ForcingMode::combined)) == std::vector<std::string>{"s"});
  const auto k = keys_of(make_spec(1, 1, 1, ForcingMode::combined));
  CHECK(k == std::vector<std::string>{"s", "I[D(s)]", "I[F]", "I[s]"});
  const auto ks = keys_of(make_spec(1, 1, 1, ForcingMode::split));
  CHECK(ks == std::vector<std::string>{"s", "I[D(s)]", "I[f]", "I[s]", "I[xi]"});
  const auto k2 = keys_of(make_spec(1, 1, 1, ForcingMode::combined), 2);
  CHECK(k2 == std::vector<std::string>{"s", "I[Dx(s)]", "I[Dy(s)]", "I[F]", "I[s]"});
  CHECK(keys_of(make_spec(1, 2, 1, ForcingMode::split, false)) ==
        std::vector<std::string>{"s", "I[f]", "I[s*f]", "I[s*s]", "I[s]", "I[xi]"});
}

TEST_CASE("enumeration invariants") {
  for (auto mode : {ForcingMode::combined, ForcingMode::split}) {
    for (int n = 0; n <= 2; ++n) {
      for (int m = 0; m <= 2; ++m) {
        for (int l = 0; l <= 2; ++l) {
          const auto spec = make_spec(n, m, l, mode);
          const auto terms = enumerate_terms(spec);
          std::set<std::string> unique;
          for (const auto& t : terms) {
            unique.insert(t.key);
            if (t.initial) continue;
            const int k = static_cast<int>(t.factors.size());
            const int j = t.leaf == Leaf::none ? 0 : 1;
            int budget = m;
            if (t.leaf == Leaf::noise || t.leaf == Leaf::combined) budget = l;
            CHECK(k + j >= 1);
            CHECK(k + j <= budget);
            for (const auto& f : t.factors) CHECK(terms[f.feature].round < t.round);
          }
          CHECK(unique.size() == terms.size());
          // monotone in each height
          const auto size = terms.size();
          if (n < 2) CHECK(enumerate_terms(make_spec(n + 1, m, l, mode)).size() >= size);
          if (m < 2) CHECK(enumerate_terms(make_spec(n, m + 1, l, mode)).size() >= size);
          if (l < 2) CHECK(enumerate_terms(make_spec(n, m, l + 1, mode)).size() >= size);
          CHECK(keys_of(spec) == keys_of(spec));
        }
      }
    }
  }
  FeatureSpec big = make_spec(3, 3, 2, ForcingMode::split);
  big.max_features = 256;
  CHECK_THROWS_AS(enumerate_terms(big), std::length_error);
  CHECK_THROWS_AS(enumerate_terms(make_spec(-1, 1, 1, ForcingMode::split)), std::invalid_argument);
}

TEST_CASE("features match the brute-force expansion") {
  std::mt19937_64 gen(31);
  std::uniform_real_distribution<double> dist(-1.0, 1.0);
  const Grid g = make_rd_grid(8, 3, 2);
  for (auto mode : {ForcingMode::combined, ForcingMode::split}) {
    for (int n = 0; n <= 2; ++n) {
      for (int m = 0; m <= 2; ++m) {
        for (int l = 0; l <= 2; ++l) {
          testing::OracleSetup os;
          os.n = 8;
          os.steps = 2;
          os.dt = g.fine_dt();
          os.nu = 0.1;
          os.height = n;
          os.m = m;
          os.l = l;
          os.split = mode == ForcingMode::split;
          const FeatureBlock block(make_spec(n, m, l, mode), g, grid_operator(g, 0.1), g.fine_dt());

          std::vector<double> u0(8);
          for (auto& v : u0) v = dist(gen);
          u0.front() = u0.back() = 0.0;
          std::vector<std::vector<double>> fr(2, std::vector<double>(8)), nz = fr;
          for (auto& row : fr) for (auto& v : row) v = dist(gen);
          for (auto& row : nz) for (auto& v : row) v = dist(gen);
          std::vector<double> fflat, nflat;
          for (auto& row : fr) fflat.insert(fflat.end(), row.begin(), row.end());
          for (auto& row : nz) nflat.insert(nflat.end(), row.begin(), row.end());

          const Tensor feats = block.evaluate(Tensor({1, 8}, u0), Tensor({1, 2, 8}, fflat),
                                              os.split ? Tensor({1, 2, 8}, nflat) : Tensor(), 2);
          const auto oracle = testing::FeatureOracle(os).run(u0, fr, nz);

          auto close = [](const std::vector<double>& a, const testing::OracleField& b) {
            for (std::size_t t = 0; t < 3; ++t) {
              for (std::size_t x = 0; x < 8; ++x) {
                if (std::abs(a[t * 8 + x] - b[t][x]) > 1e-12 * std::max(1.0, std::abs(b[t][x]))) return false;
              }
            }
            return true;
          };
          const std::size_t ns = block.size();
          std::vector<std::vector<double>> ours;
          for (std::size_t i = 0; i < ns; ++i) ours.push_back(column(feats, i * 24, 24));
          for (const auto& f : ours) {
            CHECK(std::any_of(oracle.begin(), oracle.end(), [&](const auto& o) { return close(f, o); }));
          }
          for (const auto& o : oracle) {
            CHECK(std::any_of(ours.begin(), ours.end(), [&](const auto& f) { return close(f, o); }));
          }
          // Value-distinct oracle fields never exceed N_S. Equality fails only
          // through true identities such as I[s] = t * s, which make
          // I[D(I[s])*s] and I[D(s)*I[s]] coincide.
          std::vector<const testing::OracleField*> distinct;
          for (const auto& o : oracle) {
            bool dup = false;
            for (const auto* d : distinct) {
              std::vector<double> flat;
              for (const auto& row : *d) flat.insert(flat.end(), row.begin(), row.end());
              if (close(flat, o)) {
                dup = true;
                break;
              }
            }
            if (!dup) distinct.push_back(&o);
          }
          CHECK(distinct.size() <= ns);
          if (n <= 1) CHECK(distinct.size() == ns);
        }
      }
    }
  }
}

TEST_CASE("initial feature") {
  const Grid g = make_rd_grid();
  const FeatureBlock block(make_spec(1, 1, 1, ForcingMode::split), g, grid_operator(g, 0.1), g.fine_dt());
  const auto zero = block.initial_feature(Tensor::zeros({1, 64}), 200);
  for (double v : zero.values()) CHECK(v == 0.0);

  const auto x = g.axis_coords();
  std::vector<double> u0(64);
  for (std::size_t i = 0; i < 64; ++i) u0[i] = std::sin(pi * x[i]);
  const auto s = block.initial_feature(Tensor({1, 64}, u0), 200);
  for (std::size_t k = 0; k <= 200; k += 20) {
    const double amp = std::exp(-0.1 * pi * pi * g.fine_dt() * static_cast<double>(k));
    for (std::size_t i = 0; i < 64; ++i) CHECK(std::abs(s.at(k * 64 + i) - amp * u0[i]) <= 1e-2 * amp);
  }

  // halving dt moves s^in by about half as much as the coarse-to-fine gap
  const Grid g2 = g.with_fine_steps(400), g4 = g.with_fine_steps(800);
  const FeatureBlock b2(make_spec(0, 0, 0, ForcingMode::split), g2, grid_operator(g2, 0.1), g2.fine_dt());
  const FeatureBlock b4(make_spec(0, 0, 0, ForcingMode::split), g4, grid_operator(g4, 0.1), g4.fine_dt());
  const auto s2 = b2.initial_feature(Tensor({1, 64}, u0), 400);
  const auto s4 = b4.initial_feature(Tensor({1, 64}, u0), 800);
  double d12 = 0.0, d24 = 0.0;
  for (std::size_t i = 0; i < 64; ++i) {
    d12 = std::max(d12, std::abs(s.at(200 * 64 + i) - s2.at(400 * 64 + i)));
    d24 = std::max(d24, std::abs(s2.at(400 * 64 + i) - s4.at(800 * 64 + i)));
  }
  CHECK(d24 < 0.6 * d12);
}

TEST_CASE("zero inputs give zero features and L = 0 reduces to explicit sums") {
  const Grid g = make_rd_grid(16, 11, 20);
  const FeatureBlock block(make_spec(2, 2, 1, ForcingMode::combined), g, grid_operator(g, 0.1), g.fine_dt());
  const auto f = block.evaluate(Tensor::zeros({2, 16}), Tensor::zeros({2, 20, 16}), Tensor(), 20);
  for (double v : f.values()) CHECK(v == 0.0);

  const DiscreteOperator zero = laplacian_1d(16, g.spacing()).scaled(0.0);
  const FeatureBlock flat(make_spec(1, 1, 1, ForcingMode::combined, false), g, zero, g.fine_dt());
  const auto feats = flat.evaluate(Tensor::zeros({1, 16}), Tensor::full({1, 20, 16}, 1.0), Tensor(), 20);
  // term order: s, I[F], I[s]
  REQUIRE(flat.terms()[1].key == "I[F]");
  for (std::size_t k = 0; k <= 20; ++k) {
    for (std::size_t i = 0; i < 16; ++i) {
      CHECK(std::abs(feats.at(21 * 16 + k * 16 + i) - g.fine_dt() * static_cast<double>(k)) < 1e-12);
    }
  }
}

TEST_CASE("I[f~] is linear in the forcing") {
  std::mt19937_64 gen(5);
  const Grid g = make_rd_grid(16, 11, 20);
  const FeatureBlock block(make_spec(2, 2, 1, ForcingMode::combined), g, grid_operator(g, 0.1), g.fine_dt());
  std::size_t idx = 0;
  while (block.terms()[idx].key != "I[F]") ++idx;
  const Tensor u0 = random_tensor({1, 16}, gen);
  const Tensor f1 = random_tensor({1, 20, 16}, gen), f2 = random_tensor({1, 20, 16}, gen);
  const double a = 1.7, b = -0.4;
  const Tensor comb = add(scale(f1, a), scale(f2, b));
  const auto e1 = block.evaluate(u0, f1, Tensor(), 20), e2 = block.evaluate(u0, f2, Tensor(), 20);
  const auto ec = block.evaluate(u0, comb, Tensor(), 20);
  const std::size_t off = idx * 21 * 16;
  for (std::size_t i = 0; i < 21 * 16; ++i) {
    CHECK(std::abs(ec.at(off + i) - (a * e1.at(off + i) + b * e2.at(off + i))) < 1e-12);
  }
}

TEST_CASE("feature gradients match finite differences") {
  std::mt19937_64 gen(9);
  SUBCASE("1-D split") {
    const Grid g = make_rd_grid(12, 3, 6);
    const FeatureBlock block(make_spec(2, 2, 1, ForcingMode::split), g, grid_operator(g, 0.1), g.fine_dt());
    auto loss = [&](const std::vector<Tensor>& in) { return sum(block.evaluate_final(in[0], in[1], in[2], 3)); };
    auto r = directional_gradcheck(
        loss, {random_tensor({2, 12}, gen), random_tensor({2, 3, 12}, gen), random_tensor({2, 3, 12}, gen)}, gen);
    CHECK(r.max_rel_error < 1e-4);
  }
  SUBCASE("2-D combined") {
    const Grid g = make_ns_grid(8, 3, 4);
    const FeatureBlock block(make_spec(2, 1, 2, ForcingMode::combined), g, grid_operator(g, 0.02), g.fine_dt());
    auto loss = [&](const std::vector<Tensor>& in) { return sum(block.evaluate(in[0], in[1], Tensor(), 2)); };
    auto r = directional_gradcheck(loss, {random_tensor({1, 64}, gen), random_tensor({1, 2, 64}, gen)}, gen);
    CHECK(r.max_rel_error < 1e-4);
  }
}

TEST_CASE("spatial derivative") {
  const Grid p = make_ns_grid(16, 3, 2);
  const auto x = p.axis_coords();
  const auto c = spatial_derivative(Tensor::full({1, 256}, 4.0), p, 1);
  for (double v : c.values()) CHECK(std::abs(v) < 1e-12);
  std::vector<double> s(256);
  for (std::size_t i = 0; i < 16; ++i) {
    for (std::size_t j = 0; j < 16; ++j) s[i * 16 + j] = std::sin(2 * pi * x[j]);
  }
  const auto d = spatial_derivative(Tensor({256}, s), p, 1);
  for (std::size_t i = 0; i < 16; ++i) {
    for (std::size_t j = 0; j < 16; ++j) {
      const double expect = 2 * pi * std::cos(2 * pi * x[j]);
      CHECK(std::abs(d.at(i * 16 + j) - expect) <= 1e-8 * 2 * pi);
    }
  }
  const Grid g = make_rd_grid(10, 3, 2);
  const auto xr = g.axis_coords();
  std::vector<double> ramp(10);
  for (std::size_t i = 0; i < 10; ++i) ramp[i] = 3.0 * xr[i] - 1.0;
  const auto dr = spatial_derivative(Tensor({10}, ramp), g);
  for (double v : dr.values()) CHECK(std::abs(v - 3.0) < 1e-12);
}

TEST_CASE("linear SPDE: I_c[u0] + I[f] + sigma I[xi] reproduces the solver") {
  Problem p = make_rd_problem(0.5);
  p.c1 = p.c3 = 0.0;
  p.coupling = NoiseCoupling::additive;
  const Grid& g = p.grid;
  const FeatureBlock block(make_spec(1, 1, 1, ForcingMode::split, false), g, grid_operator(g, p.nu), g.fine_dt());
  // order: s, I[f], I[s], I[xi]
  REQUIRE(block.terms()[1].key == "I[f]");
  REQUIRE(block.terms()[3].key == "I[xi]");
  CounterRng rng(4);
  for (int trial = 0; trial < 3; ++trial) {
    const auto u0 = sample_initial(p, {}, rng);
    const auto f = sample_forcing(p, {}, rng);
    const auto traj = simulate(p, u0, f, 100 + trial);
    const auto xi = problem_noise(p, 100 + trial);
    std::vector<double> f_fine;
    for (std::size_t k = 0; k < g.fine_steps; ++k) {
      const auto slice_f = traj.force(k / g.substeps(), 64);
      f_fine.insert(f_fine.end(), slice_f.begin(), slice_f.end());
    }
    const auto feats = sample_frames(
        block.evaluate(Tensor({1, 64}, u0), Tensor({1, 200, 64}, f_fine), Tensor({1, 200, 64}, xi.values), 200),
        g.substeps());
    for (std::size_t k = 0; k < g.frames; ++k) {
      for (std::size_t i = 0; i < 64; ++i) {
        const double pred = feats.at(0 * 11 * 64 + k * 64 + i) + feats.at(1 * 11 * 64 + k * 64 + i) +
                            p.sigma * feats.at(3 * 11 * 64 + k * 64 + i);
        CHECK(std::abs(pred - traj.state(k, 64)[i]) < 1e-10);
      }
    }
  }
}
