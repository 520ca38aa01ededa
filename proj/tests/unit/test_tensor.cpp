#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <numbers>

#include "gradcheck.hpp"
#include "spdectl/fft.hpp"
#include "spdectl/ops.hpp"
#include "spdectl/optim.hpp"

using namespace spdectl;
using spdectl::testing::directional_gradcheck;
using spdectl::testing::random_tensor;

namespace {

using LossFn = std::function<Tensor(const std::vector<Tensor>&)>;

// Wraps `op` with a fixed random cotangent sized from one forward evaluation.
LossFn scalarize(LossFn op, const std::vector<Tensor>& inputs, std::mt19937_64& gen) {
  auto probe = op(inputs);
  auto cot = random_tensor(probe.shape(), gen);
  return spdectl::testing::with_cotangent(op, cot);
}

void expect_gradcheck(LossFn op, const std::vector<Tensor>& inputs, std::uint64_t seed = 7) {
  std::mt19937_64 gen(seed);
  auto loss = scalarize(op, inputs, gen);
  auto r = directional_gradcheck(loss, inputs, gen, 20, 1e-5);
  CHECK(r.directions == 20);
  CHECK(r.max_rel_error < 1e-4);
}

class DoubleMap final : public FieldMap {
 public:
  explicit DoubleMap(std::size_t n) : n_(n) {}
  std::size_t field_size() const override { return n_; }
  // Upper bidiagonal out_i = x_i/2 + x_{i+1}/4; non-symmetric so the
  // transpose path is actually exercised.
  void apply(std::span<const double> in, std::span<double> out) const override {
    for (std::size_t i = 0; i < n_; ++i) out[i] = 0.5 * in[i] + (i + 1 < n_ ? 0.25 * in[i + 1] : 0.0);
  }
  void apply_transpose(std::span<const double> in, std::span<double> out) const override {
    for (std::size_t i = 0; i < n_; ++i) out[i] = 0.5 * in[i] + (i > 0 ? 0.25 * in[i - 1] : 0.0);
  }

 private:
  std::size_t n_;
};

}  // namespace

TEST_CASE("tensor construction validates shape and finiteness") {
  CHECK_THROWS_AS(Tensor({2, 2}, {1, 2, 3}), TensorError);
  CHECK_THROWS_AS(Tensor({1}, {std::nan("")}), TensorError);
  CHECK_THROWS_AS(Tensor({0}, {}), TensorError);
  Tensor t({2, 3}, {1, 2, 3, 4, 5, 6});
  CHECK(t.numel() == 6);
  CHECK(t.dim() == 2);
}

TEST_CASE("elementwise examples") {
  auto a = Tensor({2}, {1, 2});
  auto b = Tensor({2}, {3, 4});
  CHECK(add(a, b).to_vector() == std::vector<double>{4, 6});
  auto z = mul(a, Tensor::zeros({2}));
  CHECK(z.to_vector() == std::vector<double>{0, 0});
  CHECK(tanh(Tensor::scalar(0.0)).item() == 0.0);
  CHECK(elementwise(Elementwise::sub, a, &b).to_vector() == std::vector<double>{-2, -2});
  CHECK_THROWS_AS(elementwise(Elementwise::add, a), TensorError);
}

TEST_CASE("broadcasting follows the trailing-dimension rule") {
  auto x = Tensor({2, 3}, {1, 2, 3, 4, 5, 6});
  auto row = Tensor({3}, {10, 20, 30});
  CHECK(add(x, row).to_vector() == std::vector<double>{11, 22, 33, 14, 25, 36});
  auto col = Tensor({2, 1}, {100, 200});
  CHECK(add(x, col).to_vector() == std::vector<double>{101, 102, 103, 204, 205, 206});
  CHECK_THROWS_AS(add(x, Tensor({2}, {1, 2})), TensorError);
  CHECK(mul(x, Tensor::scalar(2.0)).to_vector() == std::vector<double>{2, 4, 6, 8, 10, 12});
}

TEST_CASE("non-finite results are errors") {
  CHECK_THROWS_AS(div(Tensor({1}, {1.0}), Tensor({1}, {0.0})), TensorError);
  CHECK_THROWS_AS(sqrt(Tensor({1}, {-1.0})), TensorError);
}

TEST_CASE("matmul examples") {
  auto eye = Tensor({2, 2}, {1, 0, 0, 1});
  auto x = Tensor({2, 3}, {1, 2, 3, 4, 5, 6});
  CHECK(matmul(eye, x).to_vector() == x.to_vector());
  auto m = Tensor({2, 2}, {1, 2, 3, 4});
  auto ones = Tensor({2, 1}, {1, 1});
  CHECK(matmul(m, ones).to_vector() == std::vector<double>{3, 7});
  CHECK_THROWS_AS(matmul(m, Tensor({3, 1}, {1, 1, 1})), TensorError);
}

TEST_CASE("matmul gradient of sum(C) w.r.t. A equals ones * B^T") {
  std::mt19937_64 gen(3);
  auto a = random_tensor({5, 4}, gen, -1, 1, true);
  auto b = random_tensor({4, 3}, gen);
  backward(sum(matmul(a, b)));
  auto bv = b.values();
  for (std::size_t i = 0; i < 5; ++i) {
    for (std::size_t k = 0; k < 4; ++k) {
      double expect = bv[k * 3] + bv[k * 3 + 1] + bv[k * 3 + 2];
      CHECK(a.grad()[i * 4 + k] == doctest::Approx(expect).epsilon(1e-12));
    }
  }
  // and against central differences
  auto r = directional_gradcheck([](const std::vector<Tensor>& in) { return sum(matmul(in[0], in[1])); },
                                 {a.detach(), b}, gen, 20);
  CHECK(r.max_rel_error < 1e-6);
}

TEST_CASE("backward examples") {
  auto x = Tensor({3}, {1, 2, 3}, true);
  backward(sum(x));
  CHECK(std::vector<double>(x.grad().begin(), x.grad().end()) == std::vector<double>{1, 1, 1});
  auto s = Tensor::scalar(3.0, true);
  backward(mul(s, s));
  CHECK(s.grad()[0] == doctest::Approx(6.0));
  CHECK_THROWS_AS(backward(x), TensorError);
}

TEST_CASE("gradients accumulate on leaves across backward calls") {
  auto x = Tensor::scalar(2.0, true);
  backward(square(x));
  backward(square(x));
  CHECK(x.grad()[0] == doctest::Approx(8.0));
  x.zero_grad();
  CHECK(x.grad().empty());
}

TEST_CASE("gradient check: elementwise, reductions and shape ops") {
  std::mt19937_64 gen(11);
  auto a = random_tensor({3, 4}, gen);
  auto b = random_tensor({3, 4}, gen);
  auto row = random_tensor({4}, gen);
  auto pos = random_tensor({3, 4}, gen, 0.5, 2.0);
  expect_gradcheck([](auto& in) { return add(in[0], in[1]); }, {a, b});
  expect_gradcheck([](auto& in) { return sub(in[0], in[1]); }, {a, row});
  expect_gradcheck([](auto& in) { return mul(in[0], in[1]); }, {a, row});
  expect_gradcheck([](auto& in) { return div(in[0], in[1]); }, {a, pos});
  expect_gradcheck([](auto& in) { return neg(in[0]); }, {a});
  expect_gradcheck([](auto& in) { return scale(in[0], -2.5); }, {a});
  expect_gradcheck([](auto& in) { return add_scalar(in[0], 0.3); }, {a});
  expect_gradcheck([](auto& in) { return square(in[0]); }, {a});
  expect_gradcheck([](auto& in) { return sqrt(in[0]); }, {pos});
  expect_gradcheck([](auto& in) { return tanh(in[0]); }, {a});
  expect_gradcheck([](auto& in) { return gelu(in[0]); }, {a});
  expect_gradcheck([](auto& in) { return relu(add_scalar(in[0], 0.01)); }, {pos});
  expect_gradcheck([](auto& in) { return sum_axis(in[0], 1); }, {a});
  expect_gradcheck([](auto& in) { return sum_axis(in[0], 0); }, {a});
  expect_gradcheck([](auto& in) { return sum_trailing(in[0], 1); }, {a});
  expect_gradcheck([](auto& in) { return mean(in[0]); }, {a});
  expect_gradcheck([](auto& in) { return reshape(in[0], {2, 6}); }, {a});
  expect_gradcheck([](auto& in) { return concat({in[0], in[1]}, 1); }, {a, b});
  expect_gradcheck([](auto& in) { return slice(in[0], 1, 1, 2); }, {a});
  expect_gradcheck([](auto& in) { return linear(in[0], in[1], in[2]); },
                   {a, random_tensor({4, 2}, gen), random_tensor({2}, gen)});
}

TEST_CASE("sqrt gradient at zero is zero") {
  auto x = Tensor({2}, {0.0, 4.0}, true);
  backward(sum(sqrt(x)));
  CHECK(x.grad()[0] == 0.0);
  CHECK(x.grad()[1] == doctest::Approx(0.25));
}

TEST_CASE("conv: identity kernel, constants, naive oracle") {
  std::mt19937_64 gen(5);
  auto x = random_tensor({1, 8}, gen);
  auto ident = Tensor({1, 1, 3}, {0, 1, 0});
  CHECK(conv(x, ident, Padding::zero).to_vector() == x.to_vector());

  auto c = Tensor::full({1, 16}, 2.5);
  auto avg = Tensor({1, 1, 5}, {0.1, 0.2, 0.4, 0.2, 0.1});
  auto smoothed = conv(c, avg, Padding::periodic);
  for (double v : smoothed.values()) CHECK(v == doctest::Approx(2.5).epsilon(1e-14));

  const double eps = 0.25;
  auto lap = Tensor({1, 1, 3}, {1 / (eps * eps), -2 / (eps * eps), 1 / (eps * eps)});
  auto y = conv(x, lap, Padding::zero);
  auto xv = x.to_vector();
  for (std::size_t i = 0; i < 8; ++i) {
    double left = i > 0 ? xv[i - 1] : 0.0;
    double right = i + 1 < 8 ? xv[i + 1] : 0.0;
    double expect = left / (eps * eps) - 2 * xv[i] / (eps * eps) + right / (eps * eps);
    CHECK(y.at(i) == expect);
  }
  CHECK_THROWS_AS(conv(x, Tensor({1, 1, 2}, {1, 1}), Padding::zero), TensorError);
}

TEST_CASE("conv 2-D matches a direct periodic loop") {
  std::mt19937_64 gen(6);
  auto x = random_tensor({2, 2, 5, 4}, gen);
  auto k = random_tensor({3, 2, 3, 3}, gen);
  auto y = conv(x, k, Padding::periodic);
  auto xv = x.values();
  auto kv = k.values();
  for (std::size_t b = 0; b < 2; ++b)
    for (std::size_t o = 0; o < 3; ++o)
      for (long i = 0; i < 5; ++i)
        for (long j = 0; j < 4; ++j) {
          double acc = 0;
          for (std::size_t c = 0; c < 2; ++c)
            for (long a = 0; a < 3; ++a)
              for (long bb = 0; bb < 3; ++bb) {
                long si = (i + a - 1 + 5) % 5, sj = (j + bb - 1 + 4) % 4;
                acc += kv[((o * 2 + c) * 3 + a) * 3 + bb] * xv[((b * 2 + c) * 5 + si) * 4 + sj];
              }
          CHECK(y.at(((b * 3 + o) * 5 + i) * 4 + j) == doctest::Approx(acc).epsilon(1e-13));
        }
}

TEST_CASE("gradient check: conv and spectral_multiply") {
  std::mt19937_64 gen(13);
  expect_gradcheck([](auto& in) { return conv(in[0], in[1], Padding::zero); },
                   {random_tensor({2, 3, 10}, gen), random_tensor({4, 3, 5}, gen)});
  expect_gradcheck([](auto& in) { return conv(in[0], in[1], Padding::periodic); },
                   {random_tensor({3, 9}, gen), random_tensor({2, 3, 3}, gen)});
  expect_gradcheck([](auto& in) { return conv(in[0], in[1], Padding::zero); },
                   {random_tensor({2, 2, 6, 5}, gen), random_tensor({3, 2, 3, 3}, gen)});
  expect_gradcheck([](auto& in) { return spectral_multiply(in[0], in[1], 5); },
                   {random_tensor({2, 3, 16}, gen), random_tensor({3, 2, 5, 2}, gen)});
  expect_gradcheck([](auto& in) { return spectral_multiply(in[0], in[1], 9); },
                   {random_tensor({1, 2, 16}, gen), random_tensor({2, 2, 9, 2}, gen)});
  expect_gradcheck([](auto& in) { return spectral_multiply(in[0], in[1], 3); },
                   {random_tensor({2, 2, 8, 10}, gen), random_tensor({2, 3, 6, 3, 2}, gen)});
}

TEST_CASE("spectral_multiply examples") {
  const std::size_t n = 64;
  std::mt19937_64 gen(17);
  auto x = random_tensor({1, 1, n}, gen);
  const std::size_t full = n / 2 + 1;
  std::vector<double> w(full * 2, 0.0);
  for (std::size_t k = 0; k < full; ++k) w[2 * k] = 1.0;
  auto ident = Tensor({1, 1, full, 2}, w);
  auto y = spectral_multiply(x, ident, full);
  for (std::size_t i = 0; i < n; ++i) CHECK(std::abs(y.at(i) - x.at(i)) < 1e-12);

  auto zero = spectral_multiply(x, Tensor::zeros({1, 1, full, 2}), full);
  for (double v : zero.values()) CHECK(v == 0.0);

  std::vector<double> s(n);
  for (std::size_t i = 0; i < n; ++i) s[i] = std::sin(2 * std::numbers::pi * double(i) / double(n));
  auto wave = Tensor({1, 1, n}, s);
  auto mode1 = Tensor({1, 1, 2, 2}, {0, 0, 1, 0});
  auto out = spectral_multiply(wave, mode1, 2);
  for (std::size_t i = 0; i < n; ++i) CHECK(std::abs(out.at(i) - s[i]) < 1e-10);

  CHECK_THROWS_AS(spectral_multiply(x, Tensor::zeros({1, 1, 40, 2}), 40), TensorError);
}

TEST_CASE("FFT round trip for sizes up to 128 and 64x64") {
  std::mt19937_64 gen(19);
  std::uniform_real_distribution<double> d(-1, 1);
  for (std::size_t n : {1u, 2u, 3u, 5u, 7u, 8u, 12u, 40u, 49u, 64u, 100u, 127u, 128u}) {
    std::vector<double> x(n);
    for (auto& v : x) v = d(gen);
    auto back = fft::inverse_real(fft::forward_real(x));
    double err = 0;
    for (std::size_t i = 0; i < n; ++i) err = std::max(err, std::abs(back[i] - x[i]));
    CHECK(err < 1e-10);
  }
  // direct DFT comparison on a mixed-radix size
  const std::size_t n = 40;
  std::vector<fft::Complex> z(n);
  for (auto& v : z) v = {d(gen), d(gen)};
  auto zf = z;
  fft::transform(zf, false);
  for (std::size_t k = 0; k < n; ++k) {
    fft::Complex acc = 0;
    for (std::size_t j = 0; j < n; ++j) acc += z[j] * std::polar(1.0, -2 * std::numbers::pi * double(j * k) / double(n));
    CHECK(std::abs(acc - zf[k]) < 1e-12);
  }
  std::vector<fft::Complex> grid(64 * 64);
  for (auto& v : grid) v = {d(gen), 0.0};
  auto orig = grid;
  fft::transform_2d(grid, 64, 64, false);
  fft::transform_2d(grid, 64, 64, true);
  double err = 0;
  for (std::size_t i = 0; i < grid.size(); ++i) err = std::max(err, std::abs(grid[i] / 4096.0 - orig[i]));
  CHECK(err < 1e-10);
}

TEST_CASE("field map and propagate gradients use the transpose") {
  std::mt19937_64 gen(23);
  auto map = std::make_shared<DoubleMap>(6);
  expect_gradcheck([map](auto& in) { return apply_field_map(in[0], map); }, {random_tensor({3, 6}, gen)});
  expect_gradcheck([map](auto& in) { return propagate(in[0], in[1], map, 0.1, 4); },
                   {random_tensor({2, 6}, gen), random_tensor({2, 4, 6}, gen)});
  expect_gradcheck([map](auto& in) { return propagate(in[0], Tensor(), map, 0.1, 3); },
                   {random_tensor({6}, gen)});
}

TEST_CASE("adam examples") {
  std::vector<Tensor> p{Tensor({2}, {0.3, -0.7}, true)};
  auto st = make_adam_state(p, {0.1});
  adam_step(p, st);  // no gradient yet
  CHECK(p[0].at(0) == 0.3);
  CHECK(p[0].at(1) == -0.7);

  std::vector<Tensor> x{Tensor::scalar(1.0, true)};
  auto sx = make_adam_state(x, {0.1});
  backward(square(x[0]));
  adam_step(x, sx);
  CHECK(std::abs(x[0].item()) < 1.0);

  std::vector<Tensor> q{Tensor({2}, {1.5, -2.0}, true)};
  auto sq = make_adam_state(q, {0.05});
  double loss = 0;
  for (int i = 0; i < 500; ++i) {
    zero_grads(q);
    auto l = sum(mul(square(q[0]), Tensor({2}, {1.0, 3.0})));
    backward(l);
    adam_step(q, sq);
    loss = sum(mul(square(q[0]), Tensor({2}, {1.0, 3.0}))).item();
  }
  CHECK(loss < 1e-6);
}

TEST_CASE("tape replay is deterministic") {
  auto run = [] {
    std::mt19937_64 gen(29);
    auto a = random_tensor({4, 8}, gen, -1, 1, true);
    auto k = random_tensor({2, 4, 3}, gen, -1, 1, true);
    auto l = sum(square(gelu(conv(a, k, Padding::periodic))));
    backward(l);
    return std::make_pair(l.item(), std::vector<double>(k.grad().begin(), k.grad().end()));
  };
  auto r1 = run();
  auto r2 = run();
  CHECK(r1.first == r2.first);
  CHECK(r1.second == r2.second);
}
