#include "spdectl/fft.hpp"

#include <cmath>
#include <map>
#include <memory>
#include <numbers>
#include <stdexcept>

namespace spdectl::fft {

namespace {

struct Plan {
  std::size_t n = 0;
  std::vector<std::size_t> factors;
  std::vector<Complex> twiddle;  // exp(-2 pi i j / n)
};

std::vector<std::size_t> factorize(std::size_t n) {
  std::vector<std::size_t> f;
  while (n % 4 == 0) {
    f.push_back(4);
    n /= 4;
  }
  for (std::size_t p : {2u, 3u, 5u}) {
    while (n % p == 0) {
      f.push_back(p);
      n /= p;
    }
  }
  for (std::size_t p = 7; p * p <= n; p += 2) {
    while (n % p == 0) {
      f.push_back(p);
      n /= p;
    }
  }
  if (n > 1) f.push_back(n);
  return f;
}

const Plan& plan_for(std::size_t n) {
  thread_local std::map<std::size_t, std::unique_ptr<Plan>> cache;
  auto& slot = cache[n];
  if (!slot) {
    slot = std::make_unique<Plan>();
    slot->n = n;
    slot->factors = factorize(n);
    slot->twiddle.resize(n);
    for (std::size_t j = 0; j < n; ++j) {
      const double angle = -2.0 * std::numbers::pi * static_cast<double>(j) / static_cast<double>(n);
      slot->twiddle[j] = {std::cos(angle), std::sin(angle)};
    }
  }
  return *slot;
}

// Decimation in time: out[0..n) is the DFT of in[0], in[stride], ...
// `tw_step` maps the local n-th roots onto the plan's N-th root table.
void recurse(const Complex* in, std::size_t stride, Complex* out, std::size_t n,
             const Plan& plan, std::size_t level, bool inverse, std::vector<Complex>& scratch) {
  if (n == 1) {
    out[0] = in[0];
    return;
  }
  const std::size_t p = plan.factors[level];
  const std::size_t m = n / p;
  for (std::size_t q = 0; q < p; ++q) {
    recurse(in + q * stride, stride * p, out + q * m, m, plan, level + 1, inverse, scratch);
  }
  const std::size_t tw_step = plan.n / n;
  auto root = [&](std::size_t e) {
    const Complex w = plan.twiddle[(e % n) * tw_step];
    return inverse ? std::conj(w) : w;
  };
  scratch.resize(std::max(scratch.size(), p));
  Complex tmp[5];
  for (std::size_t k = 0; k < m; ++k) {
    // Twiddled inputs t_q = w_n^{qk} * out[q*m + k].
    Complex* t = p <= 5 ? tmp : scratch.data();
    for (std::size_t q = 0; q < p; ++q) t[q] = out[q * m + k] * root(q * k);
    if (p == 2) {
      out[k] = t[0] + t[1];
      out[k + m] = t[0] - t[1];
    } else if (p == 4) {
      const Complex a0 = t[0] + t[2], a1 = t[0] - t[2];
      const Complex b0 = t[1] + t[3];
      Complex b1 = t[1] - t[3];
      // multiply by -i (forward) or +i (inverse)
      b1 = inverse ? Complex(-b1.imag(), b1.real()) : Complex(b1.imag(), -b1.real());
      out[k] = a0 + b0;
      out[k + m] = a1 + b1;
      out[k + 2 * m] = a0 - b0;
      out[k + 3 * m] = a1 - b1;
    } else {
      // generic p-point DFT on the twiddled values
      Complex local[5];
      std::vector<Complex> big;
      Complex* res = local;
      if (p > 5) {
        big.resize(p);
        res = big.data();
      }
      for (std::size_t r = 0; r < p; ++r) {
        Complex acc = 0.0;
        for (std::size_t q = 0; q < p; ++q) acc += t[q] * root(q * r * m);
        res[r] = acc;
      }
      for (std::size_t r = 0; r < p; ++r) out[k + r * m] = res[r];
    }
  }
}

}  // namespace

void transform(std::span<Complex> data, bool inverse) {
  const std::size_t n = data.size();
  if (n <= 1) return;
  const Plan& plan = plan_for(n);
  std::vector<Complex> input(data.begin(), data.end());
  std::vector<Complex> scratch;
  recurse(input.data(), 1, data.data(), n, plan, 0, inverse, scratch);
}

void transform_2d(std::span<Complex> data, std::size_t rows, std::size_t cols, bool inverse) {
  if (data.size() != rows * cols) throw std::invalid_argument("transform_2d: size mismatch");
  for (std::size_t r = 0; r < rows; ++r) transform(data.subspan(r * cols, cols), inverse);
  std::vector<Complex> column(rows);
  for (std::size_t c = 0; c < cols; ++c) {
    for (std::size_t r = 0; r < rows; ++r) column[r] = data[r * cols + c];
    transform(column, inverse);
    for (std::size_t r = 0; r < rows; ++r) data[r * cols + c] = column[r];
  }
}

void transform_nd(std::span<Complex> data, std::span<const std::size_t> extents, bool inverse) {
  if (extents.size() == 1) {
    transform(data, inverse);
  } else if (extents.size() == 2) {
    transform_2d(data, extents[0], extents[1], inverse);
  } else {
    throw std::invalid_argument("transform_nd supports 1 or 2 axes");
  }
}

std::vector<Complex> forward_real(std::span<const double> x) {
  std::vector<Complex> c(x.begin(), x.end());
  transform(c, false);
  return c;
}

std::vector<double> inverse_real(std::span<const Complex> spectrum) {
  std::vector<Complex> c(spectrum.begin(), spectrum.end());
  transform(c, true);
  std::vector<double> out(c.size());
  const double inv = 1.0 / static_cast<double>(c.size());
  for (std::size_t i = 0; i < c.size(); ++i) out[i] = c[i].real() * inv;
  return out;
}

}  // namespace spdectl::fft
