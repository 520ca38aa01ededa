#pragma once

#include <complex>
#include <cstddef>
#include <span>
#include <vector>

namespace spdectl::fft {

using Complex = std::complex<double>;

/// In-place mixed-radix DFT of any length (radix 2/3/4/5 butterflies, direct
/// DFT for other prime factors). Unnormalized in both directions:
///   forward  X_k = sum_j x_j exp(-2 pi i jk / n)
///   inverse  x_j = sum_k X_k exp(+2 pi i jk / n)
void transform(std::span<Complex> data, bool inverse);

/// 2-D transform of a row-major [rows x cols] array.
void transform_2d(std::span<Complex> data, std::size_t rows, std::size_t cols, bool inverse);

/// Transform over 1 or 2 trailing spatial extents (`extents.size()` in {1,2}).
void transform_nd(std::span<Complex> data, std::span<const std::size_t> extents, bool inverse);

/// Real-to-complex forward transform returning all n bins.
std::vector<Complex> forward_real(std::span<const double> x);
/// Inverse of `forward_real` including the 1/n factor; imaginary parts dropped.
std::vector<double> inverse_real(std::span<const Complex> spectrum);

/// Signed integer wavenumber for bin k of an n-point transform.
inline long wavenumber(std::size_t k, std::size_t n) {
  return k <= n / 2 ? static_cast<long>(k) : static_cast<long>(k) - static_cast<long>(n);
}

}  // namespace spdectl::fft
