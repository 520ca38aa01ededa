#pragma once

#include <memory>
#include <span>
#include <vector>

#include "spdectl/tensor.hpp"

namespace spdectl {

// Binary ops broadcast by the trailing-dimension rule: shapes are aligned from
// the right and each pair of extents must agree or one of them must be 1.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);

Tensor neg(const Tensor& a);
Tensor scale(const Tensor& a, double factor);
Tensor add_scalar(const Tensor& a, double offset);
Tensor square(const Tensor& a);
/// Gradient at exactly zero is taken as zero (subgradient of the norm).
Tensor sqrt(const Tensor& a);
Tensor tanh(const Tensor& a);
Tensor relu(const Tensor& a);
Tensor gelu(const Tensor& a);

enum class Elementwise { add, sub, mul, div, neg, square, sqrt, tanh, relu, gelu };

/// Tag-dispatched form of the ops above; `b` is required for binary tags only.
Tensor elementwise(Elementwise op, const Tensor& a, const Tensor* b = nullptr);

Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);
Tensor sum_axis(const Tensor& a, std::size_t axis);
/// Sums every axis from `keep` onwards; result shape is shape[0:keep].
Tensor sum_trailing(const Tensor& a, std::size_t keep);

Tensor reshape(const Tensor& a, Shape shape);
Tensor concat(const std::vector<Tensor>& parts, std::size_t axis);
Tensor slice(const Tensor& a, std::size_t axis, std::size_t start, std::size_t length);

/// [m,k] x [k,n] -> [m,n].
Tensor matmul(const Tensor& a, const Tensor& b);
/// x[..., in] * weight[in, out] + bias[out].
Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias);

enum class Padding { zero, periodic };

/// Cross-correlation over 1 or 2 spatial axes.
///   x:      [batch, c_in, s...] or [c_in, s...]
///   kernel: [c_out, c_in, k...] with odd k; output keeps the spatial extent.
Tensor conv(const Tensor& x, const Tensor& kernel, Padding padding);

/// Fourier layer: FFT over the spatial axes, a complex c_in -> c_out linear map
/// on the retained low modes, zero elsewhere, inverse FFT.
///   x:       [batch, c_in, n] or [batch, c_in, n1, n2]
///   weights: [c_in, c_out, modes, 2] (1-D) or [c_in, c_out, 2*modes, modes, 2]
///            (2-D, rows k1 in [0,modes) then [n1-modes, n1)); last axis is (re, im).
/// 1-D accepts modes <= n/2+1; 2-D needs 2*modes <= n1 and modes <= n2/2+1.
Tensor spectral_multiply(const Tensor& x, const Tensor& weights, std::size_t modes);

/// A linear map acting on one spatial field block of `field_size()` values.
class FieldMap {
 public:
  virtual ~FieldMap() = default;
  virtual std::size_t field_size() const = 0;
  virtual void apply(std::span<const double> in, std::span<double> out) const = 0;
  virtual void apply_transpose(std::span<const double> in, std::span<double> out) const = 0;
};

/// Applies `map` to every trailing field block of `x`.
Tensor apply_field_map(const Tensor& x, std::shared_ptr<const FieldMap> map);

/// Linear recursion I_{k+1} = P(I_k + dt * z_k), I_0 = init.
///   init:    [..., F]
///   forcing: [..., steps, F] or undefined (treated as zero)
/// Returns [..., steps + 1, F].
Tensor propagate(const Tensor& init, const Tensor& forcing,
                 std::shared_ptr<const FieldMap> solve, double dt, std::size_t steps);

}  // namespace spdectl
