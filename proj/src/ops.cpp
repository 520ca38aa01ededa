#include "spdectl/ops.hpp"

#include <Eigen/Core>
#include <cmath>
#include <numbers>

namespace spdectl {

namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMatrix>;
using MutMap = Eigen::Map<RowMatrix>;

struct BroadcastPlan {
  Shape out;
  bool same = false;
  std::vector<std::size_t> ia, ib;
};

std::shared_ptr<const BroadcastPlan> plan_broadcast(const Shape& a, const Shape& b,
                                                    const char* op) {
  auto plan = std::make_shared<BroadcastPlan>();
  if (a == b) {
    plan->out = a;
    plan->same = true;
    return plan;
  }
  const std::size_t nd = std::max(a.size(), b.size());
  Shape pa(nd, 1), pb(nd, 1);
  std::copy(a.begin(), a.end(), pa.begin() + static_cast<std::ptrdiff_t>(nd - a.size()));
  std::copy(b.begin(), b.end(), pb.begin() + static_cast<std::ptrdiff_t>(nd - b.size()));
  plan->out.resize(nd);
  for (std::size_t d = 0; d < nd; ++d) {
    if (pa[d] != pb[d] && pa[d] != 1 && pb[d] != 1) {
      throw TensorError(std::string(op) + ": cannot broadcast " + shape_str(a) + " with " +
                        shape_str(b));
    }
    plan->out[d] = std::max(pa[d], pb[d]);
  }
  std::vector<std::size_t> sa(nd, 0), sb(nd, 0);
  std::size_t ra = 1, rb = 1;
  for (std::size_t d = nd; d-- > 0;) {
    sa[d] = pa[d] == 1 ? 0 : ra;
    sb[d] = pb[d] == 1 ? 0 : rb;
    ra *= pa[d];
    rb *= pb[d];
  }
  const std::size_t total = numel_of(plan->out);
  plan->ia.resize(total);
  plan->ib.resize(total);
  std::vector<std::size_t> idx(nd, 0);
  std::size_t oa = 0, ob = 0;
  for (std::size_t i = 0; i < total; ++i) {
    plan->ia[i] = oa;
    plan->ib[i] = ob;
    for (std::size_t d = nd; d-- > 0;) {
      ++idx[d];
      oa += sa[d];
      ob += sb[d];
      if (idx[d] < plan->out[d]) break;
      oa -= sa[d] * idx[d];
      ob -= sb[d] * idx[d];
      idx[d] = 0;
    }
  }
  return plan;
}

enum class BinaryKind { add, sub, mul, div };

Tensor binary(BinaryKind kind, const Tensor& a, const Tensor& b) {
  static constexpr const char* names[] = {"add", "sub", "mul", "div"};
  const char* name = names[static_cast<int>(kind)];
  auto plan = plan_broadcast(a.shape(), b.shape(), name);
  auto av = a.values();
  auto bv = b.values();
  const std::size_t total = numel_of(plan->out);
  std::vector<double> out(total);
  auto ia = [&](std::size_t i) { return plan->same ? i : plan->ia[i]; };
  auto ib = [&](std::size_t i) { return plan->same ? i : plan->ib[i]; };
  switch (kind) {
    case BinaryKind::add:
      for (std::size_t i = 0; i < total; ++i) out[i] = av[ia(i)] + bv[ib(i)];
      break;
    case BinaryKind::sub:
      for (std::size_t i = 0; i < total; ++i) out[i] = av[ia(i)] - bv[ib(i)];
      break;
    case BinaryKind::mul:
      for (std::size_t i = 0; i < total; ++i) out[i] = av[ia(i)] * bv[ib(i)];
      break;
    case BinaryKind::div:
      for (std::size_t i = 0; i < total; ++i) out[i] = av[ia(i)] / bv[ib(i)];
      break;
  }
  return make_result(name, plan->out, std::move(out), {a, b}, [kind, plan](detail::Node& self) {
    auto& pa = *self.parents[0];
    auto& pb = *self.parents[1];
    const auto& g = self.grad;
    const std::size_t total = g.size();
    auto ia = [&](std::size_t i) { return plan->same ? i : plan->ia[i]; };
    auto ib = [&](std::size_t i) { return plan->same ? i : plan->ib[i]; };
    if (pa.requires_grad) {
      auto& ga = pa.grad_buffer();
      switch (kind) {
        case BinaryKind::add:
        case BinaryKind::sub:
          for (std::size_t i = 0; i < total; ++i) ga[ia(i)] += g[i];
          break;
        case BinaryKind::mul:
          for (std::size_t i = 0; i < total; ++i) ga[ia(i)] += g[i] * pb.value[ib(i)];
          break;
        case BinaryKind::div:
          for (std::size_t i = 0; i < total; ++i) ga[ia(i)] += g[i] / pb.value[ib(i)];
          break;
      }
    }
    if (pb.requires_grad) {
      auto& gb = pb.grad_buffer();
      switch (kind) {
        case BinaryKind::add:
          for (std::size_t i = 0; i < total; ++i) gb[ib(i)] += g[i];
          break;
        case BinaryKind::sub:
          for (std::size_t i = 0; i < total; ++i) gb[ib(i)] -= g[i];
          break;
        case BinaryKind::mul:
          for (std::size_t i = 0; i < total; ++i) gb[ib(i)] += g[i] * pa.value[ia(i)];
          break;
        case BinaryKind::div:
          for (std::size_t i = 0; i < total; ++i) {
            const double bvi = pb.value[ib(i)];
            gb[ib(i)] -= g[i] * pa.value[ia(i)] / (bvi * bvi);
          }
          break;
      }
    }
  });
}

// Unary op with derivative expressed through (input, output).
template <class Fwd, class Deriv>
Tensor unary(const char* name, const Tensor& a, Fwd fwd, Deriv deriv) {
  auto av = a.values();
  std::vector<double> out(av.size());
  for (std::size_t i = 0; i < av.size(); ++i) out[i] = fwd(av[i]);
  return make_result(name, a.shape(), std::move(out), {a}, [deriv](detail::Node& self) {
    auto& p = *self.parents[0];
    auto& gp = p.grad_buffer();
    for (std::size_t i = 0; i < gp.size(); ++i) {
      gp[i] += self.grad[i] * deriv(p.value[i], self.value[i]);
    }
  });
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) { return binary(BinaryKind::add, a, b); }
Tensor sub(const Tensor& a, const Tensor& b) { return binary(BinaryKind::sub, a, b); }
Tensor mul(const Tensor& a, const Tensor& b) { return binary(BinaryKind::mul, a, b); }
Tensor div(const Tensor& a, const Tensor& b) { return binary(BinaryKind::div, a, b); }

Tensor neg(const Tensor& a) {
  return unary("neg", a, [](double x) { return -x; }, [](double, double) { return -1.0; });
}

Tensor scale(const Tensor& a, double factor) {
  return unary("scale", a, [factor](double x) { return factor * x; },
               [factor](double, double) { return factor; });
}

Tensor add_scalar(const Tensor& a, double offset) {
  return unary("add_scalar", a, [offset](double x) { return x + offset; },
               [](double, double) { return 1.0; });
}

Tensor square(const Tensor& a) {
  return unary("square", a, [](double x) { return x * x; },
               [](double x, double) { return 2.0 * x; });
}

Tensor sqrt(const Tensor& a) {
  for (double v : a.values()) {
    if (v < 0.0) throw TensorError("sqrt of negative value");
  }
  return unary("sqrt", a, [](double x) { return std::sqrt(x); },
               [](double, double y) { return y > 0.0 ? 0.5 / y : 0.0; });
}

Tensor tanh(const Tensor& a) {
  return unary("tanh", a, [](double x) { return std::tanh(x); },
               [](double, double y) { return 1.0 - y * y; });
}

Tensor relu(const Tensor& a) {
  return unary("relu", a, [](double x) { return x > 0.0 ? x : 0.0; },
               [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Tensor gelu(const Tensor& a) {
  // Exact form x * Phi(x).
  constexpr double inv_sqrt2 = 0.70710678118654752440;
  const double inv_sqrt_2pi = 0.5 * std::numbers::inv_sqrtpi * std::numbers::sqrt2;
  return unary(
      "gelu", a, [](double x) { return 0.5 * x * (1.0 + std::erf(x * inv_sqrt2)); },
      [inv_sqrt_2pi](double x, double) {
        return 0.5 * (1.0 + std::erf(x * inv_sqrt2)) + x * inv_sqrt_2pi * std::exp(-0.5 * x * x);
      });
}

Tensor elementwise(Elementwise op, const Tensor& a, const Tensor* b) {
  auto need_b = [&]() -> const Tensor& {
    if (!b || !b->defined()) throw TensorError("binary elementwise op needs a second operand");
    return *b;
  };
  switch (op) {
    case Elementwise::add: return add(a, need_b());
    case Elementwise::sub: return sub(a, need_b());
    case Elementwise::mul: return mul(a, need_b());
    case Elementwise::div: return div(a, need_b());
    case Elementwise::neg: return neg(a);
    case Elementwise::square: return square(a);
    case Elementwise::sqrt: return sqrt(a);
    case Elementwise::tanh: return tanh(a);
    case Elementwise::relu: return relu(a);
    case Elementwise::gelu: return gelu(a);
  }
  throw TensorError("unknown elementwise op");
}

Tensor sum(const Tensor& a) {
  double s = 0.0;
  for (double v : a.values()) s += v;
  return make_result("sum", {}, {s}, {a}, [](detail::Node& self) {
    auto& gp = self.parents[0]->grad_buffer();
    for (auto& g : gp) g += self.grad[0];
  });
}

Tensor mean(const Tensor& a) { return scale(sum(a), 1.0 / static_cast<double>(a.numel())); }

Tensor sum_axis(const Tensor& a, std::size_t axis) {
  const auto& sh = a.shape();
  if (axis >= sh.size()) throw TensorError("sum_axis: axis out of range for " + shape_str(sh));
  std::size_t outer = 1, inner = 1;
  for (std::size_t d = 0; d < axis; ++d) outer *= sh[d];
  for (std::size_t d = axis + 1; d < sh.size(); ++d) inner *= sh[d];
  const std::size_t n = sh[axis];
  Shape out_shape;
  for (std::size_t d = 0; d < sh.size(); ++d) {
    if (d != axis) out_shape.push_back(sh[d]);
  }
  auto av = a.values();
  std::vector<double> out(outer * inner, 0.0);
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t k = 0; k < n; ++k) {
      const double* src = av.data() + (o * n + k) * inner;
      double* dst = out.data() + o * inner;
      for (std::size_t i = 0; i < inner; ++i) dst[i] += src[i];
    }
  }
  return make_result("sum_axis", out_shape, std::move(out), {a},
                     [outer, inner, n](detail::Node& self) {
                       auto& gp = self.parents[0]->grad_buffer();
                       for (std::size_t o = 0; o < outer; ++o) {
                         for (std::size_t k = 0; k < n; ++k) {
                           double* dst = gp.data() + (o * n + k) * inner;
                           const double* src = self.grad.data() + o * inner;
                           for (std::size_t i = 0; i < inner; ++i) dst[i] += src[i];
                         }
                       }
                     });
}

Tensor sum_trailing(const Tensor& a, std::size_t keep) {
  const auto& sh = a.shape();
  if (keep > sh.size()) throw TensorError("sum_trailing: keep exceeds rank");
  Shape lead(sh.begin(), sh.begin() + static_cast<std::ptrdiff_t>(keep));
  const std::size_t rows = numel_of(lead);
  const std::size_t cols = a.numel() / rows;
  auto av = a.values();
  std::vector<double> out(rows, 0.0);
  for (std::size_t r = 0; r < rows; ++r) {
    double s = 0.0;
    for (std::size_t c = 0; c < cols; ++c) s += av[r * cols + c];
    out[r] = s;
  }
  return make_result("sum_trailing", lead, std::move(out), {a}, [cols](detail::Node& self) {
    auto& gp = self.parents[0]->grad_buffer();
    for (std::size_t r = 0; r < self.grad.size(); ++r) {
      for (std::size_t c = 0; c < cols; ++c) gp[r * cols + c] += self.grad[r];
    }
  });
}

Tensor reshape(const Tensor& a, Shape shape) {
  if (numel_of(shape) != a.numel()) {
    throw TensorError("reshape " + shape_str(a.shape()) + " -> " + shape_str(shape));
  }
  return make_result("reshape", std::move(shape), a.to_vector(), {a}, [](detail::Node& self) {
    auto& gp = self.parents[0]->grad_buffer();
    for (std::size_t i = 0; i < gp.size(); ++i) gp[i] += self.grad[i];
  });
}

Tensor concat(const std::vector<Tensor>& parts, std::size_t axis) {
  if (parts.empty()) throw TensorError("concat of zero tensors");
  const Shape& ref = parts[0].shape();
  if (axis >= ref.size()) throw TensorError("concat: axis out of range");
  std::size_t outer = 1, inner = 1;
  for (std::size_t d = 0; d < axis; ++d) outer *= ref[d];
  for (std::size_t d = axis + 1; d < ref.size(); ++d) inner *= ref[d];
  std::vector<std::size_t> widths;
  std::size_t total_axis = 0;
  for (const auto& p : parts) {
    const auto& s = p.shape();
    bool ok = s.size() == ref.size();
    for (std::size_t d = 0; ok && d < s.size(); ++d) ok = d == axis || s[d] == ref[d];
    if (!ok) throw TensorError("concat: " + shape_str(s) + " incompatible with " + shape_str(ref));
    widths.push_back(s[axis] * inner);
    total_axis += s[axis];
  }
  Shape out_shape = ref;
  out_shape[axis] = total_axis;
  const std::size_t row = total_axis * inner;
  std::vector<double> out(outer * row);
  std::size_t offset = 0;
  for (std::size_t p = 0; p < parts.size(); ++p) {
    auto v = parts[p].values();
    for (std::size_t o = 0; o < outer; ++o) {
      std::copy_n(v.data() + o * widths[p], widths[p], out.data() + o * row + offset);
    }
    offset += widths[p];
  }
  return make_result("concat", out_shape, std::move(out), parts,
                     [widths, outer, row](detail::Node& self) {
                       std::size_t offset = 0;
                       for (std::size_t p = 0; p < self.parents.size(); ++p) {
                         auto& parent = *self.parents[p];
                         if (parent.requires_grad) {
                           auto& gp = parent.grad_buffer();
                           for (std::size_t o = 0; o < outer; ++o) {
                             const double* src = self.grad.data() + o * row + offset;
                             double* dst = gp.data() + o * widths[p];
                             for (std::size_t i = 0; i < widths[p]; ++i) dst[i] += src[i];
                           }
                         }
                         offset += widths[p];
                       }
                     });
}

Tensor slice(const Tensor& a, std::size_t axis, std::size_t start, std::size_t length) {
  const auto& sh = a.shape();
  if (axis >= sh.size() || length == 0 || start + length > sh[axis]) {
    throw TensorError("slice out of range on " + shape_str(sh));
  }
  std::size_t outer = 1, inner = 1;
  for (std::size_t d = 0; d < axis; ++d) outer *= sh[d];
  for (std::size_t d = axis + 1; d < sh.size(); ++d) inner *= sh[d];
  const std::size_t src_row = sh[axis] * inner;
  const std::size_t dst_row = length * inner;
  const std::size_t off = start * inner;
  Shape out_shape = sh;
  out_shape[axis] = length;
  auto av = a.values();
  std::vector<double> out(outer * dst_row);
  for (std::size_t o = 0; o < outer; ++o) {
    std::copy_n(av.data() + o * src_row + off, dst_row, out.data() + o * dst_row);
  }
  return make_result("slice", out_shape, std::move(out), {a},
                     [outer, src_row, dst_row, off](detail::Node& self) {
                       auto& gp = self.parents[0]->grad_buffer();
                       for (std::size_t o = 0; o < outer; ++o) {
                         const double* src = self.grad.data() + o * dst_row;
                         double* dst = gp.data() + o * src_row + off;
                         for (std::size_t i = 0; i < dst_row; ++i) dst[i] += src[i];
                       }
                     });
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.dim() != 2 || b.dim() != 2 || a.size(1) != b.size(0)) {
    throw TensorError("matmul: " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
  }
  const auto m = static_cast<Eigen::Index>(a.size(0));
  const auto k = static_cast<Eigen::Index>(a.size(1));
  const auto n = static_cast<Eigen::Index>(b.size(1));
  std::vector<double> out(static_cast<std::size_t>(m * n));
  MutMap(out.data(), m, n).noalias() =
      ConstMap(a.values().data(), m, k) * ConstMap(b.values().data(), k, n);
  return make_result("matmul", {a.size(0), b.size(1)}, std::move(out), {a, b},
                     [m, k, n](detail::Node& self) {
                       auto& pa = *self.parents[0];
                       auto& pb = *self.parents[1];
                       ConstMap g(self.grad.data(), m, n);
                       if (pa.requires_grad) {
                         MutMap(pa.grad_buffer().data(), m, k).noalias() +=
                             g * ConstMap(pb.value.data(), k, n).transpose();
                       }
                       if (pb.requires_grad) {
                         MutMap(pb.grad_buffer().data(), k, n).noalias() +=
                             ConstMap(pa.value.data(), m, k).transpose() * g;
                       }
                     });
}

Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias) {
  if (x.dim() == 0 || weight.dim() != 2 || x.shape().back() != weight.size(0)) {
    throw TensorError("linear: input " + shape_str(x.shape()) + " vs weight " +
                      shape_str(weight.shape()));
  }
  Shape out_shape = x.shape();
  out_shape.back() = weight.size(1);
  const std::size_t rows = x.numel() / weight.size(0);
  auto y = matmul(reshape(x, {rows, weight.size(0)}), weight);
  if (bias.defined()) y = add(y, bias);
  return reshape(y, out_shape);
}

}  // namespace spdectl
