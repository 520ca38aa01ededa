#include <Eigen/Core>

#include "spdectl/fft.hpp"
#include "spdectl/ops.hpp"

namespace spdectl {

namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMatrix>;
using MutMap = Eigen::Map<RowMatrix>;

struct ConvGeometry {
  std::size_t batch = 1, c_in = 0, c_out = 0;
  std::vector<std::size_t> extent;  // spatial extents
  std::size_t ksize = 0;            // per-axis kernel width
  std::size_t positions = 0;        // product of extents
  std::size_t taps = 0;             // ksize ^ ndim
  bool batched = true;
  Padding padding = Padding::zero;
};

// For each (position, tap) the flat input offset within one channel plane, or
// -1 when the tap falls into zero padding.
std::vector<long> tap_table(const ConvGeometry& g) {
  const long half = static_cast<long>(g.ksize / 2);
  std::vector<long> table(g.positions * g.taps);
  if (g.extent.size() == 1) {
    const long n = static_cast<long>(g.extent[0]);
    for (long p = 0; p < n; ++p) {
      for (long t = 0; t < static_cast<long>(g.ksize); ++t) {
        long s = p + t - half;
        if (g.padding == Padding::periodic) {
          s = ((s % n) + n) % n;
        } else if (s < 0 || s >= n) {
          s = -1;
        }
        table[static_cast<std::size_t>(p) * g.taps + static_cast<std::size_t>(t)] = s;
      }
    }
  } else {
    const long n0 = static_cast<long>(g.extent[0]);
    const long n1 = static_cast<long>(g.extent[1]);
    const long k = static_cast<long>(g.ksize);
    for (long i = 0; i < n0; ++i) {
      for (long j = 0; j < n1; ++j) {
        for (long a = 0; a < k; ++a) {
          for (long b = 0; b < k; ++b) {
            long si = i + a - half, sj = j + b - half;
            long s;
            if (g.padding == Padding::periodic) {
              si = ((si % n0) + n0) % n0;
              sj = ((sj % n1) + n1) % n1;
              s = si * n1 + sj;
            } else {
              s = (si < 0 || si >= n0 || sj < 0 || sj >= n1) ? -1 : si * n1 + sj;
            }
            table[static_cast<std::size_t>(i * n1 + j) * g.taps + static_cast<std::size_t>(a * k + b)] = s;
          }
        }
      }
    }
  }
  return table;
}

}  // namespace

Tensor conv(const Tensor& x, const Tensor& kernel, Padding padding) {
  ConvGeometry g;
  g.padding = padding;
  const std::size_t kdim = kernel.dim();
  if (kdim != 3 && kdim != 4) throw TensorError("conv: kernel must be [c_out, c_in, k] or [c_out, c_in, k, k]");
  const std::size_t nd = kdim - 2;
  g.c_out = kernel.size(0);
  g.c_in = kernel.size(1);
  g.ksize = kernel.size(2);
  if (nd == 2 && kernel.size(3) != g.ksize) throw TensorError("conv: 2-D kernels must be square");
  if (g.ksize % 2 == 0) throw TensorError("conv: even kernel size " + std::to_string(g.ksize) + " rejected");
  if (x.dim() == nd + 2) {
    g.batch = x.size(0);
  } else if (x.dim() == nd + 1) {
    g.batch = 1;
    g.batched = false;
  } else {
    throw TensorError("conv: input " + shape_str(x.shape()) + " vs kernel " + shape_str(kernel.shape()));
  }
  const std::size_t first = g.batched ? 1 : 0;
  if (x.size(first) != g.c_in) {
    throw TensorError("conv: channel mismatch, input " + shape_str(x.shape()) + " kernel " +
                      shape_str(kernel.shape()));
  }
  for (std::size_t d = 0; d < nd; ++d) g.extent.push_back(x.size(first + 1 + d));
  g.positions = numel_of(g.extent);
  g.taps = nd == 1 ? g.ksize : g.ksize * g.ksize;

  auto table = std::make_shared<const std::vector<long>>(tap_table(g));
  const std::size_t cols_rows = g.c_in * g.taps;
  const std::size_t cols_cols = g.batch * g.positions;

  // im2col: row (ci, tap), column (b, position).
  auto cols = std::make_shared<std::vector<double>>(cols_rows * cols_cols, 0.0);
  auto xv = x.values();
  for (std::size_t b = 0; b < g.batch; ++b) {
    for (std::size_t ci = 0; ci < g.c_in; ++ci) {
      const double* plane = xv.data() + (b * g.c_in + ci) * g.positions;
      for (std::size_t t = 0; t < g.taps; ++t) {
        double* row = cols->data() + (ci * g.taps + t) * cols_cols + b * g.positions;
        for (std::size_t p = 0; p < g.positions; ++p) {
          const long s = (*table)[p * g.taps + t];
          row[p] = s < 0 ? 0.0 : plane[s];
        }
      }
    }
  }

  const auto co = static_cast<Eigen::Index>(g.c_out);
  const auto kr = static_cast<Eigen::Index>(cols_rows);
  const auto cc = static_cast<Eigen::Index>(cols_cols);
  RowMatrix prod = ConstMap(kernel.values().data(), co, kr) * ConstMap(cols->data(), kr, cc);

  std::vector<double> out(g.batch * g.c_out * g.positions);
  for (std::size_t b = 0; b < g.batch; ++b) {
    for (std::size_t o = 0; o < g.c_out; ++o) {
      std::copy_n(prod.data() + o * cols_cols + b * g.positions, g.positions,
                  out.data() + (b * g.c_out + o) * g.positions);
    }
  }
  Shape out_shape = x.shape();
  out_shape[first] = g.c_out;

  return make_result("conv", out_shape, std::move(out), {x, kernel},
                     [g, table, cols, co, kr, cc](detail::Node& self) {
                       auto& px = *self.parents[0];
                       auto& pk = *self.parents[1];
                       // gather the output gradient into [c_out, (b, position)]
                       RowMatrix gout(co, cc);
                       for (std::size_t b = 0; b < g.batch; ++b) {
                         for (std::size_t o = 0; o < g.c_out; ++o) {
                           std::copy_n(self.grad.data() + (b * g.c_out + o) * g.positions,
                                       g.positions, gout.data() + o * cc + b * g.positions);
                         }
                       }
                       if (pk.requires_grad) {
                         MutMap(pk.grad_buffer().data(), co, kr).noalias() +=
                             gout * ConstMap(cols->data(), kr, cc).transpose();
                       }
                       if (px.requires_grad) {
                         RowMatrix gcols = ConstMap(pk.value.data(), co, kr).transpose() * gout;
                         auto& gx = px.grad_buffer();
                         for (std::size_t b = 0; b < g.batch; ++b) {
                           for (std::size_t ci = 0; ci < g.c_in; ++ci) {
                             double* plane = gx.data() + (b * g.c_in + ci) * g.positions;
                             for (std::size_t t = 0; t < g.taps; ++t) {
                               const double* row = gcols.data() + (ci * g.taps + t) * cc + b * g.positions;
                               for (std::size_t p = 0; p < g.positions; ++p) {
                                 const long s = (*table)[p * g.taps + t];
                                 if (s >= 0) plane[s] += row[p];
                               }
                             }
                           }
                         }
                       }
                     });
}

Tensor spectral_multiply(const Tensor& x, const Tensor& weights, std::size_t modes) {
  using fft::Complex;
  const std::size_t nd = x.dim() - 2;
  if (x.dim() < 3 || nd > 2) throw TensorError("spectral_multiply: input must be [batch, c, n] or [batch, c, n1, n2]");
  const std::size_t batch = x.size(0), c_in = x.size(1);
  std::vector<std::size_t> ext(x.shape().begin() + 2, x.shape().end());
  const std::size_t npos = numel_of(ext);
  if (weights.dim() != nd + 3 || weights.size(0) != c_in || weights.shape().back() != 2) {
    throw TensorError("spectral_multiply: weights " + shape_str(weights.shape()) + " do not match input " +
                      shape_str(x.shape()));
  }
  const std::size_t c_out = weights.size(1);
  const std::size_t last = ext.back();
  if (modes == 0 || modes > last / 2 + 1 || (nd == 2 && 2 * modes > ext[0])) {
    throw TensorError("spectral_multiply: modes " + std::to_string(modes) + " out of range for " +
                      shape_str(x.shape()));
  }
  if ((nd == 1 && weights.size(2) != modes) ||
      (nd == 2 && (weights.size(2) != 2 * modes || weights.size(3) != modes))) {
    throw TensorError("spectral_multiply: weight mode extents do not match modes=" + std::to_string(modes));
  }

  // Retained bins: flat spectral index, weight mode index, Hermitian weight c_k.
  struct Bin {
    std::size_t flat, widx;
    double weight;
  };
  auto bins = std::make_shared<std::vector<Bin>>();
  auto herm = [&](std::size_t k) { return (k == 0 || (last % 2 == 0 && k == last / 2)) ? 1.0 : 2.0; };
  if (nd == 1) {
    for (std::size_t k = 0; k < modes; ++k) bins->push_back({k, k, herm(k)});
  } else {
    for (std::size_t r = 0; r < 2 * modes; ++r) {
      const std::size_t k1 = r < modes ? r : ext[0] - 2 * modes + r;
      for (std::size_t k2 = 0; k2 < modes; ++k2) {
        bins->push_back({k1 * last + k2, r * modes + k2, herm(k2)});
      }
    }
  }
  const std::size_t nmodes = bins->size();
  const double inv_n = 1.0 / static_cast<double>(npos);

  // Forward spectra of every input channel at the retained bins.
  auto xhat = std::make_shared<std::vector<Complex>>(batch * c_in * nmodes);
  auto xv = x.values();
  std::vector<Complex> work(npos);
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t ci = 0; ci < c_in; ++ci) {
      const double* src = xv.data() + (b * c_in + ci) * npos;
      for (std::size_t p = 0; p < npos; ++p) work[p] = src[p];
      fft::transform_nd(work, ext, false);
      for (std::size_t m = 0; m < nmodes; ++m) (*xhat)[(b * c_in + ci) * nmodes + m] = work[(*bins)[m].flat];
    }
  }
  auto wv = weights.values();
  auto wc = [&wv, c_out, nmodes](std::size_t ci, std::size_t co, std::size_t widx) {
    const std::size_t base = ((ci * c_out + co) * nmodes + widx) * 2;
    return Complex(wv[base], wv[base + 1]);
  };

  std::vector<double> out(batch * c_out * npos);
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t co = 0; co < c_out; ++co) {
      std::fill(work.begin(), work.end(), Complex(0.0));
      for (std::size_t m = 0; m < nmodes; ++m) {
        Complex acc = 0.0;
        for (std::size_t ci = 0; ci < c_in; ++ci) acc += wc(ci, co, (*bins)[m].widx) * (*xhat)[(b * c_in + ci) * nmodes + m];
        work[(*bins)[m].flat] = (*bins)[m].weight * acc;
      }
      fft::transform_nd(work, ext, true);
      double* dst = out.data() + (b * c_out + co) * npos;
      for (std::size_t p = 0; p < npos; ++p) dst[p] = work[p].real() * inv_n;
    }
  }
  Shape out_shape = x.shape();
  out_shape[1] = c_out;

  return make_result(
      "spectral_multiply", out_shape, std::move(out), {x, weights},
      [=](detail::Node& self) {
        auto& px = *self.parents[0];
        auto& pw = *self.parents[1];
        const auto& wvals = pw.value;
        auto wcb = [&](std::size_t ci, std::size_t co, std::size_t widx) {
          const std::size_t base = ((ci * c_out + co) * nmodes + widx) * 2;
          return Complex(wvals[base], wvals[base + 1]);
        };
        // gY_k = c_k / N * FFT(g)_k on retained bins
        std::vector<Complex> gy(batch * c_out * nmodes);
        std::vector<Complex> buf(npos);
        for (std::size_t b = 0; b < batch; ++b) {
          for (std::size_t co = 0; co < c_out; ++co) {
            const double* g = self.grad.data() + (b * c_out + co) * npos;
            for (std::size_t p = 0; p < npos; ++p) buf[p] = g[p];
            fft::transform_nd(buf, ext, false);
            for (std::size_t m = 0; m < nmodes; ++m) {
              gy[(b * c_out + co) * nmodes + m] = (*bins)[m].weight * inv_n * buf[(*bins)[m].flat];
            }
          }
        }
        if (pw.requires_grad) {
          auto& gw = pw.grad_buffer();
          for (std::size_t ci = 0; ci < c_in; ++ci) {
            for (std::size_t co = 0; co < c_out; ++co) {
              for (std::size_t m = 0; m < nmodes; ++m) {
                Complex acc = 0.0;
                for (std::size_t b = 0; b < batch; ++b) {
                  acc += std::conj((*xhat)[(b * c_in + ci) * nmodes + m]) * gy[(b * c_out + co) * nmodes + m];
                }
                const std::size_t base = ((ci * c_out + co) * nmodes + (*bins)[m].widx) * 2;
                gw[base] += acc.real();
                gw[base + 1] += acc.imag();
              }
            }
          }
        }
        if (px.requires_grad) {
          auto& gx = px.grad_buffer();
          for (std::size_t b = 0; b < batch; ++b) {
            for (std::size_t ci = 0; ci < c_in; ++ci) {
              std::fill(buf.begin(), buf.end(), Complex(0.0));
              for (std::size_t m = 0; m < nmodes; ++m) {
                Complex acc = 0.0;
                for (std::size_t co = 0; co < c_out; ++co) {
                  acc += std::conj(wcb(ci, co, (*bins)[m].widx)) * gy[(b * c_out + co) * nmodes + m];
                }
                buf[(*bins)[m].flat] = acc;
              }
              fft::transform_nd(buf, ext, true);
              double* dst = gx.data() + (b * c_in + ci) * npos;
              for (std::size_t p = 0; p < npos; ++p) dst[p] += buf[p].real();
            }
          }
        }
      });
}

Tensor apply_field_map(const Tensor& x, std::shared_ptr<const FieldMap> map) {
  const std::size_t f = map->field_size();
  if (x.numel() % f != 0) {
    throw TensorError("apply_field_map: tensor " + shape_str(x.shape()) + " is not a stack of fields of size " +
                      std::to_string(f));
  }
  const std::size_t blocks = x.numel() / f;
  auto xv = x.values();
  std::vector<double> out(x.numel());
  for (std::size_t i = 0; i < blocks; ++i) {
    map->apply(xv.subspan(i * f, f), std::span<double>(out).subspan(i * f, f));
  }
  return make_result("field_map", x.shape(), std::move(out), {x}, [map, f, blocks](detail::Node& self) {
    auto& gp = self.parents[0]->grad_buffer();
    std::vector<double> tmp(f);
    for (std::size_t i = 0; i < blocks; ++i) {
      map->apply_transpose(std::span<const double>(self.grad).subspan(i * f, f), tmp);
      for (std::size_t j = 0; j < f; ++j) gp[i * f + j] += tmp[j];
    }
  });
}

Tensor propagate(const Tensor& init, const Tensor& forcing, std::shared_ptr<const FieldMap> solve,
                 double dt, std::size_t steps) {
  const std::size_t f = solve->field_size();
  if (init.numel() % f != 0 || init.shape().empty() || init.shape().back() != f) {
    throw TensorError("propagate: init " + shape_str(init.shape()) + " must end in a field of size " +
                      std::to_string(f));
  }
  const std::size_t rows = init.numel() / f;
  Shape lead(init.shape().begin(), init.shape().end() - 1);
  const bool has_forcing = forcing.defined();
  if (has_forcing) {
    Shape expect = lead;
    expect.push_back(steps);
    expect.push_back(f);
    if (forcing.shape() != expect) {
      throw TensorError("propagate: forcing " + shape_str(forcing.shape()) + " expected " + shape_str(expect));
    }
  }
  Shape out_shape = lead;
  out_shape.push_back(steps + 1);
  out_shape.push_back(f);
  std::vector<double> out(rows * (steps + 1) * f);
  auto iv = init.values();
  std::span<const double> zv = has_forcing ? forcing.values() : std::span<const double>{};
  std::vector<double> tmp(f);
  for (std::size_t r = 0; r < rows; ++r) {
    double* traj = out.data() + r * (steps + 1) * f;
    std::copy_n(iv.data() + r * f, f, traj);
    for (std::size_t k = 0; k < steps; ++k) {
      const double* cur = traj + k * f;
      if (has_forcing) {
        const double* z = zv.data() + (r * steps + k) * f;
        for (std::size_t j = 0; j < f; ++j) tmp[j] = cur[j] + dt * z[j];
      } else {
        std::copy_n(cur, f, tmp.data());
      }
      solve->apply(tmp, std::span<double>(traj + (k + 1) * f, f));
    }
  }
  std::vector<Tensor> inputs{init};
  if (has_forcing) inputs.push_back(forcing);
  return make_result("propagate", out_shape, std::move(out), inputs,
                     [solve, f, rows, steps, dt, has_forcing](detail::Node& self) {
                       auto& pi = *self.parents[0];
                       detail::Node* pz = has_forcing ? self.parents[1].get() : nullptr;
                       const bool want_z = pz && pz->requires_grad;
                       std::vector<double> acc(f), back(f);
                       for (std::size_t r = 0; r < rows; ++r) {
                         const double* g = self.grad.data() + r * (steps + 1) * f;
                         std::copy_n(g + steps * f, f, acc.data());
                         for (std::size_t k = steps; k-- > 0;) {
                           solve->apply_transpose(acc, back);
                           if (want_z) {
                             double* gz = pz->grad_buffer().data() + (r * steps + k) * f;
                             for (std::size_t j = 0; j < f; ++j) gz[j] += dt * back[j];
                           }
                           for (std::size_t j = 0; j < f; ++j) acc[j] = g[k * f + j] + back[j];
                         }
                         if (pi.requires_grad) {
                           double* gi = pi.grad_buffer().data() + r * f;
                           for (std::size_t j = 0; j < f; ++j) gi[j] += acc[j];
                         }
                       }
                     });
}

}  // namespace spdectl
