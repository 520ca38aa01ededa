#pragma once

#include <complex>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "spdectl/ops.hpp"
#include "spdectl/tensor.hpp"

namespace spdectl {

enum class Boundary { dirichlet_zero, periodic };

std::string to_string(Boundary bc);
Boundary boundary_from_string(const std::string& name);

/// Uniform space-time grid on [0, length]^dim x [0, T].
///
/// Dirichlet grids store the two boundary points (spacing = length/(n-1));
/// periodic grids store n points without the duplicate endpoint
/// (spacing = length/n). Coarse frames t_0..t_{K-1} are where states are
/// recorded and controls change; each coarse interval is split into
/// `substeps()` fine steps for integration.
struct Grid {
  int dim = 1;
  std::size_t n = 64;
  double length = 1.0;
  Boundary bc = Boundary::dirichlet_zero;
  double horizon = 1.0;
  std::size_t frames = 11;
  std::size_t fine_steps = 200;

  void validate() const;

  double spacing() const;
  std::size_t field_size() const;
  Shape field_shape() const;
  double cell_volume() const;  // spacing^dim
  double coarse_dt() const;
  double fine_dt() const;
  std::size_t substeps() const;
  std::vector<double> time_points() const;
  std::vector<double> axis_coords() const;

  /// Same grid with a different number of fine steps.
  Grid with_fine_steps(std::size_t steps) const;

  bool operator==(const Grid&) const = default;
};

Grid make_rd_grid(std::size_t n = 64, std::size_t frames = 11, std::size_t fine_steps = 200);
Grid make_ns_grid(std::size_t n = 40, std::size_t frames = 11, std::size_t fine_steps = 200);

/// Discretized linear operator acting on one field.
///
/// Tridiagonal operators may carry `pad` pinned boundary entries on each side:
/// the field then has interior + 2*pad values, the matrix acts on the interior
/// with zero boundary data, and boundary outputs are 0.
class DiscreteOperator final : public FieldMap {
 public:
  enum class Form { dense, tridiagonal, spectral };

  static DiscreteOperator tridiagonal(std::vector<double> lower, std::vector<double> diag,
                                      std::vector<double> upper, std::size_t pad, Boundary bc);
  static DiscreteOperator spectral(std::vector<std::size_t> extents, std::vector<double> symbol);
  static DiscreteOperator dense(std::size_t n, std::vector<double> row_major, Boundary bc);

  Form form() const { return form_; }
  Boundary boundary() const { return bc_; }
  std::size_t field_size() const override;
  std::size_t interior_size() const;
  std::size_t pad() const { return pad_; }

  void apply(std::span<const double> in, std::span<double> out) const override;
  void apply_transpose(std::span<const double> in, std::span<double> out) const override;

  DiscreteOperator scaled(double factor) const;
  bool is_zero() const;

  /// Interior matrix as a dense row-major array (not available for spectral).
  std::vector<double> to_dense() const;

  const std::vector<double>& lower() const { return lower_; }
  const std::vector<double>& diag() const { return diag_; }
  const std::vector<double>& upper() const { return upper_; }
  const std::vector<double>& symbol() const { return symbol_; }
  const std::vector<std::size_t>& extents() const { return extents_; }

 private:
  Form form_ = Form::tridiagonal;
  Boundary bc_ = Boundary::dirichlet_zero;
  std::size_t pad_ = 0;
  std::vector<double> lower_, diag_, upper_;
  std::vector<std::size_t> extents_;
  std::vector<double> symbol_;
  std::vector<double> dense_;
};

/// Second-difference matrix (1/eps^2) tridiag(1, -2, 1) of size n.
DiscreteOperator laplacian_1d(std::size_t n, double eps, std::size_t pad = 0);

/// Laplacian symbol -(2 pi)^2 |k|^2 on the periodic unit square, n x n modes.
DiscreteOperator laplacian_2d_spectral(std::size_t n);

/// nu * Laplacian on the grid's field layout (Dirichlet: interior matrix with
/// pinned boundary; periodic 2-D: spectral symbol).
DiscreteOperator grid_operator(const Grid& grid, double nu);

/// Factorized solve x = (Id - dt * L)^{-1} b.
class Propagator final : public FieldMap {
 public:
  Propagator(DiscreteOperator op, double dt);

  std::size_t field_size() const override { return op_.field_size(); }
  void apply(std::span<const double> in, std::span<double> out) const override { solve(in, out); }
  void apply_transpose(std::span<const double> in, std::span<double> out) const override;

  void solve(std::span<const double> b, std::span<double> x) const;
  std::vector<double> solve(std::span<const double> b) const;

  /// Per-mode gain of the spectral form (empty otherwise).
  const std::vector<double>& gains() const { return gain_; }
  const DiscreteOperator& op() const { return op_; }
  double dt() const { return dt_; }

 private:
  DiscreteOperator op_;
  double dt_;
  // tridiagonal LU (Thomas): modified upper coefficients and pivots
  std::vector<double> c_prime_, pivot_;
  std::vector<double> gain_;
  std::vector<double> lu_;
  std::vector<std::size_t> perm_;
};

std::shared_ptr<const Propagator> make_propagator(const DiscreteOperator& op, double dt);

/// First spatial derivative along `axis`: central differences with one-sided
/// ends on Dirichlet grids, exact spectral derivative on periodic grids.
class DerivativeOperator final : public FieldMap {
 public:
  DerivativeOperator(const Grid& grid, int axis);
  std::size_t field_size() const override { return size_; }
  void apply(std::span<const double> in, std::span<double> out) const override;
  void apply_transpose(std::span<const double> in, std::span<double> out) const override;

 private:
  Boundary bc_;
  std::size_t n_, size_;
  int dim_, axis_;
  double eps_, length_;
};

/// Applies f to the spectrum of each field: out = IFFT(symbol * FFT(in)).
void apply_spectral_symbol(std::span<const double> in, std::span<double> out,
                           std::span<const std::size_t> extents,
                           const std::vector<std::complex<double>>& symbol);

}  // namespace spdectl
