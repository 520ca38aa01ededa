#include "spdectl/grid.hpp"

#include <Eigen/Dense>
#include <cmath>
#include <numbers>

#include "spdectl/fft.hpp"

namespace spdectl {

std::string to_string(Boundary bc) {
  return bc == Boundary::periodic ? "periodic" : "dirichlet";
}

Boundary boundary_from_string(const std::string& name) {
  if (name == "periodic") return Boundary::periodic;
  if (name == "dirichlet" || name == "dirichlet-zero") return Boundary::dirichlet_zero;
  throw std::invalid_argument("unknown boundary condition '" + name + "'");
}

void Grid::validate() const {
  if (dim != 1 && dim != 2) throw std::invalid_argument("grid dim must be 1 or 2");
  if (bc == Boundary::dirichlet_zero && n < 3) throw std::invalid_argument("Dirichlet grid needs n >= 3");
  if (bc == Boundary::periodic && n < 4) throw std::invalid_argument("periodic grid needs n >= 4");
  if (dim == 2 && bc != Boundary::periodic) throw std::invalid_argument("2-D grids are periodic");
  if (!(length > 0.0) || !(horizon > 0.0)) throw std::invalid_argument("grid lengths must be positive");
  if (frames < 2) throw std::invalid_argument("grid needs at least 2 time frames");
  if (fine_steps == 0 || fine_steps % (frames - 1) != 0) {
    throw std::invalid_argument("fine_steps must be a positive multiple of frames-1");
  }
}

double Grid::spacing() const {
  return bc == Boundary::periodic ? length / static_cast<double>(n) : length / static_cast<double>(n - 1);
}

std::size_t Grid::field_size() const { return dim == 1 ? n : n * n; }
Shape Grid::field_shape() const { return dim == 1 ? Shape{n} : Shape{n, n}; }
double Grid::cell_volume() const { return std::pow(spacing(), dim); }
double Grid::coarse_dt() const { return horizon / static_cast<double>(frames - 1); }
double Grid::fine_dt() const { return horizon / static_cast<double>(fine_steps); }
std::size_t Grid::substeps() const { return fine_steps / (frames - 1); }

std::vector<double> Grid::time_points() const {
  std::vector<double> t(frames);
  for (std::size_t k = 0; k < frames; ++k) t[k] = horizon * static_cast<double>(k) / static_cast<double>(frames - 1);
  return t;
}

std::vector<double> Grid::axis_coords() const {
  std::vector<double> x(n);
  for (std::size_t i = 0; i < n; ++i) x[i] = spacing() * static_cast<double>(i);
  return x;
}

Grid Grid::with_fine_steps(std::size_t steps) const {
  Grid g = *this;
  g.fine_steps = steps;
  g.validate();
  return g;
}

Grid make_rd_grid(std::size_t n, std::size_t frames, std::size_t fine_steps) {
  Grid g{1, n, 1.0, Boundary::dirichlet_zero, 1.0, frames, fine_steps};
  g.validate();
  return g;
}

Grid make_ns_grid(std::size_t n, std::size_t frames, std::size_t fine_steps) {
  Grid g{2, n, 1.0, Boundary::periodic, 1.0, frames, fine_steps};
  g.validate();
  return g;
}

// ---------------------------------------------------------------------------

DiscreteOperator DiscreteOperator::tridiagonal(std::vector<double> lower, std::vector<double> diag,
                                               std::vector<double> upper, std::size_t pad, Boundary bc) {
  if (diag.empty() || lower.size() != diag.size() || upper.size() != diag.size()) {
    throw std::invalid_argument("tridiagonal: coefficient vectors must share a nonzero length");
  }
  DiscreteOperator op;
  op.form_ = Form::tridiagonal;
  op.bc_ = bc;
  op.pad_ = pad;
  op.lower_ = std::move(lower);
  op.diag_ = std::move(diag);
  op.upper_ = std::move(upper);
  op.lower_[0] = 0.0;
  op.upper_.back() = 0.0;
  return op;
}

DiscreteOperator DiscreteOperator::spectral(std::vector<std::size_t> extents, std::vector<double> symbol) {
  if (numel_of(extents) != symbol.size()) throw std::invalid_argument("spectral symbol size mismatch");
  DiscreteOperator op;
  op.form_ = Form::spectral;
  op.bc_ = Boundary::periodic;
  op.extents_ = std::move(extents);
  op.symbol_ = std::move(symbol);
  return op;
}

DiscreteOperator DiscreteOperator::dense(std::size_t n, std::vector<double> row_major, Boundary bc) {
  if (row_major.size() != n * n) throw std::invalid_argument("dense operator size mismatch");
  DiscreteOperator op;
  op.form_ = Form::dense;
  op.bc_ = bc;
  op.dense_ = std::move(row_major);
  op.diag_.resize(n);
  return op;
}

std::size_t DiscreteOperator::interior_size() const {
  return form_ == Form::spectral ? symbol_.size() : diag_.size();
}

std::size_t DiscreteOperator::field_size() const {
  return form_ == Form::spectral ? symbol_.size() : diag_.size() + 2 * pad_;
}

void DiscreteOperator::apply(std::span<const double> in, std::span<double> out) const {
  switch (form_) {
    case Form::tridiagonal: {
      const std::size_t m = diag_.size();
      for (std::size_t i = 0; i < pad_; ++i) {
        out[i] = 0.0;
        out[pad_ + m + i] = 0.0;
      }
      const double* x = in.data() + pad_;
      double* y = out.data() + pad_;
      for (std::size_t i = 0; i < m; ++i) {
        double v = diag_[i] * x[i];
        if (i > 0) v += lower_[i] * x[i - 1];
        if (i + 1 < m) v += upper_[i] * x[i + 1];
        y[i] = v;
      }
      break;
    }
    case Form::dense: {
      const std::size_t n = diag_.size();
      for (std::size_t i = 0; i < n; ++i) {
        double v = 0.0;
        for (std::size_t j = 0; j < n; ++j) v += dense_[i * n + j] * in[j];
        out[i] = v;
      }
      break;
    }
    case Form::spectral: {
      std::vector<std::complex<double>> sym(symbol_.begin(), symbol_.end());
      apply_spectral_symbol(in, out, extents_, sym);
      break;
    }
  }
}

void DiscreteOperator::apply_transpose(std::span<const double> in, std::span<double> out) const {
  switch (form_) {
    case Form::tridiagonal: {
      const std::size_t m = diag_.size();
      for (std::size_t i = 0; i < pad_; ++i) {
        out[i] = 0.0;
        out[pad_ + m + i] = 0.0;
      }
      const double* x = in.data() + pad_;
      double* y = out.data() + pad_;
      for (std::size_t i = 0; i < m; ++i) {
        double v = diag_[i] * x[i];
        if (i > 0) v += upper_[i - 1] * x[i - 1];
        if (i + 1 < m) v += lower_[i + 1] * x[i + 1];
        y[i] = v;
      }
      break;
    }
    case Form::dense: {
      const std::size_t n = diag_.size();
      for (std::size_t i = 0; i < n; ++i) {
        double v = 0.0;
        for (std::size_t j = 0; j < n; ++j) v += dense_[j * n + i] * in[j];
        out[i] = v;
      }
      break;
    }
    case Form::spectral:
      apply(in, out);  // real even symbol
      break;
  }
}

DiscreteOperator DiscreteOperator::scaled(double factor) const {
  DiscreteOperator op = *this;
  for (auto* v : {&op.lower_, &op.diag_, &op.upper_, &op.symbol_, &op.dense_}) {
    for (auto& x : *v) x *= factor;
  }
  return op;
}

bool DiscreteOperator::is_zero() const {
  for (const auto* v : {&lower_, &diag_, &upper_, &symbol_, &dense_}) {
    for (double x : *v) {
      if (x != 0.0) return false;
    }
  }
  return true;
}

std::vector<double> DiscreteOperator::to_dense() const {
  if (form_ == Form::dense) return dense_;
  if (form_ == Form::spectral) throw std::logic_error("to_dense: spectral operator");
  const std::size_t m = diag_.size();
  std::vector<double> a(m * m, 0.0);
  for (std::size_t i = 0; i < m; ++i) {
    a[i * m + i] = diag_[i];
    if (i > 0) a[i * m + i - 1] = lower_[i];
    if (i + 1 < m) a[i * m + i + 1] = upper_[i];
  }
  return a;
}

DiscreteOperator laplacian_1d(std::size_t n, double eps, std::size_t pad) {
  if (n < 3 && pad == 0) throw std::invalid_argument("laplacian_1d needs n >= 3");
  if (n < 1) throw std::invalid_argument("laplacian_1d needs interior points");
  if (!(eps > 0.0)) throw std::invalid_argument("laplacian_1d needs eps > 0");
  const double inv = 1.0 / (eps * eps);
  return DiscreteOperator::tridiagonal(std::vector<double>(n, inv), std::vector<double>(n, -2.0 * inv),
                                       std::vector<double>(n, inv), pad, Boundary::dirichlet_zero);
}

namespace {

std::vector<double> laplacian_symbol(const std::vector<std::size_t>& extents, double length) {
  const double base = 2.0 * std::numbers::pi / length;
  std::vector<double> symbol(numel_of(extents));
  if (extents.size() == 1) {
    for (std::size_t k = 0; k < extents[0]; ++k) {
      const double kk = base * static_cast<double>(fft::wavenumber(k, extents[0]));
      symbol[k] = -kk * kk;
    }
  } else {
    for (std::size_t a = 0; a < extents[0]; ++a) {
      for (std::size_t b = 0; b < extents[1]; ++b) {
        const double ka = base * static_cast<double>(fft::wavenumber(a, extents[0]));
        const double kb = base * static_cast<double>(fft::wavenumber(b, extents[1]));
        symbol[a * extents[1] + b] = -(ka * ka + kb * kb);
      }
    }
  }
  return symbol;
}

}  // namespace

DiscreteOperator laplacian_2d_spectral(std::size_t n) {
  if (n < 4) throw std::invalid_argument("laplacian_2d_spectral needs n >= 4");
  std::vector<std::size_t> ext{n, n};
  return DiscreteOperator::spectral(ext, laplacian_symbol(ext, 1.0));
}

DiscreteOperator grid_operator(const Grid& grid, double nu) {
  grid.validate();
  if (grid.bc == Boundary::dirichlet_zero) {
    return laplacian_1d(grid.n - 2, grid.spacing(), 1).scaled(nu);
  }
  std::vector<std::size_t> ext(static_cast<std::size_t>(grid.dim), grid.n);
  return DiscreteOperator::spectral(ext, laplacian_symbol(ext, grid.length)).scaled(nu);
}

void apply_spectral_symbol(std::span<const double> in, std::span<double> out,
                           std::span<const std::size_t> extents,
                           const std::vector<std::complex<double>>& symbol) {
  const std::size_t n = in.size();
  std::vector<fft::Complex> work(in.begin(), in.end());
  fft::transform_nd(work, extents, false);
  for (std::size_t k = 0; k < n; ++k) work[k] *= symbol[k];
  fft::transform_nd(work, extents, true);
  const double inv = 1.0 / static_cast<double>(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = work[i].real() * inv;
}

// ---------------------------------------------------------------------------

Propagator::Propagator(DiscreteOperator op, double dt) : op_(std::move(op)), dt_(dt) {
  if (!(dt > 0.0)) throw std::invalid_argument("propagator needs dt > 0");
  switch (op_.form()) {
    case DiscreteOperator::Form::tridiagonal: {
      const std::size_t m = op_.diag().size();
      c_prime_.resize(m);
      pivot_.resize(m);
      for (std::size_t i = 0; i < m; ++i) {
        const double a = -dt * op_.lower()[i];
        const double b = 1.0 - dt * op_.diag()[i];
        const double c = -dt * op_.upper()[i];
        const double piv = i == 0 ? b : b - a * c_prime_[i - 1];
        if (std::abs(piv) < 1e-300) throw std::runtime_error("propagator: singular tridiagonal system");
        pivot_[i] = piv;
        c_prime_[i] = c / piv;
      }
      break;
    }
    case DiscreteOperator::Form::spectral: {
      gain_.resize(op_.symbol().size());
      for (std::size_t k = 0; k < gain_.size(); ++k) {
        const double denom = 1.0 - dt * op_.symbol()[k];
        if (std::abs(denom) < 1e-300) throw std::runtime_error("propagator: singular spectral mode");
        gain_[k] = 1.0 / denom;
      }
      break;
    }
    case DiscreteOperator::Form::dense: {
      const auto n = static_cast<Eigen::Index>(op_.diag().size());
      auto a = op_.to_dense();
      Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> l(a.data(), n, n);
      Eigen::MatrixXd m = Eigen::MatrixXd::Identity(n, n) - dt * Eigen::MatrixXd(l);
      Eigen::FullPivLU<Eigen::MatrixXd> lu(m);
      if (!lu.isInvertible()) throw std::runtime_error("propagator: singular dense system");
      Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> inv = lu.inverse();
      lu_.assign(inv.data(), inv.data() + n * n);
      break;
    }
  }
}

void Propagator::solve(std::span<const double> b, std::span<double> x) const {
  switch (op_.form()) {
    case DiscreteOperator::Form::tridiagonal: {
      const std::size_t m = pivot_.size();
      const std::size_t pad = op_.pad();
      for (std::size_t i = 0; i < pad; ++i) {
        x[i] = 0.0;
        x[pad + m + i] = 0.0;
      }
      const double* rhs = b.data() + pad;
      double* y = x.data() + pad;
      y[0] = rhs[0] / pivot_[0];
      for (std::size_t i = 1; i < m; ++i) {
        const double a = -dt_ * op_.lower()[i];
        y[i] = (rhs[i] - a * y[i - 1]) / pivot_[i];
      }
      for (std::size_t i = m - 1; i-- > 0;) y[i] -= c_prime_[i] * y[i + 1];
      break;
    }
    case DiscreteOperator::Form::spectral: {
      std::vector<std::complex<double>> g(gain_.begin(), gain_.end());
      apply_spectral_symbol(b, x, op_.extents(), g);
      break;
    }
    case DiscreteOperator::Form::dense: {
      const std::size_t n = pivot_.empty() ? op_.diag().size() : pivot_.size();
      for (std::size_t i = 0; i < n; ++i) {
        double v = 0.0;
        for (std::size_t j = 0; j < n; ++j) v += lu_[i * n + j] * b[j];
        x[i] = v;
      }
      break;
    }
  }
}

std::vector<double> Propagator::solve(std::span<const double> b) const {
  std::vector<double> x(b.size());
  solve(b, x);
  return x;
}

void Propagator::apply_transpose(std::span<const double> in, std::span<double> out) const {
  if (op_.form() == DiscreteOperator::Form::spectral) {
    solve(in, out);
    return;
  }
  if (op_.form() == DiscreteOperator::Form::dense) {
    const std::size_t n = op_.diag().size();
    for (std::size_t i = 0; i < n; ++i) {
      double v = 0.0;
      for (std::size_t j = 0; j < n; ++j) v += lu_[j * n + i] * in[j];
      out[i] = v;
    }
    return;
  }
  // (Id - dt L)^{-T}: solve with the transposed tridiagonal system.
  const std::size_t m = pivot_.size();
  const std::size_t pad = op_.pad();
  const auto& lo = op_.lower();
  const auto& up = op_.upper();
  bool symmetric = true;
  for (std::size_t i = 1; i < m && symmetric; ++i) symmetric = lo[i] == up[i - 1];
  if (symmetric) {
    solve(in, out);
    return;
  }
  for (std::size_t i = 0; i < pad; ++i) {
    out[i] = 0.0;
    out[pad + m + i] = 0.0;
  }
  std::vector<double> cp(m), piv(m);
  const double* rhs = in.data() + pad;
  double* y = out.data() + pad;
  for (std::size_t i = 0; i < m; ++i) {
    const double a = i > 0 ? -dt_ * up[i - 1] : 0.0;
    const double b = 1.0 - dt_ * op_.diag()[i];
    const double c = i + 1 < m ? -dt_ * lo[i + 1] : 0.0;
    piv[i] = i == 0 ? b : b - a * cp[i - 1];
    cp[i] = c / piv[i];
    y[i] = ((i == 0 ? rhs[0] : rhs[i] - a * y[i - 1])) / piv[i];
  }
  for (std::size_t i = m - 1; i-- > 0;) y[i] -= cp[i] * y[i + 1];
}

std::shared_ptr<const Propagator> make_propagator(const DiscreteOperator& op, double dt) {
  return std::make_shared<const Propagator>(op, dt);
}

// ---------------------------------------------------------------------------

DerivativeOperator::DerivativeOperator(const Grid& grid, int axis)
    : bc_(grid.bc),
      n_(grid.n),
      size_(grid.field_size()),
      dim_(grid.dim),
      axis_(axis),
      eps_(grid.spacing()),
      length_(grid.length) {
  if (axis < 0 || axis >= grid.dim) throw std::invalid_argument("derivative axis out of range");
}

void DerivativeOperator::apply(std::span<const double> in, std::span<double> out) const {
  if (bc_ == Boundary::dirichlet_zero) {
    const std::size_t n = n_;
    out[0] = (in[1] - in[0]) / eps_;
    out[n - 1] = (in[n - 1] - in[n - 2]) / eps_;
    for (std::size_t i = 1; i + 1 < n; ++i) out[i] = (in[i + 1] - in[i - 1]) / (2.0 * eps_);
    return;
  }
  // spectral: i * 2 pi k / L, Nyquist dropped so the result stays real
  std::vector<std::size_t> ext(static_cast<std::size_t>(dim_), n_);
  std::vector<std::complex<double>> symbol(size_);
  const double base = 2.0 * std::numbers::pi / length_;
  for (std::size_t flat = 0; flat < size_; ++flat) {
    const std::size_t k = dim_ == 1 ? flat : (axis_ == 0 ? flat / n_ : flat % n_);
    const bool nyquist = n_ % 2 == 0 && k == n_ / 2;
    const double kk = nyquist ? 0.0 : base * static_cast<double>(fft::wavenumber(k, n_));
    symbol[flat] = {0.0, kk};
  }
  apply_spectral_symbol(in, out, ext, symbol);
}

void DerivativeOperator::apply_transpose(std::span<const double> in, std::span<double> out) const {
  if (bc_ == Boundary::periodic) {
    apply(in, out);  // skew-adjoint
    for (auto& v : out) v = -v;
    return;
  }
  const std::size_t n = n_;
  std::fill(out.begin(), out.end(), 0.0);
  out[0] -= in[0] / eps_;
  out[1] += in[0] / eps_;
  out[n - 1] += in[n - 1] / eps_;
  out[n - 2] -= in[n - 1] / eps_;
  for (std::size_t i = 1; i + 1 < n; ++i) {
    out[i + 1] += in[i] / (2.0 * eps_);
    out[i - 1] -= in[i] / (2.0 * eps_);
  }
}

}  // namespace spdectl
