#include "spdectl/solver.hpp"

#include <cmath>
#include <array>
#include <complex>
#include <numbers>
#include <sstream>

#include "spdectl/fft.hpp"
#include "spdectl/hash.hpp"
#include "spdectl/parallel.hpp"

namespace spdectl {

namespace {

constexpr double two_pi = 2.0 * std::numbers::pi;

void check_state(std::span<const double> u, const char* what) {
  for (double v : u) {
    if (!std::isfinite(v)) throw SolverError(std::string(what) + ": state became non-finite (blow-up)");
  }
}

}  // namespace

std::string to_string(ProblemKind kind) {
  return kind == ProblemKind::navier_stokes ? "navier-stokes" : "reaction-diffusion";
}

ProblemKind problem_kind_from_string(const std::string& name) {
  if (name == "reaction-diffusion" || name == "rd") return ProblemKind::reaction_diffusion;
  if (name == "navier-stokes" || name == "ns") return ProblemKind::navier_stokes;
  throw std::invalid_argument("unknown problem kind '" + name + "'");
}

void Problem::validate() const {
  grid.validate();
  if (!(nu >= 0.0)) throw std::invalid_argument("viscosity must be non-negative");
  if (!(sigma >= 0.0)) throw std::invalid_argument("noise scale must be non-negative");
  if (noise_window < 1 || noise_window % 2 == 0) throw std::invalid_argument("noise window must be odd");
  if (kind == ProblemKind::reaction_diffusion && (grid.dim != 1 || grid.bc != Boundary::dirichlet_zero)) {
    throw std::invalid_argument("reaction-diffusion runs on a 1-D Dirichlet grid");
  }
  if (kind == ProblemKind::navier_stokes && (grid.dim != 2 || grid.bc != Boundary::periodic)) {
    throw std::invalid_argument("Navier-Stokes runs on a 2-D periodic grid");
  }
}

Problem make_rd_problem(double sigma) {
  Problem p;
  p.sigma = sigma;
  return p;
}

Problem make_ns_problem(double sigma) {
  Problem p;
  p.kind = ProblemKind::navier_stokes;
  p.grid = make_ns_grid();
  p.nu = 0.02;
  p.sigma = sigma;
  p.coupling = NoiseCoupling::additive;
  p.c1 = 0.0;
  p.c3 = 0.0;
  return p;
}

// ---------------------------------------------------------------------------

Simulator::Simulator(Problem problem) : problem_(std::move(problem)) {
  problem_.validate();
  const Grid& g = problem_.grid;
  const double dt = g.fine_dt();
  if (problem_.kind == ProblemKind::reaction_diffusion) {
    diffusion_ = make_propagator(grid_operator(g, problem_.nu), dt);
    return;
  }
  const std::size_t n = g.n, size = n * n;
  const double base = two_pi / g.length;
  kx_.resize(size);
  ky_.resize(size);
  inv_k2_.resize(size);
  keep_.resize(size);
  cn_plus_.resize(size);
  cn_minus_inv_.resize(size);
  for (std::size_t a = 0; a < n; ++a) {
    for (std::size_t b = 0; b < n; ++b) {
      const std::size_t idx = a * n + b;
      const long ia = fft::wavenumber(a, n), ib = fft::wavenumber(b, n);
      const bool nyq_a = n % 2 == 0 && a == n / 2, nyq_b = n % 2 == 0 && b == n / 2;
      kx_[idx] = nyq_a ? 0.0 : base * static_cast<double>(ia);
      ky_[idx] = nyq_b ? 0.0 : base * static_cast<double>(ib);
      const double k2 = base * base * static_cast<double>(ia * ia + ib * ib);
      inv_k2_[idx] = idx == 0 ? 0.0 : 1.0 / k2;
      keep_[idx] = 3 * std::labs(ia) < static_cast<long>(n) && 3 * std::labs(ib) < static_cast<long>(n);
      const double lam = -problem_.nu * k2;
      cn_plus_[idx] = 1.0 + 0.5 * dt * lam;
      cn_minus_inv_[idx] = 1.0 / (1.0 - 0.5 * dt * lam);
    }
  }
}

void Simulator::step(std::span<const double> u, std::span<const double> f, std::span<const double> xi,
                     std::span<double> out) const {
  const std::size_t size = grid().field_size();
  if (u.size() != size || f.size() != size || xi.size() != size || out.size() != size) {
    throw std::invalid_argument("step: field size mismatch");
  }
  if (problem_.kind == ProblemKind::reaction_diffusion) {
    step_rd(u, f, xi, out);
  } else {
    step_ns(u, f, xi, out);
  }
}

void Simulator::step_rd(std::span<const double> u, std::span<const double> f, std::span<const double> xi,
                        std::span<double> out) const {
  const double dt = grid().fine_dt();
  const bool mult = problem_.coupling == NoiseCoupling::multiplicative;
  std::vector<double> rhs(u.size());
  for (std::size_t i = 0; i < u.size(); ++i) {
    const double x = u[i];
    const double drift = problem_.c1 * x - problem_.c3 * x * x * x + f[i];
    rhs[i] = x + dt * (drift + problem_.sigma * (mult ? x : 1.0) * xi[i]);
  }
  diffusion_->solve(rhs, out);
  check_state(out, "reaction-diffusion step");
}

void Simulator::step_ns(std::span<const double> w, std::span<const double> f, std::span<const double> xi,
                        std::span<double> out) const {
  using C = std::complex<double>;
  const Grid& g = grid();
  const std::size_t size = g.field_size();
  const std::array<std::size_t, 2> ext{g.n, g.n};
  const double dt = g.fine_dt();
  const double inv_n = 1.0 / static_cast<double>(size);
  const bool mult = problem_.coupling == NoiseCoupling::multiplicative;

  std::vector<C> w_hat(w.begin(), w.end());
  fft::transform_nd(w_hat, ext, false);

  std::vector<C> ux(size), vy(size), wx(size), wy(size);
  const C im(0.0, 1.0);
  for (std::size_t k = 0; k < size; ++k) {
    const C wk = keep_[k] ? w_hat[k] : C(0.0);
    const C psi = wk * inv_k2_[k];
    ux[k] = im * ky_[k] * psi;
    vy[k] = -im * kx_[k] * psi;
    wx[k] = im * kx_[k] * wk;
    wy[k] = im * ky_[k] * wk;
  }
  for (auto* v : {&ux, &vy, &wx, &wy}) fft::transform_nd(*v, ext, true);

  std::vector<C> rhs(size);
  for (std::size_t i = 0; i < size; ++i) {
    const double adv = (ux[i].real() * wx[i].real() + vy[i].real() * wy[i].real()) * inv_n * inv_n;
    rhs[i] = -adv;
  }
  fft::transform_nd(rhs, ext, false);
  std::vector<C> src(size);
  for (std::size_t i = 0; i < size; ++i) src[i] = f[i] + problem_.sigma * (mult ? w[i] : 1.0) * xi[i];
  fft::transform_nd(src, ext, false);

  for (std::size_t k = 0; k < size; ++k) {
    const C nonlin = keep_[k] ? rhs[k] : C(0.0);
    w_hat[k] = (cn_plus_[k] * w_hat[k] + dt * (nonlin + src[k])) * cn_minus_inv_[k];
  }
  fft::transform_nd(w_hat, ext, true);
  for (std::size_t i = 0; i < size; ++i) out[i] = w_hat[i].real() * inv_n;
  check_state(out, "Navier-Stokes step");
}

void Simulator::advance(std::span<double> u, std::span<const double> f, const NoiseField& noise,
                        std::size_t interval) const {
  const Grid& g = grid();
  if (!(noise.grid == g)) throw std::invalid_argument("advance: noise grid does not match problem grid");
  if (interval + 1 >= g.frames) throw std::out_of_range("advance: interval out of range");
  const std::size_t sub = g.substeps();
  std::vector<double> next(u.size());
  for (std::size_t s = 0; s < sub; ++s) {
    step(u, f, noise.slice(interval * sub + s), next);
    std::copy(next.begin(), next.end(), u.begin());
  }
}

Trajectory Simulator::simulate(std::span<const double> u0, std::span<const double> forcing,
                               const NoiseField& noise) const {
  const Grid& g = grid();
  const std::size_t size = g.field_size();
  if (u0.size() != size) throw std::invalid_argument("simulate: u0 size mismatch");
  if (forcing.size() != (g.frames - 1) * size) throw std::invalid_argument("simulate: forcing size mismatch");
  Trajectory traj;
  traj.seed = noise.seed;
  traj.forcing.assign(forcing.begin(), forcing.end());
  traj.states.resize(g.frames * size);
  std::vector<double> u(u0.begin(), u0.end());
  if (problem_.kind == ProblemKind::reaction_diffusion) u[0] = u[size - 1] = 0.0;
  std::copy_n(u.data(), size, traj.states.data());
  for (std::size_t k = 0; k + 1 < g.frames; ++k) {
    advance(u, forcing.subspan(k * size, size), noise, k);
    for (std::size_t i = 0; i < size; ++i) traj.states[(k + 1) * size + i] = u[i];
  }
  return traj;
}

NoiseField problem_noise(const Problem& problem, std::uint64_t seed) {
  auto xi = sample_noise(problem.grid, seed, problem.noise_window);
  xi.scale = problem.sigma;
  return xi;
}

Trajectory simulate(const Problem& problem, std::span<const double> u0, std::span<const double> forcing,
                    std::uint64_t seed) {
  return Simulator(problem).simulate(u0, forcing, problem_noise(problem, seed));
}

// ---------------------------------------------------------------------------

namespace {

struct SpectralGrid {
  std::size_t n;
  std::array<std::size_t, 2> ext;
  double base;
  double kx(std::size_t idx) const { return axis_k(idx / n); }
  double ky(std::size_t idx) const { return axis_k(idx % n); }
  double axis_k(std::size_t a) const {
    if (n % 2 == 0 && a == n / 2) return 0.0;
    return base * static_cast<double>(fft::wavenumber(a, n));
  }
};

SpectralGrid spectral_grid(const Grid& grid) {
  if (grid.dim != 2 || grid.bc != Boundary::periodic) throw std::invalid_argument("expected a 2-D periodic grid");
  return {grid.n, {grid.n, grid.n}, two_pi / grid.length};
}

}  // namespace

std::vector<double> ns_velocity(const Grid& grid, std::span<const double> w) {
  using C = std::complex<double>;
  const auto sg = spectral_grid(grid);
  const std::size_t size = sg.n * sg.n;
  std::vector<C> w_hat(w.begin(), w.end());
  fft::transform_nd(w_hat, sg.ext, false);
  std::vector<C> u(size), v(size);
  const C im(0.0, 1.0);
  for (std::size_t k = 0; k < size; ++k) {
    const double ia = static_cast<double>(fft::wavenumber(k / sg.n, sg.n));
    const double ib = static_cast<double>(fft::wavenumber(k % sg.n, sg.n));
    const double k2 = sg.base * sg.base * (ia * ia + ib * ib);
    const C psi = k == 0 ? C(0.0) : w_hat[k] / k2;
    u[k] = im * sg.ky(k) * psi;
    v[k] = -im * sg.kx(k) * psi;
  }
  fft::transform_nd(u, sg.ext, true);
  fft::transform_nd(v, sg.ext, true);
  std::vector<double> out(2 * size);
  for (std::size_t i = 0; i < size; ++i) {
    out[i] = u[i].real() / static_cast<double>(size);
    out[size + i] = v[i].real() / static_cast<double>(size);
  }
  return out;
}

std::vector<double> spectral_divergence(const Grid& grid, std::span<const double> velocity) {
  using C = std::complex<double>;
  const auto sg = spectral_grid(grid);
  const std::size_t size = sg.n * sg.n;
  std::vector<C> u(velocity.begin(), velocity.begin() + static_cast<long>(size));
  std::vector<C> v(velocity.begin() + static_cast<long>(size), velocity.end());
  fft::transform_nd(u, sg.ext, false);
  fft::transform_nd(v, sg.ext, false);
  const C im(0.0, 1.0);
  for (std::size_t k = 0; k < size; ++k) u[k] = im * sg.kx(k) * u[k] + im * sg.ky(k) * v[k];
  fft::transform_nd(u, sg.ext, true);
  std::vector<double> out(size);
  for (std::size_t i = 0; i < size; ++i) out[i] = u[i].real() / static_cast<double>(size);
  return out;
}

// ---------------------------------------------------------------------------

std::vector<double> sample_field(const Grid& grid, const SamplerConfig& cfg, double amplitude, CounterRng& rng) {
  const std::size_t size = grid.field_size();
  std::vector<double> out(size, 0.0);
  const auto x = grid.axis_coords();
  const double L = grid.length;
  if (grid.dim == 1) {
    for (int k = 1; k <= cfg.k_max; ++k) {
      const double a = amplitude * std::pow(k, -cfg.decay) * rng.normal();
      for (std::size_t i = 0; i < size; ++i) {
        const double phase = grid.bc == Boundary::periodic ? two_pi * k * x[i] / L : std::numbers::pi * k * x[i] / L;
        out[i] += a * std::sin(phase);
      }
    }
    if (grid.bc == Boundary::dirichlet_zero) out.front() = out.back() = 0.0;
    return out;
  }
  const std::size_t n = grid.n;
  for (int ka = 0; ka <= cfg.k_max; ++ka) {
    for (int kb = -cfg.k_max; kb <= cfg.k_max; ++kb) {
      if (ka == 0 && kb <= 0) continue;  // half plane, no mean mode
      const double kk = std::sqrt(static_cast<double>(ka * ka + kb * kb));
      const double sd = amplitude * std::pow(kk, -cfg.decay);
      const double a = sd * rng.normal(), b = sd * rng.normal();
      for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
          const double phase = two_pi * (ka * x[i] + kb * x[j]) / L;
          out[i * n + j] += a * std::cos(phase) + b * std::sin(phase);
        }
      }
    }
  }
  return out;
}

std::vector<double> sample_initial(const Problem& problem, const SamplerConfig& cfg, CounterRng& rng) {
  return sample_field(problem.grid, cfg, cfg.u0_amplitude, rng);
}

std::vector<double> sample_forcing(const Problem& problem, const SamplerConfig& cfg, CounterRng& rng) {
  const Grid& g = problem.grid;
  std::vector<double> out;
  out.reserve((g.frames - 1) * g.field_size());
  for (std::size_t k = 0; k + 1 < g.frames; ++k) {
    auto slice = sample_field(g, cfg, cfg.f_amplitude, rng);
    out.insert(out.end(), slice.begin(), slice.end());
  }
  return out;
}

std::uint64_t config_hash(const Problem& problem, const SamplerConfig& sampler, std::uint64_t base_seed,
                          std::size_t count) {
  std::ostringstream s;
  s.precision(17);
  const Grid& g = problem.grid;
  s << to_string(problem.kind) << '|' << g.dim << ',' << g.n << ',' << g.length << ',' << to_string(g.bc) << ','
    << g.horizon << ',' << g.frames << ',' << g.fine_steps << '|' << problem.nu << ',' << problem.sigma << ','
    << static_cast<int>(problem.coupling) << ',' << problem.noise_window << ',' << problem.c1 << ',' << problem.c3
    << '|' << sampler.k_max << ',' << sampler.decay << ',' << sampler.u0_amplitude << ',' << sampler.f_amplitude
    << '|' << base_seed << ',' << count;
  return Fnv1a().text(s.str()).digest();
}

Dataset generate_dataset(const Problem& problem, std::size_t count, std::uint64_t base_seed,
                         const SamplerConfig& sampler, const std::string& split, std::size_t threads) {
  if (count == 0) throw std::invalid_argument("generate_dataset: count must be >= 1");
  const Simulator sim(problem);
  Dataset ds;
  ds.problem = problem;
  ds.sampler = sampler;
  ds.split = split;
  ds.base_seed = base_seed;
  ds.config_hash = config_hash(problem, sampler, base_seed, count);
  ds.trajectories.resize(count);
  parallel_for(
      count,
      [&](std::size_t i) {
        const std::uint64_t seed = derive_seed(base_seed, i);
        CounterRng rng(derive_seed(seed, 0xA11CE));
        const auto u0 = sample_initial(problem, sampler, rng);
        const auto f = sample_forcing(problem, sampler, rng);
        ds.trajectories[i] = sim.simulate(u0, f, problem_noise(problem, seed));
      },
      threads);
  return ds;
}

}  // namespace spdectl
