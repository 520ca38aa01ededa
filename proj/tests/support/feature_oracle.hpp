#pragma once

// Literal expansion of the feature recursion on a 1-D Dirichlet grid: ordered
// factor tuples with repetition, no deduplication, naive loops, a dense
// Gaussian-elimination solve per step. Shares no code with the library.

#include <cmath>
#include <vector>

namespace spdectl::testing {

struct OracleSetup {
  std::size_t n = 8;     // grid points including both boundary points
  std::size_t steps = 2; // K - 1
  double dt = 0.5;
  double nu = 0.1;
  int m = 1, l = 1, height = 1;
  bool split = false;
  bool derivatives = true;
};

// A field over all time levels: values[t][x].
using OracleField = std::vector<std::vector<double>>;

class FeatureOracle {
 public:
  explicit FeatureOracle(OracleSetup s) : s_(s), eps_(1.0 / static_cast<double>(s.n - 1)) {}

  // Solves (Id - dt nu Lap) x = b on interior points, boundary x = 0.
  std::vector<double> solve(const std::vector<double>& b) const {
    const std::size_t m = s_.n - 2;
    std::vector<std::vector<double>> a(m, std::vector<double>(m + 1, 0.0));
    const double c = s_.dt * s_.nu / (eps_ * eps_);
    for (std::size_t i = 0; i < m; ++i) {
      a[i][i] = 1.0 + 2.0 * c;
      if (i > 0) a[i][i - 1] = -c;
      if (i + 1 < m) a[i][i + 1] = -c;
      a[i][m] = b[i + 1];
    }
    for (std::size_t col = 0; col < m; ++col) {
      std::size_t piv = col;
      for (std::size_t r = col + 1; r < m; ++r) {
        if (std::abs(a[r][col]) > std::abs(a[piv][col])) piv = r;
      }
      std::swap(a[col], a[piv]);
      for (std::size_t r = 0; r < m; ++r) {
        if (r == col) continue;
        const double factor = a[r][col] / a[col][col];
        for (std::size_t k = col; k <= m; ++k) a[r][k] -= factor * a[col][k];
      }
    }
    std::vector<double> x(s_.n, 0.0);
    for (std::size_t i = 0; i < m; ++i) x[i + 1] = a[i][m] / a[i][i];
    return x;
  }

  std::vector<double> derivative(const std::vector<double>& u) const {
    const std::size_t n = s_.n;
    std::vector<double> d(n);
    d[0] = (u[1] - u[0]) / eps_;
    d[n - 1] = (u[n - 1] - u[n - 2]) / eps_;
    for (std::size_t i = 1; i + 1 < n; ++i) d[i] = (u[i + 1] - u[i - 1]) / (2.0 * eps_);
    return d;
  }

  OracleField integrate(const OracleField& z) const {
    OracleField out(s_.steps + 1, std::vector<double>(s_.n, 0.0));
    for (std::size_t k = 0; k < s_.steps; ++k) {
      std::vector<double> b(s_.n);
      for (std::size_t x = 0; x < s_.n; ++x) b[x] = out[k][x] + z[k][x] * s_.dt;
      out[k + 1] = solve(b);
    }
    return out;
  }

  // forcing / noise: [steps][n]. In combined mode `forcing` is f~ and noise is unused.
  std::vector<OracleField> run(const std::vector<double>& u0, const std::vector<std::vector<double>>& forcing,
                               const std::vector<std::vector<double>>& noise) const {
    OracleField sin(s_.steps + 1);
    sin[0] = u0;
    for (std::size_t k = 0; k < s_.steps; ++k) sin[k + 1] = solve(sin[k]);
    std::vector<OracleField> set{sin};

    for (int p = 1; p <= s_.height; ++p) {
      // factor candidates: every previous field and (optionally) its derivative
      std::vector<OracleField> cand;
      for (const auto& f : set) {
        cand.push_back(f);
        if (s_.derivatives) {
          OracleField d(f.size());
          for (std::size_t t = 0; t < f.size(); ++t) d[t] = derivative(f[t]);
          cand.push_back(d);
        }
      }
      std::vector<OracleField> next;
      // leaves: 0 none, 1 combined/f, 2 xi
      const int leaf_count = s_.split ? 3 : 2;
      for (int leaf = 0; leaf < leaf_count; ++leaf) {
        int kmin = 0, kmax = 0;
        if (leaf == 0) {
          kmin = 1;
          kmax = s_.m;
        } else if (!s_.split || leaf == 2) {
          kmax = s_.l - 1;
          if (s_.l < 1) continue;
        } else {
          kmax = s_.m - 1;
          if (s_.m < 1) continue;
        }
        for (int k = kmin; k <= kmax; ++k) {
          std::vector<std::size_t> tuple(static_cast<std::size_t>(k), 0);
          while (true) {
            OracleField z(s_.steps, std::vector<double>(s_.n, 1.0));
            for (std::size_t t = 0; t < s_.steps; ++t) {
              for (std::size_t x = 0; x < s_.n; ++x) {
                double v = 1.0;
                for (std::size_t c : tuple) v *= cand[c][t][x];
                if (leaf == 1) v *= forcing[t][x];
                if (leaf == 2) v *= noise[t][x];
                z[t][x] = v;
              }
            }
            next.push_back(integrate(z));
            if (!next_tuple(tuple, cand.size())) break;
          }
        }
      }
      for (auto& f : set) next.push_back(f);
      set = std::move(next);
    }
    return set;
  }

 private:
  // Odometer over ordered tuples with repetition; false after the last one.
  static bool next_tuple(std::vector<std::size_t>& tuple, std::size_t base) {
    for (std::size_t pos = tuple.size(); pos-- > 0;) {
      if (++tuple[pos] < base) return true;
      tuple[pos] = 0;
    }
    return false;
  }

  OracleSetup s_;
  double eps_;
};

}  // namespace spdectl::testing
