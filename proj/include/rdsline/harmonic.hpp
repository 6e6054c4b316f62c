#pragma once

// Deterministic counterpart of the escape estimates: solves
//   phi(x) = sum_i p_i phi(f_i(x))
// on a window [a, b] with phi = 0 below a and phi = 1 above b, i.e. the
// probability of leaving through the top of the window before the bottom.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "rdsline/errors.hpp"
#include "rdsline/parallel.hpp"
#include "rdsline/system.hpp"

namespace rdsline {

struct GridFunction {
  double a = 0.0;
  double b = 1.0;
  std::vector<double> x;
  std::vector<double> values;
  double residual = 0.0;
  std::uint64_t iterations = 0;
  bool residual_monotone = true;

  double step() const { return (b - a) / static_cast<double>(x.size() - 1); }

  /// Linear interpolation inside [a, b]; boundary convention outside.
  double operator()(double t) const {
    if (t < a) return 0.0;
    if (t > b) return 1.0;
    double pos = (t - a) / step();
    auto j = static_cast<std::size_t>(std::floor(pos));
    if (j >= x.size() - 1) return values.back();
    double w = pos - static_cast<double>(j);
    return (1.0 - w) * values[j] + w * values[j + 1];
  }

  bool monotone() const {
    return std::is_sorted(values.begin(), values.end());
  }
};

inline GridFunction make_grid(double a, double b, std::size_t points) {
  if (!(a < b)) throw ConfigError("window must satisfy a < b");
  if (points < 3) throw ConfigError("grid needs at least 3 points");
  GridFunction g;
  g.a = a;
  g.b = b;
  g.x.resize(points);
  g.values.assign(points, 0.0);
  for (std::size_t i = 0; i < points; ++i) {
    g.x[i] = i + 1 == points ? b : a + (b - a) * static_cast<double>(i) / static_cast<double>(points - 1);
  }
  return g;
}

struct HarmonicOptions {
  std::size_t grid_points = 2001;
  double tol = 1e-8;
  std::uint64_t max_iters = 5'000'000;
  unsigned workers = 1;
};

namespace detail {

/// One term of the averaging operator at a grid point: either a fixed
/// boundary value or an interpolation between two grid values.
struct Stencil {
  std::size_t j = 0;
  double w_lo = 0.0;
  double w_hi = 0.0;
  double constant = 0.0;
};

inline std::vector<Stencil> build_stencils(const RandomSystem& sys, const GridFunction& g) {
  const std::size_t n = g.x.size();
  const std::size_t k = sys.size();
  const double h = g.step();
  std::vector<Stencil> st(n * k);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t m = 0; m < k; ++m) {
      double p = to_double(sys.probs[m]);
      double y = sys.maps[m](g.x[i]);
      Stencil& s = st[i * k + m];
      if (y < g.a) {
        s.constant = 0.0;
      } else if (y > g.b) {
        s.constant = p;
      } else {
        double pos = (y - g.a) / h;
        auto j = static_cast<std::size_t>(std::floor(pos));
        if (j >= n - 1) {
          j = n - 2;
          pos = static_cast<double>(n - 1);
        }
        double w = pos - static_cast<double>(j);
        // Snap images that land on a node up to rounding.
        if (w < 1e-12) w = 0.0;
        if (w > 1.0 - 1e-12) w = 1.0;
        s.j = j;
        s.w_lo = p * (1.0 - w);
        s.w_hi = p * w;
      }
    }
  }
  return st;
}

inline double apply_stencil(std::span<const Stencil> row, const std::vector<double>& v) {
  double acc = 0.0;
  for (const auto& s : row) acc += s.constant + s.w_lo * v[s.j] + s.w_hi * v[s.j + 1];
  return acc;
}

}  // namespace detail

struct HarmonicResidual {
  double residual = 0.0;
  /// Stored endpoint values agree with the 0/1 boundary convention.
  bool boundary_consistent = true;
};

/// sup over interior grid points of |phi(x) - sum_i p_i phi(f_i(x))|.
inline HarmonicResidual harmonic_residual(const RandomSystem& sys, const GridFunction& phi) {
  HarmonicResidual r;
  r.boundary_consistent = phi.values.front() == 0.0 && phi.values.back() == 1.0;
  for (std::size_t i = 1; i + 1 < phi.x.size(); ++i) {
    double avg = 0.0;
    for (std::size_t m = 0; m < sys.size(); ++m) avg += to_double(sys.probs[m]) * phi(sys.maps[m](phi.x[i]));
    r.residual = std::max(r.residual, std::abs(phi.values[i] - avg));
  }
  return r;
}

/// Jacobi iteration from the linear ramp until the sup-norm self-consistency
/// residual drops to `tol`. Each sweep reads only the previous iterate.
inline GridFunction solve_phi_window(const RandomSystem& sys, double a, double b, const HarmonicOptions& opt = {}) {
  require_valid(sys);
  GridFunction g = make_grid(a, b, opt.grid_points);
  const std::size_t n = g.x.size();
  const std::size_t k = sys.size();
  for (std::size_t i = 0; i < n; ++i) g.values[i] = (g.x[i] - a) / (b - a);
  g.values.front() = 0.0;
  g.values.back() = 1.0;

  const auto stencils = detail::build_stencils(sys, g);
  std::vector<double> next(g.values);
  double previous = INFINITY;
  for (std::uint64_t it = 0;; ++it) {
    double residual = parallel_reduce(
        n - 2, opt.workers, 0.0,
        [&](std::size_t begin, std::size_t end) {
          double r = 0.0;
          for (std::size_t i = begin + 1; i < end + 1; ++i) {
            next[i] = detail::apply_stencil(std::span(stencils).subspan(i * k, k), g.values);
            r = std::max(r, std::abs(next[i] - g.values[i]));
          }
          return r;
        },
        [](double& acc, double part) { acc = std::max(acc, part); });
    if (residual > previous * (1.0 + 1e-12) + 1e-15) g.residual_monotone = false;
    previous = residual;
    g.residual = residual;
    g.iterations = it;
    if (residual <= opt.tol) return g;
    if (it >= opt.max_iters) {
      throw NotConverged("not converged after " + std::to_string(it) + " sweeps, residual " +
                             std::to_string(residual),
                         residual);
    }
    std::swap(g.values, next);
  }
}

}  // namespace rdsline
