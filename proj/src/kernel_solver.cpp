#include "backstep/kernel_solver.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "backstep/errors.hpp"

namespace backstep {
namespace {

// lambda sampled on the target grid, interpolating when the profile lives on
// a different resolution.
std::vector<double> resample(const ReactionProfile& lambda, const UniformGrid1D& grid) {
  if (lambda.grid == grid) return lambda.values;
  std::vector<double> v(grid.n);
  for (std::size_t i = 0; i < grid.n; ++i) {
    v[i] = linear_interpolate(lambda.grid, lambda.values, grid.node(i));
  }
  return v;
}

// Cumulative trapezoid D_i = int_0^{x_i} lambda dx on grid nodes.
std::vector<double> cumulative_trapezoid(const std::vector<double>& lam, double h) {
  std::vector<double> d(lam.size(), 0.0);
  for (std::size_t i = 1; i < lam.size(); ++i) {
    d[i] = d[i - 1] + 0.5 * h * (lam[i - 1] + lam[i]);
  }
  return d;
}

}  // namespace

KernelField solve_kernel_fd(const ReactionProfile& lambda, std::size_t n_points,
                            NearDiagonalClosure closure) {
  UniformGrid1D grid(n_points);
  std::vector<double> lam = resample(lambda, grid);
  const double h = grid.h;
  const std::size_t n = grid.n;
  KernelField k(grid);

  // Diagonal: trapezoid accumulation of -(1/2) int lambda.
  for (std::size_t i = 1; i < n; ++i) {
    k.at(i, i) = k.at(i - 1, i - 1) - 0.25 * h * (lam[i - 1] + lam[i]);
  }
  // March in x; level i+1 is filled from levels i and i-1.
  for (std::size_t i = 1; i + 1 < n; ++i) {
    for (std::size_t j = 1; j < i; ++j) {
      k.at(i + 1, j) = -k.at(i - 1, j) + k.at(i, j + 1) + k.at(i, j - 1) +
                       0.5 * h * h * lam[j] * (k.at(i, j + 1) + k.at(i, j - 1));
    }
    if (closure == NearDiagonalClosure::characteristic) {
      double kx = 0.25 * (lam[0] - lam[i]) - 0.5 * k.at(i, i) * k.at(i, i);
      k.at(i + 1, i) = k.at(i, i) + h * kx;
    } else {
      k.at(i + 1, i) = k.at(i, i) + 0.5 * h * lam[i];
    }
  }
  return k;
}

KernelField solve_kernel_integral(const ReactionProfile& lambda, std::size_t n_points,
                                  int max_iters, double tol) {
  if (max_iters < 1 || tol <= 0.0) throw InvalidInputError("bad fixed-point options");
  UniformGrid1D grid(n_points);
  std::vector<double> lam = resample(lambda, grid);
  const double h = grid.h;
  const std::size_t n = grid.n;
  const std::size_t na = 2 * n - 1;  // xi_a = a*h, a = 0..2n-2

  // In xi = x+y, eta = x-y the node (x_i, y_j) is (a, b) = (i+j, i-j) and the
  // triangle maps onto {0 <= b <= bmax(a)}, bmax(a) = min(a, 2n-2-a).
  auto bmax = [&](std::size_t a) { return std::min(a, na - 1 - a); };

  // lambda on the half grid m*h/2; odd entries are the neighbor average.
  // The average makes each pair of half-grid trapezoid cells telescope to one
  // node-grid cell, so the quadrature below carries no parity jitter and the
  // even rows of Lam can be pinned to the node-grid accumulation exactly.
  // Higher-order interpolants break that identity and feed mesh-frequency
  // error into the mapped-back stencils.
  std::vector<double> lam_half(na);
  for (std::size_t m = 0; m < na; ++m) {
    lam_half[m] = (m % 2 == 0) ? lam[m / 2] : 0.5 * (lam[(m - 1) / 2] + lam[(m + 1) / 2]);
  }
  // Lam_a = int_0^{xi_a} lambda(s/2) ds. Even entries are pinned to twice the
  // node-grid cumulative trapezoid so that the mapped-back diagonal matches
  // the trapezoid accumulation bit-for-bit.
  std::vector<double> cum = cumulative_trapezoid(lam, h);
  std::vector<double> Lam(na);
  for (std::size_t a = 0; a < na; ++a) {
    if (a % 2 == 0) {
      Lam[a] = 2.0 * cum[a / 2];
    } else {
      Lam[a] = 2.0 * cum[(a - 1) / 2] + 0.5 * h * (lam_half[a - 1] + lam_half[a]);
    }
  }

  // Ragged storage for G(a, b), b <= bmax(a).
  std::vector<std::size_t> offset(na + 1, 0);
  for (std::size_t a = 0; a < na; ++a) offset[a + 1] = offset[a] + bmax(a) + 1;
  std::vector<double> G(offset[na], 0.0), Gnext(offset[na], 0.0);
  std::vector<double> inner(offset[na], 0.0);  // J(c, b) = int_0^{eta_b} lambda((xi_c - s)/2) G(c, s) ds
  auto idx = [&](std::size_t a, std::size_t b) { return offset[a] + b; };

  double change = 0.0;
  for (int iter = 0; iter < max_iters; ++iter) {
    for (std::size_t c = 0; c < na; ++c) {
      double acc = 0.0;
      inner[idx(c, 0)] = 0.0;
      for (std::size_t d = 1; d <= bmax(c); ++d) {
        double f0 = lam_half[c - (d - 1)] * G[idx(c, d - 1)];
        double f1 = lam_half[c - d] * G[idx(c, d)];
        acc += 0.5 * h * (f0 + f1);
        inner[idx(c, d)] = acc;
      }
    }
    change = 0.0;
    for (std::size_t b = 0; b < n; ++b) {
      // G(xi, eta) = -(1/4)[Lam(xi) - Lam(eta)] + (1/4) int_eta^xi J(sigma, eta) dsigma,
      // accumulated over xi at fixed eta.
      double outer = 0.0;
      for (std::size_t a = b; a < na; ++a) {
        if (bmax(a) < b) break;  // past the mapped triangle
        if (a > b) outer += 0.5 * h * (inner[idx(a - 1, b)] + inner[idx(a, b)]);
        double g = (b == a) ? 0.0 : -0.25 * (Lam[a] - Lam[b]) + 0.25 * outer;
        std::size_t id = idx(a, b);
        change = std::max(change, std::abs(g - G[id]));
        Gnext[id] = g;
      }
    }
    std::swap(G, Gnext);
    if (change <= tol) {
      KernelField k{UniformGrid1D(n_points)};
      for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j <= i; ++j) k.at(i, j) = G[idx(i + j, i - j)];
      }
      return k;
    }
  }
  throw ConvergenceError("kernel fixed-point iteration did not reach tol", change);
}

KernelField solve_kernel(const ReactionProfile& lambda, const GoursatSolveOptions& options) {
  if (options.method == KernelMethod::fd_marching) {
    return solve_kernel_fd(lambda, options.n_points);
  }
  return solve_kernel_integral(lambda, options.n_points, options.max_iters, options.tol);
}

KernelResidualReport kernel_residuals(const KernelField& k, const ReactionProfile& lambda) {
  if (!(k.grid == lambda.grid)) throw InvalidInputError("kernel and profile grids differ");
  const std::size_t n = k.grid.n;
  const double h = k.grid.h;
  const std::vector<double>& lam = lambda.values;

  KernelResidualReport report;
  std::vector<double> cum = cumulative_trapezoid(lam, h);
  double lbar = lambda.sup_norm;
  report.bound_margin = lbar;  // value at (0,0); min below
  for (std::size_t i = 0; i < n; ++i) {
    report.bc_zero_sup = std::max(report.bc_zero_sup, std::abs(k.at(i, 0)));
    report.bc_diag_sup = std::max(report.bc_diag_sup, std::abs(k.at(i, i) + 0.5 * cum[i]));
    double bound = lbar * std::exp(2.0 * lbar * k.grid.node(i));
    for (std::size_t j = 0; j <= i; ++j) {
      report.bound_margin = std::min(report.bound_margin, bound - std::abs(k.at(i, j)));
    }
  }
  for (std::size_t i = 2; i + 1 < n; ++i) {
    for (std::size_t j = 1; j + 1 < i; ++j) {
      double kxx = k.at(i + 1, j) - 2.0 * k.at(i, j) + k.at(i - 1, j);
      double kyy = k.at(i, j + 1) - 2.0 * k.at(i, j) + k.at(i, j - 1);
      double r = (kxx - kyy) / (h * h) - lam[j] * k.at(i, j);
      report.pde_residual_sup = std::max(report.pde_residual_sup, std::abs(r));
    }
  }
  return report;
}

KernelField inverse_kernel(const KernelField& k, int max_iters, double tol) {
  const std::size_t n = k.grid.n;
  const double h = k.grid.h;
  KernelField l = k;  // first Picard iterate from l = 0 is k itself
  KernelField lnext(k.grid);
  double bound = sup_norm(k.values) * std::exp(sup_norm(k.values)) + tol;

  for (int iter = 0; iter < max_iters; ++iter) {
    double change = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j <= i; ++j) {
        // trapezoid of k(x_i, s) l(s, y_j) over s in [y_j, x_i]
        double integral = 0.0;
        for (std::size_t s = j; s < i; ++s) {
          double f0 = k.at(i, s) * l.at(s, j);
          double f1 = k.at(i, s + 1) * l.at(s + 1, j);
          integral += 0.5 * h * (f0 + f1);
        }
        double v = k.at(i, j) + integral;
        change = std::max(change, std::abs(v - l.at(i, j)));
        lnext.at(i, j) = v;
      }
    }
    std::swap(l.values, lnext.values);
    if (change <= tol) {
      if (sup_norm(l.values) > bound) {
        throw ConvergenceError("inverse kernel exceeded its a priori bound", change);
      }
      return l;
    }
  }
  throw ConvergenceError("inverse kernel iteration did not reach tol", 0.0);
}

}  // namespace backstep
