#pragma once

#include <cstddef>

#include "backstep/grid.hpp"

namespace backstep {

enum class KernelMethod { fd_marching, integral_fixed_point };

// Update used for the node one below the diagonal when marching in x.
//
//   characteristic: first-order step along x with the slope implied by the
//     diagonal data, k_x(x,x) = (lambda(0) - lambda(x))/4 - k(x,x)^2/2.
//     Converges to the integral-equation fixed point at second order.
//   naive_slope: k(x+h, x) = k(x,x) + (h/2) lambda(x). Kept for comparison;
//     first order only, percent-level error at N = 101 (see README).
enum class NearDiagonalClosure { characteristic, naive_slope };

struct GoursatSolveOptions {
  std::size_t n_points = 101;
  KernelMethod method = KernelMethod::fd_marching;
  int max_iters = 200;    // fixed-point only
  double tol = 1e-10;     // fixed-point only
};

struct KernelResidualReport {
  double pde_residual_sup{};  // sup |k_xx - k_yy - lambda(y) k| over interior nodes
  double bc_zero_sup{};       // sup |k(x,0)|
  double bc_diag_sup{};       // sup |k(x,x) + (1/2) int_0^x lambda|
  double bound_margin{};      // min over nodes of lambda_bar e^{2 lambda_bar x} - |k|
};

// Explicit marching solver for k_xx - k_yy = lambda(y) k on the triangle,
// k(x,0) = 0, k(x,x) = -(1/2) int_0^x lambda. Diagonal values accumulate by
// trapezoid: k(i+1,i+1) = k(i,i) - (h/4)(lambda_i + lambda_{i+1}).
KernelField solve_kernel_fd(const ReactionProfile& lambda, std::size_t n_points,
                            NearDiagonalClosure closure = NearDiagonalClosure::characteristic);

// Successive approximation of the equivalent integral equation in the
// characteristic variables xi = x+y, eta = x-y, starting from the zero field.
// Stops when the sup change between iterates is <= tol.
KernelField solve_kernel_integral(const ReactionProfile& lambda, std::size_t n_points,
                                  int max_iters = 200, double tol = 1e-10);

KernelField solve_kernel(const ReactionProfile& lambda, const GoursatSolveOptions& options);

// Defining-relation residuals of a kernel field. The PDE residual uses
// centered second differences on nodes at least one node away from the
// edges and the diagonal.
KernelResidualReport kernel_residuals(const KernelField& k, const ReactionProfile& lambda);

// Fixed point of l(x,y) = k(x,y) + int_y^x k(x,s) l(s,y) ds, the kernel of the
// inverse transform. sup_norm(l) <= sup_norm(k) exp(sup_norm(k)) + tol.
KernelField inverse_kernel(const KernelField& k, int max_iters = 200, double tol = 1e-12);

}  // namespace backstep
