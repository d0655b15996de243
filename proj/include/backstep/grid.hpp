#pragma once

#include <cstddef>
#include <vector>

namespace backstep {

// Uniform grid on [0,1] with nodes x_i = i*h, h = 1/(n_points-1).
struct UniformGrid1D {
  explicit UniformGrid1D(std::size_t n_points);

  std::size_t n{};
  double h{};

  double node(std::size_t i) const { return static_cast<double>(i) * h; }
  bool operator==(const UniformGrid1D&) const = default;
};

// Spatially varying reaction coefficient sampled on a grid, with its sup norm.
struct ReactionProfile {
  explicit ReactionProfile(UniformGrid1D grid);
  ReactionProfile(UniformGrid1D grid, std::vector<double> values);

  UniformGrid1D grid;
  std::vector<double> values;
  double sup_norm{};  // max_i |values[i]|
};

// lambda(x) = c * cos(gamma * acos(x)) sampled on n points.
ReactionProfile chebyshev_profile(double c, double gamma, std::size_t n_points);

// Kernel k(x,y) on the triangle T = {0 <= y <= x <= 1}, row-major over j <= i.
struct KernelField {
  KernelField() : KernelField(UniformGrid1D(3)) {}
  explicit KernelField(UniformGrid1D grid);

  UniformGrid1D grid;
  std::vector<double> values;  // size n(n+1)/2

  static std::size_t tri_index(std::size_t i, std::size_t j) { return i * (i + 1) / 2 + j; }
  double& at(std::size_t i, std::size_t j) { return values[tri_index(i, j)]; }
  double at(std::size_t i, std::size_t j) const { return values[tri_index(i, j)]; }

  // Gain row k(1, y_j), j = 0..n-1.
  std::vector<double> last_row() const;
};

// State u(., t) of the plant on a grid.
struct PdeState {
  UniformGrid1D grid;
  std::vector<double> u;
  double t{};
};

// Composite trapezoid with uniform spacing h; exact for affine integrands.
double trapezoid(const std::vector<double>& values, double h);

// sqrt(int_0^1 u^2 dx) by trapezoid quadrature.
double l2_norm(const PdeState& state);
double l2_norm(const std::vector<double>& u, double h);

double sup_norm(const std::vector<double>& values);

// Bilinear interpolation of a kernel field at (x,y) in T; exact at nodes.
double triangle_interpolate(const KernelField& field, double x, double y);

// Linear interpolation of grid samples at x in [0,1].
double linear_interpolate(const UniformGrid1D& grid, const std::vector<double>& values, double x);

}  // namespace backstep
