#include "backstep/grid.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "backstep/errors.hpp"

namespace backstep {

UniformGrid1D::UniformGrid1D(std::size_t n_points) : n(n_points) {
  if (n_points < 3) throw InvalidInputError("grid needs at least 3 points");
  h = 1.0 / static_cast<double>(n_points - 1);
}

ReactionProfile::ReactionProfile(UniformGrid1D g) : grid(g), values(g.n, 0.0) {}

ReactionProfile::ReactionProfile(UniformGrid1D g, std::vector<double> v)
    : grid(g), values(std::move(v)) {
  if (values.size() != grid.n) throw InvalidInputError("profile length does not match grid");
  for (double x : values) {
    if (!std::isfinite(x)) throw InvalidInputError("non-finite reaction coefficient");
  }
  sup_norm = backstep::sup_norm(values);
}

ReactionProfile chebyshev_profile(double c, double gamma, std::size_t n_points) {
  UniformGrid1D grid(n_points);
  std::vector<double> v(n_points);
  for (std::size_t i = 0; i < n_points; ++i) {
    v[i] = c * std::cos(gamma * std::acos(grid.node(i)));
  }
  return {grid, std::move(v)};
}

KernelField::KernelField(UniformGrid1D g) : grid(g), values(g.n * (g.n + 1) / 2, 0.0) {}

std::vector<double> KernelField::last_row() const {
  std::vector<double> row(grid.n);
  for (std::size_t j = 0; j < grid.n; ++j) row[j] = at(grid.n - 1, j);
  return row;
}

double trapezoid(const std::vector<double>& values, double h) {
  if (values.size() < 2) throw InvalidInputError("trapezoid needs at least 2 samples");
  double s = 0.5 * (values.front() + values.back());
  for (std::size_t i = 1; i + 1 < values.size(); ++i) s += values[i];
  return s * h;
}

double l2_norm(const std::vector<double>& u, double h) {
  std::vector<double> sq(u.size());
  for (std::size_t i = 0; i < u.size(); ++i) sq[i] = u[i] * u[i];
  return std::sqrt(trapezoid(sq, h));
}

double l2_norm(const PdeState& state) { return l2_norm(state.u, state.grid.h); }

double sup_norm(const std::vector<double>& values) {
  if (values.empty()) throw InvalidInputError("sup_norm of empty vector");
  double m = 0.0;
  for (double x : values) m = std::max(m, std::abs(x));
  return m;
}

double linear_interpolate(const UniformGrid1D& grid, const std::vector<double>& values, double x) {
  if (x < 0.0 || x > 1.0) throw DomainError("interpolation point outside [0,1]");
  double s = x / grid.h;
  auto i = static_cast<std::size_t>(std::min(s, static_cast<double>(grid.n - 2)));
  double f = s - static_cast<double>(i);
  return values[i] * (1.0 - f) + values[i + 1] * f;
}

double triangle_interpolate(const KernelField& field, double x, double y) {
  // Tolerate roundoff-level excursions across the edges; anything larger is a domain error.
  const double tol = 1e-12;
  if (x < -tol || x > 1.0 + tol || y < -tol || y > x + tol) {
    throw DomainError("query point outside the triangle 0 <= y <= x <= 1");
  }
  const auto& g = field.grid;
  x = std::clamp(x, 0.0, 1.0);
  y = std::clamp(y, 0.0, x);
  double sx = x / g.h, sy = y / g.h;
  auto i = static_cast<std::size_t>(std::min(sx, static_cast<double>(g.n - 2)));
  auto j = static_cast<std::size_t>(std::min(sy, static_cast<double>(g.n - 2)));
  if (j > i) j = i;  // roundoff near the diagonal
  double fx = sx - static_cast<double>(i);
  double fy = sy - static_cast<double>(j);
  if (j == i) {
    // Cell straddles the diagonal; only its lower half lies in T. Affine
    // interpolation on the three corners (i,i), (i+1,i), (i+1,i+1).
    double v00 = field.at(i, j);
    double v10 = field.at(i + 1, j);
    double v11 = field.at(i + 1, j + 1);
    return v00 + fx * (v10 - v00) + fy * (v11 - v10);
  }
  double v00 = field.at(i, j);
  double v10 = field.at(i + 1, j);
  double v01 = field.at(i, j + 1);
  double v11 = field.at(i + 1, j + 1);
  return v00 * (1 - fx) * (1 - fy) + v10 * fx * (1 - fy) + v01 * (1 - fx) * fy + v11 * fx * fy;
}

}  // namespace backstep
