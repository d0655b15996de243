#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "backstep/errors.hpp"
#include "backstep/grid.hpp"

using namespace backstep;

TEST(UniformGrid, SpacingAndNodes) {
  UniformGrid1D g(101);
  EXPECT_EQ(g.n, 101u);
  EXPECT_DOUBLE_EQ(g.h, 0.01);
  EXPECT_DOUBLE_EQ(g.node(0), 0.0);
  EXPECT_DOUBLE_EQ(g.node(100), 1.0);
  EXPECT_NEAR(g.node(37), 0.37, 1e-15);
}

TEST(UniformGrid, RejectsTinyGrids) {
  EXPECT_THROW(UniformGrid1D(2), InvalidInputError);
  EXPECT_NO_THROW(UniformGrid1D(3));
}

TEST(ReactionProfile, ValidatesLengthAndFiniteness) {
  UniformGrid1D g(5);
  EXPECT_THROW(ReactionProfile(g, {1.0, 2.0}), InvalidInputError);
  std::vector<double> bad(5, 1.0);
  bad[3] = std::nan("");
  EXPECT_THROW(ReactionProfile(g, bad), InvalidInputError);
  ReactionProfile p(g, {0.0, -3.0, 2.0, 1.0, -0.5});
  EXPECT_DOUBLE_EQ(p.sup_norm, 3.0);
}

TEST(ChebyshevProfile, MatchesClosedFormAtNodes) {
  std::size_t n = 101;
  ReactionProfile p = chebyshev_profile(20.0, 5.0, n);
  for (std::size_t i = 0; i < n; ++i) {
    double x = p.grid.node(i);
    EXPECT_DOUBLE_EQ(p.values[i], 20.0 * std::cos(5.0 * std::acos(x)));
  }
  // Right endpoint: acos(1) = 0, so the value is exactly c.
  EXPECT_DOUBLE_EQ(p.values[n - 1], 20.0);
  EXPECT_LE(p.sup_norm, 20.0 + 1e-12);
}

TEST(ChebyshevProfile, RootAtCosPiOverTen) {
  // 20 cos(5 acos x) vanishes at x = cos(pi/10); check via a fine grid.
  ReactionProfile p = chebyshev_profile(20.0, 5.0, 4097);
  double x = std::cos(M_PI / 10.0);
  EXPECT_NEAR(linear_interpolate(p.grid, p.values, x), 0.0, 1e-4);
}

TEST(Trapezoid, ExactOnAffineData) {
  UniformGrid1D g(11);
  std::vector<double> v(g.n);
  for (std::size_t i = 0; i < g.n; ++i) v[i] = 3.0 * g.node(i) - 1.0;
  EXPECT_NEAR(trapezoid(v, g.h), 0.5, 1e-14);
  EXPECT_THROW(trapezoid({1.0}, 0.1), InvalidInputError);
}

TEST(Norms, ConstantAndSupremum) {
  UniformGrid1D g(51);
  std::vector<double> ones(g.n, 1.0);
  EXPECT_NEAR(l2_norm(ones, g.h), 1.0, 1e-14);
  std::vector<double> v = {1.0, -4.0, 2.0};
  EXPECT_DOUBLE_EQ(sup_norm(v), 4.0);
  EXPECT_THROW(sup_norm({}), InvalidInputError);
}

TEST(Norms, SineStateHasRootHalfNorm) {
  UniformGrid1D g(201);
  std::vector<double> v(g.n);
  for (std::size_t i = 0; i < g.n; ++i) v[i] = std::sin(M_PI * g.node(i));
  EXPECT_NEAR(l2_norm(v, g.h), std::sqrt(0.5), 1e-5);
}

TEST(LinearInterpolate, NodesAndMidpoints) {
  UniformGrid1D g(11);
  std::vector<double> v(g.n);
  for (std::size_t i = 0; i < g.n; ++i) v[i] = 2.0 * g.node(i) + 1.0;
  EXPECT_NEAR(linear_interpolate(g, v, 0.3), 1.6, 1e-14);
  EXPECT_NEAR(linear_interpolate(g, v, 0.35), 1.7, 1e-14);
  EXPECT_NEAR(linear_interpolate(g, v, 1.0), 3.0, 1e-14);
  EXPECT_NEAR(linear_interpolate(g, v, 0.0), 1.0, 1e-14);
  EXPECT_THROW(linear_interpolate(g, v, -0.1), DomainError);
  EXPECT_THROW(linear_interpolate(g, v, 1.1), DomainError);
}

TEST(KernelField, TriangularStorageLayout) {
  KernelField k{UniformGrid1D(4)};
  EXPECT_EQ(k.values.size(), 10u);
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t j = 0; j <= i; ++j) k.at(i, j) = 10.0 * i + j;
  EXPECT_DOUBLE_EQ(k.values[0], 0.0);
  EXPECT_DOUBLE_EQ(k.values[1], 10.0);
  EXPECT_DOUBLE_EQ(k.values[2], 11.0);
  EXPECT_DOUBLE_EQ(k.values[9], 33.0);
  std::vector<double> row = k.last_row();
  ASSERT_EQ(row.size(), 4u);
  EXPECT_DOUBLE_EQ(row[0], 30.0);
  EXPECT_DOUBLE_EQ(row[3], 33.0);
}

TEST(TriangleInterpolate, ExactOnAffineFields) {
  std::size_t n = 21;
  KernelField k{UniformGrid1D(n)};
  auto f = [](double x, double y) { return 2.0 * x - 3.0 * y + 0.5; };
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j <= i; ++j) k.at(i, j) = f(k.grid.node(i), k.grid.node(j));

  // Interior cells and cells straddling the diagonal.
  EXPECT_NEAR(triangle_interpolate(k, 0.731, 0.214), f(0.731, 0.214), 1e-13);
  EXPECT_NEAR(triangle_interpolate(k, 0.519, 0.511), f(0.519, 0.511), 1e-13);
  EXPECT_NEAR(triangle_interpolate(k, 0.98, 0.97), f(0.98, 0.97), 1e-13);
  // Nodes, edges, corners.
  EXPECT_NEAR(triangle_interpolate(k, 0.5, 0.5), f(0.5, 0.5), 1e-13);
  EXPECT_NEAR(triangle_interpolate(k, 1.0, 0.0), f(1.0, 0.0), 1e-13);
  EXPECT_NEAR(triangle_interpolate(k, 1.0, 1.0), f(1.0, 1.0), 1e-13);
  EXPECT_NEAR(triangle_interpolate(k, 0.0, 0.0), f(0.0, 0.0), 1e-13);

  EXPECT_THROW(triangle_interpolate(k, 0.4, 0.5), DomainError);
  EXPECT_THROW(triangle_interpolate(k, 1.2, 0.1), DomainError);
  EXPECT_THROW(triangle_interpolate(k, 0.5, -0.1), DomainError);
}

TEST(TriangleInterpolate, ToleratesRoundoffAtDiagonal) {
  KernelField k{UniformGrid1D(11)};
  for (std::size_t i = 0; i < 11; ++i)
    for (std::size_t j = 0; j <= i; ++j) k.at(i, j) = 1.0;
  EXPECT_NEAR(triangle_interpolate(k, 0.3, 0.3 + 1e-13), 1.0, 1e-12);
}
