#pragma once

#include <array>
#include <cmath>
#include <vector>

#include "crstokes/mesh.hpp"

namespace crstokes {

/// Quadrature on the reference triangle in barycentric coordinates.
/// Weights are normalized to sum to one, so a physical integral is
/// area * sum_q w_q f(x_q).
struct QuadRule {
  std::vector<std::array<double, 3>> points;
  std::vector<double> weights;
  int degree = 0;
};

/// Gauss-Legendre rule on [0, 1], weights summing to one.
struct LineRule {
  std::vector<double> points;
  std::vector<double> weights;
  int degree = 0;
};

namespace detail {

inline void add_orbit3(QuadRule& rule, double a, double b, double w) {
  rule.points.push_back({a, b, b});
  rule.points.push_back({b, a, b});
  rule.points.push_back({b, b, a});
  for (int i = 0; i < 3; ++i) rule.weights.push_back(w);
}

inline void add_orbit6(QuadRule& rule, double a, double b, double c, double w) {
  rule.points.push_back({a, b, c});
  rule.points.push_back({a, c, b});
  rule.points.push_back({b, a, c});
  rule.points.push_back({b, c, a});
  rule.points.push_back({c, a, b});
  rule.points.push_back({c, b, a});
  for (int i = 0; i < 6; ++i) rule.weights.push_back(w);
}

}  // namespace detail

/// Edge midpoint rule, exact for quadratics.
inline const QuadRule& triangle_rule_degree2() {
  static const QuadRule rule = [] {
    QuadRule r;
    r.degree = 2;
    detail::add_orbit3(r, 0.0, 0.5, 1.0 / 3.0);
    return r;
  }();
  return rule;
}

/// Dunavant's 12-point symmetric rule, exact for polynomials of degree 6.
inline const QuadRule& triangle_rule_degree6() {
  static const QuadRule rule = [] {
    QuadRule r;
    r.degree = 6;
    detail::add_orbit3(r, 0.501426509658179, 0.249286745170910, 0.116786275726379);
    detail::add_orbit3(r, 0.873821971016996, 0.063089014491502, 0.050844906370207);
    detail::add_orbit6(r, 0.053145049844817, 0.310352451033784, 0.636502499121399,
                       0.082851075618374);
    return r;
  }();
  return rule;
}

/// Two-point Gauss rule, exact for cubics.
inline const LineRule& line_rule_gauss2() {
  static const LineRule rule = [] {
    const double d = 0.5 / std::sqrt(3.0);
    return LineRule{{0.5 - d, 0.5 + d}, {0.5, 0.5}, 3};
  }();
  return rule;
}

/// Three-point Gauss rule, exact for quintics.
inline const LineRule& line_rule_gauss3() {
  static const LineRule rule = [] {
    const double d = 0.5 * std::sqrt(0.6);
    return LineRule{{0.5 - d, 0.5, 0.5 + d}, {5.0 / 18.0, 8.0 / 18.0, 5.0 / 18.0}, 5};
  }();
  return rule;
}

inline Point map_barycentric(const std::array<Point, 3>& c, const std::array<double, 3>& l) {
  return {l[0] * c[0].x + l[1] * c[1].x + l[2] * c[2].x, l[0] * c[0].y + l[1] * c[1].y + l[2] * c[2].y};
}

/// Integral over triangle t of f (any callable Point -> double).
template <class F>
double integrate_triangle(const TriMesh& mesh, std::size_t t, F&& f,
                          const QuadRule& rule = triangle_rule_degree6()) {
  const auto c = mesh.corners(t);
  double sum = 0.0;
  for (std::size_t q = 0; q < rule.points.size(); ++q) {
    sum += rule.weights[q] * f(map_barycentric(c, rule.points[q]));
  }
  return mesh.area(t) * sum;
}

/// Integral over the segment [a, b] of f.
template <class F>
double integrate_segment(Point a, Point b, F&& f, const LineRule& rule = line_rule_gauss3()) {
  double sum = 0.0;
  for (std::size_t q = 0; q < rule.points.size(); ++q) {
    sum += rule.weights[q] * f(a + rule.points[q] * (b - a));
  }
  return norm(b - a) * sum;
}

}  // namespace crstokes
