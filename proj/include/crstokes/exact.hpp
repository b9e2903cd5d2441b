#pragma once

#include <Eigen/Dense>

#include <array>
#include <cmath>
#include <stdexcept>
#include <string>

#include "crstokes/spaces.hpp"

namespace crstokes {

/// Closed-form Stokes solution with zero body force.
struct ExactSolution {
  std::string name;
  VectorFunction velocity;
  GradientFunction velocity_gradient;
  ScalarFunction pressure;
};

/// u = (20 x y^3, 5 x^4 - 5 y^4), p = 60 x^2 y - 20 y^3 - 5.
inline ExactSolution polynomial_flow() {
  return {"paper_example",
          [](Point p) {
            return Point{20.0 * p.x * p.y * p.y * p.y, 5.0 * std::pow(p.x, 4) - 5.0 * std::pow(p.y, 4)};
          },
          [](Point p) {
            Eigen::Matrix2d g;
            g << 20.0 * p.y * p.y * p.y, 60.0 * p.x * p.y * p.y, 20.0 * p.x * p.x * p.x, -20.0 * p.y * p.y * p.y;
            return g;
          },
          [](Point p) { return 60.0 * p.x * p.x * p.y - 20.0 * p.y * p.y * p.y - 5.0; }};
}

/// u = (y, x), p = 0. Lies in the discrete velocity space.
inline ExactSolution patch_affine() {
  return {"patch_affine", [](Point p) { return Point{p.y, p.x}; },
          [](Point) {
            Eigen::Matrix2d g;
            g << 0.0, 1.0, 1.0, 0.0;
            return g;
          },
          [](Point) { return 0.0; }};
}

/// Linear combination of force-free Stokes solutions:
///   c0 * polynomial_flow + c1 * (y, x) + c2 * (x, -y) + c3 * (1, 0) + c4 * (0, 1).
/// The pressure is c0 times the polynomial_flow pressure.
inline ExactSolution custom_combination(const std::array<double, 5>& c) {
  const ExactSolution base = polynomial_flow();
  return {"custom",
          [base, c](Point p) {
            const Point b = base.velocity(p);
            return Point{c[0] * b.x + c[1] * p.y + c[2] * p.x + c[3], c[0] * b.y + c[1] * p.x - c[2] * p.y + c[4]};
          },
          [base, c](Point p) {
            Eigen::Matrix2d affine;
            affine << c[2], c[1], c[1], -c[2];
            return Eigen::Matrix2d(c[0] * base.velocity_gradient(p) + affine);
          },
          [base, c](Point p) { return c[0] * base.pressure(p); }};
}

inline ExactSolution exact_solution_by_name(const std::string& name, const std::array<double, 5>& coefficients = {}) {
  if (name == "paper_example") return polynomial_flow();
  if (name == "patch_affine") return patch_affine();
  if (name == "custom") return custom_combination(coefficients);
  throw std::invalid_argument("unknown exact solution: " + name);
}

}  // namespace crstokes
