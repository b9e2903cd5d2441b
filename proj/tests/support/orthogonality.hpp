#pragma once

#include <Eigen/Core>

#include "crstokes/assembly.hpp"
#include "crstokes/spaces.hpp"

namespace crstokes::testing {

// Vector of a_h(v, phi) for every velocity basis function phi of V_h, with
// the broken gradient of v integrated by quadrature.
inline Eigen::VectorXd a_against_basis(const TriMesh& mesh, const GradientFunction& grad_v) {
  const std::size_t nv = mesh.num_faces();
  Eigen::VectorXd out = Eigen::VectorXd::Zero(2 * static_cast<Eigen::Index>(nv));
  for (std::size_t t = 0; t < mesh.num_triangles(); ++t) {
    Eigen::Matrix2d mean = Eigen::Matrix2d::Zero();
    for (int r = 0; r < 2; ++r) {
      for (int s = 0; s < 2; ++s) mean(r, s) = integrate_triangle(mesh, t, [&](Point p) { return grad_v(p)(r, s); });
    }
    const auto grads = cr_gradients(mesh, t);
    for (int i = 0; i < 3; ++i) {
      const std::size_t f = mesh.tri_to_faces()[t][i];
      for (int c = 0; c < 2; ++c) out[c * nv + f] += mean(c, 0) * grads[i].x + mean(c, 1) * grads[i].y;
    }
  }
  return out;
}

// Vector of b_h(q_kappa, v) = -int_kappa div v for every element indicator q_kappa.
inline Eigen::VectorXd b_against_indicators(const TriMesh& mesh, const GradientFunction& grad_v) {
  Eigen::VectorXd out(static_cast<Eigen::Index>(mesh.num_triangles()));
  for (std::size_t t = 0; t < mesh.num_triangles(); ++t) {
    out[t] = -integrate_triangle(mesh, t, [&](Point p) { return grad_v(p).trace(); });
  }
  return out;
}

struct OrthogonalityDefect {
  double a = 0.0;
  double b = 0.0;
};

inline OrthogonalityDefect orthogonality_defect(const TriMesh& mesh, const VectorFunction& v, const GradientFunction& grad_v) {
  const DofLayout layout(mesh);
  const VelocityField rh = interpolate_rh(mesh, v);
  const Eigen::VectorXd ra =
      w_embedding(layout).transpose() * (a_against_basis(mesh, grad_v) - assemble_a(mesh, layout) * rh.coefficients);
  const Eigen::VectorXd rb =
      b_against_indicators(mesh, grad_v) - assemble_b(mesh, layout, TrialSpace::V) * rh.coefficients;
  return {ra.lpNorm<Eigen::Infinity>(), rb.lpNorm<Eigen::Infinity>()};
}

}  // namespace crstokes::testing
