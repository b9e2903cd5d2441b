#pragma once

#include <Eigen/Dense>

#include <array>
#include <cstddef>
#include <functional>
#include <stdexcept>
#include <vector>

#include "crstokes/mesh.hpp"
#include "crstokes/quadrature.hpp"

namespace crstokes {

using VectorFunction = std::function<Point(Point)>;
using GradientFunction = std::function<Eigen::Matrix2d(Point)>;
using ScalarFunction = std::function<double(Point)>;

/// Index maps for the unknowns of the primal-dual system, laid out as
/// [u | p | z | x | lambda]:
///   u      Crouzeix-Raviart velocity, both components, every face
///   p      piecewise constant pressure
///   z      dual velocity, interior faces only (zero boundary averages)
///   x      dual pressure
///   lambda scalar multiplier enforcing zero mean pressure
/// Velocity blocks are component-major: component c of face f sits at c * n + f.
class DofLayout {
 public:
  static constexpr std::size_t npos = static_cast<std::size_t>(-1);

  explicit DofLayout(const TriMesh& mesh)
      : n_vel_(mesh.num_faces()), n_vel0_(mesh.num_interior_faces()), n_press_(mesh.num_triangles()) {
    interior_index_.assign(n_vel_, npos);
    for (std::size_t f = 0; f < n_vel_; ++f) {
      if (!mesh.faces()[f].is_boundary()) {
        interior_index_[f] = interior_faces_.size();
        interior_faces_.push_back(f);
      }
    }
  }

  std::size_t n_vel() const { return n_vel_; }
  std::size_t n_vel0() const { return n_vel0_; }
  std::size_t n_press() const { return n_press_; }

  std::size_t offset_u() const { return 0; }
  std::size_t offset_p() const { return 2 * n_vel_; }
  std::size_t offset_z() const { return offset_p() + n_press_; }
  std::size_t offset_x() const { return offset_z() + 2 * n_vel0_; }
  std::size_t offset_lambda() const { return offset_x() + n_press_; }
  std::size_t total() const { return offset_lambda() + 1; }

  std::size_t u_dof(int comp, std::size_t face) const { return offset_u() + comp * n_vel_ + face; }
  std::size_t p_dof(std::size_t tri) const { return offset_p() + tri; }
  /// npos for boundary faces.
  std::size_t z_dof(int comp, std::size_t face) const {
    const std::size_t k = interior_index_[face];
    return k == npos ? npos : offset_z() + comp * n_vel0_ + k;
  }
  std::size_t x_dof(std::size_t tri) const { return offset_x() + tri; }
  std::size_t lambda_dof() const { return offset_lambda(); }

  std::size_t interior_index(std::size_t face) const { return interior_index_[face]; }
  const std::vector<std::size_t>& interior_faces() const { return interior_faces_; }

 private:
  std::size_t n_vel_;
  std::size_t n_vel0_;
  std::size_t n_press_;
  std::vector<std::size_t> interior_index_;
  std::vector<std::size_t> interior_faces_;
};

/// Gradients of the barycentric coordinates of triangle t.
inline std::array<Point, 3> barycentric_gradients(const TriMesh& mesh, std::size_t t) {
  const auto c = mesh.corners(t);
  const double two_area = 2.0 * mesh.signed_area(t);
  if (!(two_area > 0.0)) throw std::invalid_argument("barycentric_gradients: degenerate triangle");
  return {Point{(c[1].y - c[2].y) / two_area, (c[2].x - c[1].x) / two_area},
          Point{(c[2].y - c[0].y) / two_area, (c[0].x - c[2].x) / two_area},
          Point{(c[0].y - c[1].y) / two_area, (c[1].x - c[0].x) / two_area}};
}

inline std::array<double, 3> barycentric_coordinates(const TriMesh& mesh, std::size_t t, Point p) {
  const auto g = barycentric_gradients(mesh, t);
  const Point d = p - mesh.barycenter(t);
  return {1.0 / 3.0 + dot(g[0], d), 1.0 / 3.0 + dot(g[1], d), 1.0 / 3.0 + dot(g[2], d)};
}

/// Crouzeix-Raviart shape functions on one triangle. Function i is associated
/// with local face i (opposite local vertex i): phi_i = 1 - 2 lambda_i.
struct CrBasis {
  std::array<double, 3> values{};
  std::array<Point, 3> gradients;
};

inline std::array<Point, 3> cr_gradients(const TriMesh& mesh, std::size_t t) {
  const auto g = barycentric_gradients(mesh, t);
  return {-2.0 * g[0], -2.0 * g[1], -2.0 * g[2]};
}

/// Evaluates the basis without an inside check; used at quadrature points.
inline CrBasis cr_basis_unchecked(const TriMesh& mesh, std::size_t t, Point p) {
  const auto g = barycentric_gradients(mesh, t);
  const Point d = p - mesh.barycenter(t);
  CrBasis basis;
  for (int i = 0; i < 3; ++i) {
    basis.values[i] = 1.0 - 2.0 * (1.0 / 3.0 + dot(g[i], d));
    basis.gradients[i] = -2.0 * g[i];
  }
  return basis;
}

inline void require_inside(const TriMesh& mesh, std::size_t t, Point p) {
  const auto l = barycentric_coordinates(mesh, t, p);
  constexpr double tol = -1e-12;
  if (l[0] < tol || l[1] < tol || l[2] < tol) {
    throw std::out_of_range("point lies outside triangle " + std::to_string(t));
  }
}

inline CrBasis cr_basis_eval(const TriMesh& mesh, std::size_t t, Point p) {
  require_inside(mesh, t, p);
  return cr_basis_unchecked(mesh, t, p);
}

/// Vector-valued CR field (u_h, z_h): coefficients are face averages,
/// component-major, length 2 * num_faces.
struct VelocityField {
  const TriMesh* mesh = nullptr;
  Eigen::VectorXd coefficients;

  VelocityField() = default;
  explicit VelocityField(const TriMesh& m)
      : mesh(&m), coefficients(Eigen::VectorXd::Zero(2 * static_cast<Eigen::Index>(m.num_faces()))) {}

  std::size_t num_faces() const { return mesh->num_faces(); }
  double& coeff(int comp, std::size_t face) { return coefficients[comp * num_faces() + face]; }
  double coeff(int comp, std::size_t face) const { return coefficients[comp * num_faces() + face]; }

  Point value_unchecked(std::size_t t, Point p) const {
    const auto basis = cr_basis_unchecked(*mesh, t, p);
    const auto& faces = mesh->tri_to_faces()[t];
    Point v;
    for (int i = 0; i < 3; ++i) {
      v.x += coeff(0, faces[i]) * basis.values[i];
      v.y += coeff(1, faces[i]) * basis.values[i];
    }
    return v;
  }

  Point value(std::size_t t, Point p) const {
    require_inside(*mesh, t, p);
    return value_unchecked(t, p);
  }

  /// Row c holds the gradient of component c.
  Eigen::Matrix2d gradient(std::size_t t) const {
    const auto grads = cr_gradients(*mesh, t);
    const auto& faces = mesh->tri_to_faces()[t];
    Eigen::Matrix2d g = Eigen::Matrix2d::Zero();
    for (int c = 0; c < 2; ++c) {
      for (int i = 0; i < 3; ++i) {
        g(c, 0) += coeff(c, faces[i]) * grads[i].x;
        g(c, 1) += coeff(c, faces[i]) * grads[i].y;
      }
    }
    return g;
  }

  double divergence(std::size_t t) const {
    const Eigen::Matrix2d g = gradient(t);
    return g(0, 0) + g(1, 1);
  }
};

/// Piecewise constant field, one coefficient per triangle.
struct PressureField {
  const TriMesh* mesh = nullptr;
  Eigen::VectorXd coefficients;

  PressureField() = default;
  explicit PressureField(const TriMesh& m)
      : mesh(&m), coefficients(Eigen::VectorXd::Zero(static_cast<Eigen::Index>(m.num_triangles()))) {}

  double value(std::size_t t, Point p) const {
    require_inside(*mesh, t, p);
    return coefficients[t];
  }
  Point gradient(std::size_t) const { return {0.0, 0.0}; }
};

inline Point eval_field(const VelocityField& field, std::size_t t, Point p) { return field.value(t, p); }
inline double eval_field(const PressureField& field, std::size_t t, Point p) { return field.value(t, p); }
inline Eigen::Matrix2d broken_gradient(const VelocityField& field, std::size_t t) { return field.gradient(t); }
inline Point broken_gradient(const PressureField& field, std::size_t t) { return field.gradient(t); }

/// CR interpolant r_h: each face dof is the face average of v.
inline VelocityField interpolate_rh(const TriMesh& mesh, const VectorFunction& v) {
  VelocityField field(mesh);
  for (std::size_t f = 0; f < mesh.num_faces(); ++f) {
    const Face& face = mesh.faces()[f];
    const Point a = mesh.vertices()[face.vertex_ids[0]];
    const Point b = mesh.vertices()[face.vertex_ids[1]];
    field.coeff(0, f) = integrate_segment(a, b, [&](Point p) { return v(p).x; }) / face.length;
    field.coeff(1, f) = integrate_segment(a, b, [&](Point p) { return v(p).y; }) / face.length;
  }
  return field;
}

/// L2 projection onto piecewise constants (elementwise mean).
inline PressureField project_pi0(const TriMesh& mesh, const ScalarFunction& p) {
  PressureField field(mesh);
  for (std::size_t t = 0; t < mesh.num_triangles(); ++t) {
    field.coefficients[t] = integrate_triangle(mesh, t, p) / mesh.area(t);
  }
  return field;
}

}  // namespace crstokes
