#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <vector>

#include "crstokes/assembly.hpp"
#include "crstokes/exact.hpp"
#include "crstokes/linsolve.hpp"
#include "crstokes/mesh.hpp"
#include "crstokes/quadrature.hpp"
#include "crstokes/spaces.hpp"

namespace crstokes {

/// Observed convergence orders between a report and the next coarser one.
struct ObservedOrders {
  double l2_u_global = 0.0;
  double l2_u_local = 0.0;
  double l2_p_global = 0.0;
  double r1 = 0.0;
  double r2 = 0.0;
  double broken_h1_u = 0.0;
};

/// Per-mesh measurements. Relative quantities divide by the exact
/// solution's norm over the same region.
struct ErrorReport {
  std::size_t n = 0;
  double h = 0.0;
  double l2_u_global = 0.0;
  double l2_u_local = 0.0;
  double l2_p_global = 0.0;
  double r1 = 0.0;
  double r2 = 0.0;
  double broken_h1_u = 0.0;
  double max_elem_div = 0.0;
  double fitted_model_value = 0.0;
  double rel_l2_u_global = 0.0;
  double rel_l2_u_local = 0.0;
  double rel_l2_p_global = 0.0;
  double rel_r1 = 0.0;
  double solver_residual = 0.0;
  std::optional<ObservedOrders> observed_orders;
};

struct ErrorNorms {
  double l2_u_global = 0.0;
  double l2_u_local = 0.0;
  double l2_p_global = 0.0;
  double broken_h1_u = 0.0;
  double exact_u_global = 0.0;
  double exact_u_local = 0.0;
  double exact_p_global = 0.0;
};

namespace detail {

inline double velocity_error_squared(const TriMesh& mesh, std::size_t t, const VelocityField& u,
                                     const VectorFunction& exact_u) {
  return integrate_triangle(mesh, t, [&](Point p) {
    const Point d = u.value_unchecked(t, p) - exact_u(p);
    return dot(d, d);
  });
}

inline double vector_norm_squared(const TriMesh& mesh, std::size_t t, const VectorFunction& v) {
  return integrate_triangle(mesh, t, [&](Point p) {
    const Point w = v(p);
    return dot(w, w);
  });
}

}  // namespace detail

/// L2 errors of velocity (global and on `local_mark`), of pressure, and the
/// broken H1 seminorm error of velocity.
inline ErrorNorms error_norms(const TriMesh& mesh, const VelocityField& u, const PressureField& p,
                              const VectorFunction& exact_u, const GradientFunction& exact_grad_u,
                              const ScalarFunction& exact_p, const SubdomainMark& local_mark) {
  ErrorNorms out;
  for (std::size_t t = 0; t < mesh.num_triangles(); ++t) {
    const double eu = detail::velocity_error_squared(mesh, t, u, exact_u);
    const double nu = detail::vector_norm_squared(mesh, t, exact_u);
    out.l2_u_global += eu;
    out.exact_u_global += nu;
    if (local_mark.contains(t)) {
      out.l2_u_local += eu;
      out.exact_u_local += nu;
    }
    const double ph = p.coefficients[static_cast<Eigen::Index>(t)];
    out.l2_p_global += integrate_triangle(mesh, t, [&](Point x) { return (ph - exact_p(x)) * (ph - exact_p(x)); });
    out.exact_p_global += integrate_triangle(mesh, t, [&](Point x) { return exact_p(x) * exact_p(x); });
    const Eigen::Matrix2d gh = u.gradient(t);
    out.broken_h1_u += integrate_triangle(mesh, t, [&](Point x) { return (gh - exact_grad_u(x)).squaredNorm(); });
  }
  out.l2_u_global = std::sqrt(out.l2_u_global);
  out.l2_u_local = std::sqrt(out.l2_u_local);
  out.l2_p_global = std::sqrt(out.l2_p_global);
  out.broken_h1_u = std::sqrt(out.broken_h1_u);
  out.exact_u_global = std::sqrt(out.exact_u_global);
  out.exact_u_local = std::sqrt(out.exact_u_local);
  out.exact_p_global = std::sqrt(out.exact_p_global);
  return out;
}

/// (sum over interior faces of h_F^t_exp int_F |[u]|^2)^(1/2), both components.
inline double jump_seminorm(const TriMesh& mesh, const VelocityField& u, int t_exp) {
  const LineRule& rule = line_rule_gauss2();
  double sum = 0.0;
  for (const Face& face : mesh.faces()) {
    if (face.is_boundary()) continue;
    const Point a = mesh.vertices()[face.vertex_ids[0]];
    const Point b = mesh.vertices()[face.vertex_ids[1]];
    double face_sum = 0.0;
    for (std::size_t q = 0; q < rule.points.size(); ++q) {
      const Point xq = a + rule.points[q] * (b - a);
      const Point jump = u.value_unchecked(face.left_tri, xq) - u.value_unchecked(*face.right_tri, xq);
      face_sum += rule.weights[q] * dot(jump, jump);
    }
    sum += std::pow(face.length, t_exp) * face.length * face_sum;
  }
  return std::sqrt(sum);
}

struct Residuals {
  double r1 = 0.0;  // ||u_h - u||_{omega_h}
  double r2 = 0.0;  // ||h^-1/2 [u_h]||_{interior faces}
};

inline Residuals residuals(const TriMesh& mesh, const VelocityField& u, const VectorFunction& exact_u,
                           const SubdomainMark& omega) {
  Residuals out;
  for (std::size_t t : omega.element_ids) out.r1 += detail::velocity_error_squared(mesh, t, u, exact_u);
  out.r1 = std::sqrt(out.r1);
  out.r2 = jump_seminorm(mesh, u, -1);
  return out;
}

/// Max over elements of |div u_h|.
inline double divergence_check(const TriMesh& mesh, const VelocityField& u) {
  double m = 0.0;
  for (std::size_t t = 0; t < mesh.num_triangles(); ++t) m = std::max(m, std::abs(u.divergence(t)));
  return m;
}

/// Continuous piecewise affine vector field, one value per vertex and
/// component (component-major).
struct ConformingField {
  const TriMesh* mesh = nullptr;
  Eigen::VectorXd coefficients;

  ConformingField() = default;
  explicit ConformingField(const TriMesh& m)
      : mesh(&m), coefficients(Eigen::VectorXd::Zero(2 * static_cast<Eigen::Index>(m.num_vertices()))) {}

  std::size_t num_vertices() const { return mesh->num_vertices(); }
  double& coeff(int comp, std::size_t v) { return coefficients[static_cast<Eigen::Index>(comp * num_vertices() + v)]; }
  double coeff(int comp, std::size_t v) const {
    return coefficients[static_cast<Eigen::Index>(comp * num_vertices() + v)];
  }

  Point value(std::size_t t, Point p) const {
    const auto l = barycentric_coordinates(*mesh, t, p);
    const auto& tri = mesh->triangles()[t];
    Point v;
    for (int i = 0; i < 3; ++i) {
      v.x += l[i] * coeff(0, tri[i]);
      v.y += l[i] * coeff(1, tri[i]);
    }
    return v;
  }

  Eigen::Matrix2d gradient(std::size_t t) const {
    const auto g = barycentric_gradients(*mesh, t);
    const auto& tri = mesh->triangles()[t];
    Eigen::Matrix2d out = Eigen::Matrix2d::Zero();
    for (int c = 0; c < 2; ++c) {
      for (int i = 0; i < 3; ++i) {
        out(c, 0) += coeff(c, tri[i]) * g[i].x;
        out(c, 1) += coeff(c, tri[i]) * g[i].y;
      }
    }
    return out;
  }

  double divergence(std::size_t t) const {
    const Eigen::Matrix2d g = gradient(t);
    return g(0, 0) + g(1, 1);
  }
};

/// Oswald averaging: each vertex value is the arithmetic mean of the limits
/// of u_h from all triangles sharing the vertex.
inline ConformingField conforming_lift(const TriMesh& mesh, const VelocityField& u) {
  ConformingField out(mesh);
  std::vector<int> count(mesh.num_vertices(), 0);
  for (std::size_t t = 0; t < mesh.num_triangles(); ++t) {
    const auto& tri = mesh.triangles()[t];
    const auto& faces = mesh.tri_to_faces()[t];
    for (int i = 0; i < 3; ++i) {
      // At vertex i: phi_i = -1, the other two basis functions equal 1.
      for (int c = 0; c < 2; ++c) {
        double v = 0.0;
        for (int j = 0; j < 3; ++j) v += (j == i ? -1.0 : 1.0) * u.coeff(c, faces[j]);
        out.coeff(c, tri[i]) += v;
      }
      ++count[tri[i]];
    }
  }
  for (std::size_t v = 0; v < mesh.num_vertices(); ++v) {
    out.coeff(0, v) /= count[v];
    out.coeff(1, v) /= count[v];
  }
  return out;
}

inline double integrated_divergence(const TriMesh& mesh, const ConformingField& u) {
  double s = 0.0;
  for (std::size_t t = 0; t < mesh.num_triangles(); ++t) s += mesh.area(t) * u.divergence(t);
  return s;
}

/// int_{boundary} u . n ds, exact for piecewise affine fields.
inline double boundary_flux(const TriMesh& mesh, const ConformingField& u) {
  double flux = 0.0;
  for (const Face& face : mesh.faces()) {
    if (!face.is_boundary()) continue;
    const Point a = mesh.vertices()[face.vertex_ids[0]];
    const Point b = mesh.vertices()[face.vertex_ids[1]];
    flux += integrate_segment(a, b, [&](Point p) { return dot(u.value(face.left_tri, p), face.normal); },
                              line_rule_gauss2());
  }
  return flux;
}

/// L2 norm of (conforming - nonconforming) over the domain.
inline double l2_difference(const TriMesh& mesh, const ConformingField& a, const VelocityField& b) {
  double s = 0.0;
  for (std::size_t t = 0; t < mesh.num_triangles(); ++t) {
    s += integrate_triangle(mesh, t, [&](Point p) {
      const Point d = a.value(t, p) - b.value_unchecked(t, p);
      return dot(d, d);
    });
  }
  return std::sqrt(s);
}

inline double h1_norm(const TriMesh& mesh, const ConformingField& d) {
  double s = 0.0;
  for (std::size_t t = 0; t < mesh.num_triangles(); ++t) {
    const Eigen::Matrix2d g = d.gradient(t);
    s += mesh.area(t) * g.squaredNorm();
    s += integrate_triangle(mesh, t, [&](Point p) {
      const Point v = d.value(t, p);
      return dot(v, v);
    }, triangle_rule_degree2());
  }
  return std::sqrt(s);
}

struct ConservativeLift {
  ConformingField corrected;   // I_cf u_h + d_h
  ConformingField correction;  // d_h
  double multiplier = 0.0;     // p-bar
};

/// Adds the H1-minimal conforming perturbation d_h that removes the global
/// divergence of `lifted`:
///   (d, w) + (grad d, grad w) + (pbar, div w) = 0     for all conforming w
///   (div d, qbar)                             = -(div lifted, qbar)
inline ConservativeLift conservative_correction(const TriMesh& mesh, const ConformingField& lifted) {
  const std::size_t nv = mesh.num_vertices();
  const std::size_t size = 2 * nv + 1;
  std::vector<Triplet> triplets;
  for (std::size_t t = 0; t < mesh.num_triangles(); ++t) {
    const auto g = barycentric_gradients(mesh, t);
    const auto& tri = mesh.triangles()[t];
    const double area = mesh.area(t);
    for (int i = 0; i < 3; ++i) {
      for (int j = 0; j < 3; ++j) {
        const double k = area * (dot(g[i], g[j]) + (i == j ? 1.0 / 6.0 : 1.0 / 12.0));
        for (int c = 0; c < 2; ++c) {
          triplets.emplace_back(static_cast<int>(c * nv + tri[i]), static_cast<int>(c * nv + tri[j]), k);
        }
      }
      const double gx = area * g[i].x;
      const double gy = area * g[i].y;
      triplets.emplace_back(static_cast<int>(tri[i]), static_cast<int>(2 * nv), gx);
      triplets.emplace_back(static_cast<int>(2 * nv), static_cast<int>(tri[i]), gx);
      triplets.emplace_back(static_cast<int>(nv + tri[i]), static_cast<int>(2 * nv), gy);
      triplets.emplace_back(static_cast<int>(2 * nv), static_cast<int>(nv + tri[i]), gy);
    }
  }
  SparseMatrix matrix(static_cast<int>(size), static_cast<int>(size));
  matrix.setFromTriplets(triplets.begin(), triplets.end());
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(size));
  rhs[static_cast<Eigen::Index>(2 * nv)] = -integrated_divergence(mesh, lifted);

  ConservativeLift out{ConformingField(mesh), ConformingField(mesh), 0.0};
  if (rhs[static_cast<Eigen::Index>(2 * nv)] != 0.0) {
    const SolveReport report = solve(matrix, rhs, {}, {static_cast<Eigen::Index>(2 * nv)});
    out.correction.coefficients = report.solution.head(static_cast<Eigen::Index>(2 * nv));
    out.multiplier = report.solution[static_cast<Eigen::Index>(2 * nv)];
  }
  out.corrected.coefficients = lifted.coefficients + out.correction.coefficients;
  return out;
}

/// C1 ||e||^0.3 (r1 + r2)^0.7 + 10 h^2.
inline double fitted_model(double global_l2_error, double r1, double r2, double h, double c1 = 1.0) {
  return c1 * std::pow(global_l2_error, 0.3) * std::pow(r1 + r2, 0.7) + 10.0 * h * h;
}

/// Constant C1 minimizing max_k |log(model_k / measured_k)| over a sweep.
inline double fit_model_constant(const std::vector<ErrorReport>& reports) {
  if (reports.empty()) return 1.0;
  auto worst = [&](double log_c1) {
    double m = 0.0;
    for (const auto& r : reports) {
      const double model = fitted_model(r.l2_u_global, r.r1, r.r2, r.h, std::exp(log_c1));
      m = std::max(m, std::abs(std::log(model / r.l2_u_local)));
    }
    return m;
  };
  // The objective is unimodal in log C1; golden-section search.
  double lo = -30.0, hi = 30.0;
  const double phi = 0.5 * (std::sqrt(5.0) - 1.0);
  for (int it = 0; it < 200; ++it) {
    const double a = hi - phi * (hi - lo);
    const double b = lo + phi * (hi - lo);
    if (worst(a) < worst(b)) {
      hi = b;
    } else {
      lo = a;
    }
  }
  return std::exp(0.5 * (lo + hi));
}

inline double observed_order(double coarse_error, double fine_error, double coarse_h, double fine_h) {
  return std::log(coarse_error / fine_error) / std::log(coarse_h / fine_h);
}

/// Least-squares slope of log(value) against log(h).
inline double loglog_slope(const std::vector<double>& h, const std::vector<double>& values) {
  const std::size_t n = h.size();
  double sx = 0.0, sy = 0.0, sxx = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double x = std::log(h[i]);
    const double y = std::log(values[i]);
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
  }
  const double dn = static_cast<double>(n);
  return (dn * sxy - sx * sy) / (dn * sxx - sx * sx);
}

inline ObservedOrders orders_between(const ErrorReport& coarse, const ErrorReport& fine) {
  auto order = [&](double c, double f) { return observed_order(c, f, coarse.h, fine.h); };
  return {order(coarse.l2_u_global, fine.l2_u_global), order(coarse.l2_u_local, fine.l2_u_local),
          order(coarse.l2_p_global, fine.l2_p_global), order(coarse.r1, fine.r1),
          order(coarse.r2, fine.r2),                   order(coarse.broken_h1_u, fine.broken_h1_u)};
}

}  // namespace crstokes
