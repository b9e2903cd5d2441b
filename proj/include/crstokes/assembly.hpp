#pragma once

#include <Eigen/Sparse>

#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "crstokes/mesh.hpp"
#include "crstokes/quadrature.hpp"
#include "crstokes/spaces.hpp"

namespace crstokes {

using SparseMatrix = Eigen::SparseMatrix<double>;
using Triplet = Eigen::Triplet<double>;

/// Stabilization and data-fidelity weights.
struct StabParams {
  double gamma_u = 1e-5;  // velocity jump penalty, > 0
  double gamma_p = 0.0;   // primal pressure penalty, >= 0
  double gamma_x = 0.0;   // dual pressure penalty, >= 0
  double gamma_M = 800.0; // data fidelity, > 0

  void validate() const {
    if (!(gamma_u > 0.0)) throw std::invalid_argument("gamma_u must be positive");
    if (!(gamma_M > 0.0)) throw std::invalid_argument("gamma_M must be positive");
    if (!(gamma_p >= 0.0)) throw std::invalid_argument("gamma_p must be non-negative");
    if (!(gamma_x >= 0.0)) throw std::invalid_argument("gamma_x must be non-negative");
  }
};

/// Measurements on the marked region omega_h.
///
/// With noise_level > 0 each component of the measurement at each quadrature
/// node is multiplied by (1 + noise_level * eta), eta uniform on [-1, 1],
/// drawn from a 64-bit Mersenne Twister seeded with `seed`. Nodes are visited
/// in element order, then quadrature order, then component order.
struct ObservationData {
  SubdomainMark mark;
  VectorFunction measured;
  double noise_level = 0.0;
  std::uint64_t seed = 0;
};

enum class TrialSpace { V, W };
enum class Formulation { four_field, eliminated };

struct AssembledSystem {
  SparseMatrix matrix;
  Eigen::VectorXd rhs;
  DofLayout layout;
  StabParams params;
  Formulation formulation = Formulation::four_field;
  std::vector<std::string> warnings;
  /// Unknowns kept out of the sparse factorization and recovered through a
  /// dense Schur complement: the multiplier row and one pressure dof.
  std::vector<Eigen::Index> border;
  /// Set when the system is known to be singular before any factorization.
  std::string singular_reason;
};

namespace detail {

/// Builds a symmetric matrix from its upper triangle. Entries below the
/// diagonal are dropped on insertion and mirrored at the end, so the result is
/// symmetric entry for entry.
class SymmetricBuilder {
 public:
  explicit SymmetricBuilder(std::size_t size) : size_(size) {}

  void add(std::size_t row, std::size_t col, double value) {
    if (row <= col) triplets_.emplace_back(static_cast<int>(row), static_cast<int>(col), value);
  }

  /// Adds `scale * block` with its (0, 0) entry at (row_offset, col_offset).
  void add_block(std::size_t row_offset, std::size_t col_offset, const SparseMatrix& block, double scale = 1.0) {
    for (int k = 0; k < block.outerSize(); ++k) {
      for (SparseMatrix::InnerIterator it(block, k); it; ++it) {
        add(row_offset + it.row(), col_offset + it.col(), scale * it.value());
      }
    }
  }

  SparseMatrix build() const {
    SparseMatrix upper(static_cast<int>(size_), static_cast<int>(size_));
    upper.setFromTriplets(triplets_.begin(), triplets_.end());
    SparseMatrix strict = upper.triangularView<Eigen::StrictlyUpper>();
    SparseMatrix full = upper + SparseMatrix(strict.transpose());
    full.makeCompressed();
    return full;
  }

 private:
  std::size_t size_;
  std::vector<Triplet> triplets_;
};

inline SparseMatrix from_triplets(std::size_t rows, std::size_t cols, const std::vector<Triplet>& triplets) {
  SparseMatrix m(static_cast<int>(rows), static_cast<int>(cols));
  m.setFromTriplets(triplets.begin(), triplets.end());
  return m;
}

/// Uniform draw on [-1, 1] from the top 53 bits of one generator output.
inline double symmetric_unit(std::mt19937_64& gen) {
  const double u = static_cast<double>(gen() >> 11) * 0x1.0p-53;
  return 2.0 * u - 1.0;
}

}  // namespace detail

/// a_h(u, w) = sum_kappa int grad u : grad w over the full velocity space V_h.
inline SparseMatrix assemble_a(const TriMesh& mesh, const DofLayout& layout) {
  std::vector<Triplet> triplets;
  triplets.reserve(18 * mesh.num_triangles());
  const std::size_t nv = layout.n_vel();
  for (std::size_t t = 0; t < mesh.num_triangles(); ++t) {
    const auto grads = cr_gradients(mesh, t);
    const double area = mesh.area(t);
    const auto& faces = mesh.tri_to_faces()[t];
    for (int i = 0; i < 3; ++i) {
      for (int j = 0; j < 3; ++j) {
        const double k = area * dot(grads[i], grads[j]);
        for (int c = 0; c < 2; ++c) {
          triplets.emplace_back(static_cast<int>(c * nv + faces[i]), static_cast<int>(c * nv + faces[j]), k);
        }
      }
    }
  }
  return detail::from_triplets(2 * nv, 2 * nv, triplets);
}

/// Selection matrix V_h <- W_h: column k is the unit vector of the k-th
/// interior velocity dof.
inline SparseMatrix w_embedding(const DofLayout& layout) {
  std::vector<Triplet> triplets;
  for (int c = 0; c < 2; ++c) {
    for (std::size_t k = 0; k < layout.n_vel0(); ++k) {
      triplets.emplace_back(static_cast<int>(c * layout.n_vel() + layout.interior_faces()[k]),
                            static_cast<int>(c * layout.n_vel0() + k), 1.0);
    }
  }
  return detail::from_triplets(2 * layout.n_vel(), 2 * layout.n_vel0(), triplets);
}

/// b_h(q, w) = -sum_kappa int q div w. Rows: pressure dofs; columns: the
/// chosen velocity space.
inline SparseMatrix assemble_b(const TriMesh& mesh, const DofLayout& layout, TrialSpace trial) {
  std::vector<Triplet> triplets;
  const bool restricted = trial == TrialSpace::W;
  const std::size_t ncols = restricted ? 2 * layout.n_vel0() : 2 * layout.n_vel();
  for (std::size_t t = 0; t < mesh.num_triangles(); ++t) {
    const auto grads = cr_gradients(mesh, t);
    const double area = mesh.area(t);
    const auto& faces = mesh.tri_to_faces()[t];
    for (int i = 0; i < 3; ++i) {
      const double d[2] = {grads[i].x, grads[i].y};
      for (int c = 0; c < 2; ++c) {
        std::size_t col = 0;
        if (restricted) {
          const std::size_t k = layout.interior_index(faces[i]);
          if (k == DofLayout::npos) continue;
          col = c * layout.n_vel0() + k;
        } else {
          col = c * layout.n_vel() + faces[i];
        }
        triplets.emplace_back(static_cast<int>(t), static_cast<int>(col), -area * d[c]);
      }
    }
  }
  return detail::from_triplets(layout.n_press(), ncols, triplets);
}

/// s_{j,t}(u, v) = sum over interior faces of int_F h_F^t [u][v].
inline SparseMatrix assemble_jump(const TriMesh& mesh, const DofLayout& layout, int t_exp) {
  std::vector<Triplet> triplets;
  const std::size_t nv = layout.n_vel();
  const LineRule& rule = line_rule_gauss2();
  for (std::size_t f = 0; f < mesh.num_faces(); ++f) {
    const Face& face = mesh.faces()[f];
    if (face.is_boundary()) continue;
    const Point a = mesh.vertices()[face.vertex_ids[0]];
    const Point b = mesh.vertices()[face.vertex_ids[1]];
    const double scale = std::pow(face.length, t_exp) * face.length;
    const std::size_t sides[2] = {face.left_tri, *face.right_tri};
    std::array<std::size_t, 6> dofs{};
    for (int s = 0; s < 2; ++s) {
      for (int i = 0; i < 3; ++i) dofs[3 * s + i] = mesh.tri_to_faces()[sides[s]][i];
    }
    double local[6][6] = {};
    for (std::size_t q = 0; q < rule.points.size(); ++q) {
      const Point xq = a + rule.points[q] * (b - a);
      double psi[6];
      for (int s = 0; s < 2; ++s) {
        const auto basis = cr_basis_unchecked(mesh, sides[s], xq);
        const double sign = s == 0 ? 1.0 : -1.0;
        for (int i = 0; i < 3; ++i) psi[3 * s + i] = sign * basis.values[i];
      }
      for (int i = 0; i < 6; ++i) {
        for (int j = 0; j < 6; ++j) local[i][j] += rule.weights[q] * scale * psi[i] * psi[j];
      }
    }
    for (int c = 0; c < 2; ++c) {
      for (int i = 0; i < 6; ++i) {
        for (int j = 0; j < 6; ++j) {
          triplets.emplace_back(static_cast<int>(c * nv + dofs[i]), static_cast<int>(c * nv + dofs[j]), local[i][j]);
        }
      }
    }
  }
  return detail::from_triplets(2 * nv, 2 * nv, triplets);
}

/// s_{p,t}(p, q) = int h^t p q with h the element diameter: diagonal.
inline SparseMatrix assemble_pressure_stab(const TriMesh& mesh, const DofLayout& layout, int t_exp) {
  std::vector<Triplet> triplets;
  triplets.reserve(mesh.num_triangles());
  for (std::size_t t = 0; t < mesh.num_triangles(); ++t) {
    triplets.emplace_back(static_cast<int>(t), static_cast<int>(t), std::pow(mesh.diameter(t), t_exp) * mesh.area(t));
  }
  return detail::from_triplets(layout.n_press(), layout.n_press(), triplets);
}

/// (u, v)_{omega_h} on V_h x V_h, without the gamma_M weight.
inline SparseMatrix assemble_mass_omega(const TriMesh& mesh, const DofLayout& layout, const SubdomainMark& mark) {
  std::vector<Triplet> triplets;
  const std::size_t nv = layout.n_vel();
  const QuadRule& rule = triangle_rule_degree2();
  for (std::size_t t : mark.element_ids) {
    const auto c = mesh.corners(t);
    const auto& faces = mesh.tri_to_faces()[t];
    double local[3][3] = {};
    for (std::size_t q = 0; q < rule.points.size(); ++q) {
      const auto basis = cr_basis_unchecked(mesh, t, map_barycentric(c, rule.points[q]));
      for (int i = 0; i < 3; ++i) {
        for (int j = 0; j < 3; ++j) local[i][j] += rule.weights[q] * basis.values[i] * basis.values[j];
      }
    }
    const double area = mesh.area(t);
    for (int comp = 0; comp < 2; ++comp) {
      for (int i = 0; i < 3; ++i) {
        for (int j = 0; j < 3; ++j) {
          triplets.emplace_back(static_cast<int>(comp * nv + faces[i]), static_cast<int>(comp * nv + faces[j]),
                                area * local[i][j]);
        }
      }
    }
  }
  return detail::from_triplets(2 * nv, 2 * nv, triplets);
}

/// (u~_M, v)_{omega_h} for every velocity basis function v, without gamma_M.
inline Eigen::VectorXd assemble_data_rhs(const TriMesh& mesh, const DofLayout& layout, const ObservationData& obs) {
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(2 * static_cast<Eigen::Index>(layout.n_vel()));
  const std::size_t nv = layout.n_vel();
  const QuadRule& rule = triangle_rule_degree6();
  std::mt19937_64 gen(obs.seed);
  for (std::size_t t : obs.mark.element_ids) {
    const auto c = mesh.corners(t);
    const auto& faces = mesh.tri_to_faces()[t];
    const double area = mesh.area(t);
    for (std::size_t q = 0; q < rule.points.size(); ++q) {
      const Point xq = map_barycentric(c, rule.points[q]);
      Point data = obs.measured(xq);
      if (obs.noise_level > 0.0) {
        data.x *= 1.0 + obs.noise_level * detail::symmetric_unit(gen);
        data.y *= 1.0 + obs.noise_level * detail::symmetric_unit(gen);
      }
      const auto basis = cr_basis_unchecked(mesh, t, xq);
      for (int i = 0; i < 3; ++i) {
        const double w = area * rule.weights[q] * basis.values[i];
        rhs[static_cast<Eigen::Index>(faces[i])] += w * data.x;
        rhs[static_cast<Eigen::Index>(nv + faces[i])] += w * data.y;
      }
    }
  }
  return rhs;
}

/// (f, w) for every velocity basis function w of V_h.
inline Eigen::VectorXd assemble_load(const TriMesh& mesh, const DofLayout& layout, const VectorFunction& forcing) {
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(2 * static_cast<Eigen::Index>(layout.n_vel()));
  const std::size_t nv = layout.n_vel();
  const QuadRule& rule = triangle_rule_degree6();
  for (std::size_t t = 0; t < mesh.num_triangles(); ++t) {
    const auto c = mesh.corners(t);
    const auto& faces = mesh.tri_to_faces()[t];
    const double area = mesh.area(t);
    for (std::size_t q = 0; q < rule.points.size(); ++q) {
      const Point xq = map_barycentric(c, rule.points[q]);
      const Point f = forcing(xq);
      const auto basis = cr_basis_unchecked(mesh, t, xq);
      for (int i = 0; i < 3; ++i) {
        const double w = area * rule.weights[q] * basis.values[i];
        rhs[static_cast<Eigen::Index>(faces[i])] += w * f.x;
        rhs[static_cast<Eigen::Index>(nv + faces[i])] += w * f.y;
      }
    }
  }
  return rhs;
}

/// sum_kappa weight_kappa |kappa| div u div v on V_h x V_h, with
/// weight_kappa = h_kappa^t_exp.
inline SparseMatrix assemble_divdiv(const TriMesh& mesh, const DofLayout& layout, int t_exp) {
  std::vector<Triplet> triplets;
  const std::size_t nv = layout.n_vel();
  for (std::size_t t = 0; t < mesh.num_triangles(); ++t) {
    const auto grads = cr_gradients(mesh, t);
    const double w = std::pow(mesh.diameter(t), t_exp) * mesh.area(t);
    const auto& faces = mesh.tri_to_faces()[t];
    std::size_t dofs[6];
    double div[6];
    for (int i = 0; i < 3; ++i) {
      dofs[i] = faces[i];
      div[i] = grads[i].x;
      dofs[3 + i] = nv + faces[i];
      div[3 + i] = grads[i].y;
    }
    for (int i = 0; i < 6; ++i) {
      for (int j = 0; j < 6; ++j) {
        triplets.emplace_back(static_cast<int>(dofs[i]), static_cast<int>(dofs[j]), w * div[i] * div[j]);
      }
    }
  }
  return detail::from_triplets(2 * nv, 2 * nv, triplets);
}

namespace detail {

inline void check_observation(const ObservationData& obs, AssembledSystem& system) {
  if (obs.mark.empty()) {
    system.warnings.push_back("observation region omega_h is empty: the reconstruction is not unique");
    system.singular_reason = "empty observation region omega_h: constant velocities span a kernel of the data block";
  }
  if (!(obs.noise_level >= 0.0)) throw std::invalid_argument("noise_level must be non-negative");
}

}  // namespace detail

/// Four-field primal-dual system in the layout [u | p | z | x | lambda]:
///   v-row: (gamma_u S_j,-1 + gamma_M M) u + A z - B_V^T x = gamma_M d
///   q-row: gamma_p S_p,2 p + B_W z + c lambda          = 0
///   w-row: A^T u + B_W^T p                             = l
///   y-row: -B_V u - gamma_x S_p,0 x                    = 0
///   lambda-row: c^T p                                  = 0
/// with c the vector of element areas.
inline AssembledSystem assemble_global(const TriMesh& mesh, const DofLayout& layout, const StabParams& params,
                                       const ObservationData& obs, const VectorFunction& forcing = {}) {
  params.validate();
  AssembledSystem system{SparseMatrix(), Eigen::VectorXd(), layout, params, Formulation::four_field, {}, {}, {}};
  detail::check_observation(obs, system);

  const SparseMatrix a = assemble_a(mesh, layout);
  const SparseMatrix a_vw = a * w_embedding(layout);
  const SparseMatrix b_v = assemble_b(mesh, layout, TrialSpace::V);
  const SparseMatrix b_w = assemble_b(mesh, layout, TrialSpace::W);
  const SparseMatrix jump = assemble_jump(mesh, layout, -1);
  const SparseMatrix mass = assemble_mass_omega(mesh, layout, obs.mark);

  detail::SymmetricBuilder builder(layout.total());
  builder.add_block(layout.offset_u(), layout.offset_u(), jump, params.gamma_u);
  builder.add_block(layout.offset_u(), layout.offset_u(), mass, params.gamma_M);
  builder.add_block(layout.offset_u(), layout.offset_z(), a_vw);
  builder.add_block(layout.offset_u(), layout.offset_x(), SparseMatrix(b_v.transpose()), -1.0);
  if (params.gamma_p > 0.0) {
    builder.add_block(layout.offset_p(), layout.offset_p(), assemble_pressure_stab(mesh, layout, 2), params.gamma_p);
  }
  builder.add_block(layout.offset_p(), layout.offset_z(), b_w);
  for (std::size_t t = 0; t < mesh.num_triangles(); ++t) builder.add(layout.p_dof(t), layout.lambda_dof(), mesh.area(t));
  if (params.gamma_x > 0.0) {
    builder.add_block(layout.offset_x(), layout.offset_x(), assemble_pressure_stab(mesh, layout, 0), -params.gamma_x);
  }
  system.matrix = builder.build();

  system.rhs = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(layout.total()));
  system.rhs.head(2 * static_cast<Eigen::Index>(layout.n_vel())) = params.gamma_M * assemble_data_rhs(mesh, layout, obs);
  if (forcing) {
    const Eigen::VectorXd load = w_embedding(layout).transpose() * assemble_load(mesh, layout, forcing);
    system.rhs.segment(static_cast<Eigen::Index>(layout.offset_z()), load.size()) = load;
  }
  system.border = {static_cast<Eigen::Index>(layout.p_dof(0)), static_cast<Eigen::Index>(layout.lambda_dof())};
  return system;
}

/// Two-field system in (u, z) obtained by eliminating both pressures; valid
/// for gamma_p > 0 and gamma_x > 0. Layout [u | z] with the same block sizes
/// as the four-field system:
///   v-row: (gamma_u S_j,-1 + gamma_M M + gamma_x^-1 (div, div)_h) u + A z = gamma_M d
///   w-row: A^T u - gamma_p^-1 (h^-2 div, div)_h z                       = l
/// Matches the four-field solution exactly when all elements share one
/// diameter, as on build_structured meshes.
inline AssembledSystem assemble_eliminated(const TriMesh& mesh, const DofLayout& layout, const StabParams& params,
                                           const ObservationData& obs, const VectorFunction& forcing = {}) {
  params.validate();
  if (!(params.gamma_p > 0.0) || !(params.gamma_x > 0.0)) {
    throw std::invalid_argument("pressure elimination requires gamma_p > 0 and gamma_x > 0");
  }
  AssembledSystem system{SparseMatrix(), Eigen::VectorXd(), layout, params, Formulation::eliminated, {}, {}, {}};
  detail::check_observation(obs, system);

  const std::size_t nu = 2 * layout.n_vel();
  const std::size_t nz = 2 * layout.n_vel0();
  const SparseMatrix embed = w_embedding(layout);
  const SparseMatrix a_vw = assemble_a(mesh, layout) * embed;
  const SparseMatrix divdiv_w = SparseMatrix(embed.transpose()) * assemble_divdiv(mesh, layout, -2) * embed;

  detail::SymmetricBuilder builder(nu + nz);
  builder.add_block(0, 0, assemble_jump(mesh, layout, -1), params.gamma_u);
  builder.add_block(0, 0, assemble_mass_omega(mesh, layout, obs.mark), params.gamma_M);
  builder.add_block(0, 0, assemble_divdiv(mesh, layout, 0), 1.0 / params.gamma_x);
  builder.add_block(0, nu, a_vw);
  builder.add_block(nu, nu, divdiv_w, -1.0 / params.gamma_p);
  system.matrix = builder.build();

  system.rhs = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(nu + nz));
  system.rhs.head(static_cast<Eigen::Index>(nu)) = params.gamma_M * assemble_data_rhs(mesh, layout, obs);
  if (forcing) {
    system.rhs.tail(static_cast<Eigen::Index>(nz)) = embed.transpose() * assemble_load(mesh, layout, forcing);
  }
  return system;
}

/// Fields carried by a solution vector of either formulation.
struct SolutionFields {
  VelocityField u;
  PressureField p;
  VelocityField z;  // zero boundary averages
  PressureField x;
  double lambda = 0.0;
};

/// Splits a solution vector into fields. For the eliminated formulation the
/// pressures are recovered elementwise as p = gamma_p^-1 h^-2 div z and
/// x = gamma_x^-1 div u.
inline SolutionFields split_solution(const TriMesh& mesh, const AssembledSystem& system, const Eigen::VectorXd& sol) {
  const DofLayout& layout = system.layout;
  SolutionFields out{VelocityField(mesh), PressureField(mesh), VelocityField(mesh), PressureField(mesh), 0.0};
  const auto nu = static_cast<Eigen::Index>(2 * layout.n_vel());
  const auto nz = static_cast<Eigen::Index>(2 * layout.n_vel0());
  const auto np = static_cast<Eigen::Index>(layout.n_press());
  const Eigen::Index z_offset =
      system.formulation == Formulation::four_field ? static_cast<Eigen::Index>(layout.offset_z()) : nu;
  out.u.coefficients = sol.segment(0, nu);
  out.z.coefficients = w_embedding(layout) * sol.segment(z_offset, nz);
  if (system.formulation == Formulation::four_field) {
    out.p.coefficients = sol.segment(static_cast<Eigen::Index>(layout.offset_p()), np);
    out.x.coefficients = sol.segment(static_cast<Eigen::Index>(layout.offset_x()), np);
    out.lambda = sol[static_cast<Eigen::Index>(layout.lambda_dof())];
  } else {
    for (std::size_t t = 0; t < mesh.num_triangles(); ++t) {
      const double h = mesh.diameter(t);
      out.p.coefficients[static_cast<Eigen::Index>(t)] = out.z.divergence(t) / (system.params.gamma_p * h * h);
      out.x.coefficients[static_cast<Eigen::Index>(t)] = out.u.divergence(t) / system.params.gamma_x;
    }
  }
  return out;
}

}  // namespace crstokes
