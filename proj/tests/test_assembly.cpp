#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "crstokes/assembly.hpp"
#include "crstokes/exact.hpp"
#include "crstokes/linsolve.hpp"
#include "crstokes/postprocess.hpp"

using namespace crstokes;

namespace {

ObservationData observation(const TriMesh& mesh, double radius = 0.125, double noise = 0.0, std::uint64_t seed = 1) {
  return {mark_subdomain(mesh, {0.5, 0.5}, radius), polynomial_flow().velocity, noise, seed};
}

double max_abs_entry(const SparseMatrix& m) {
  double out = 0.0;
  for (int k = 0; k < m.outerSize(); ++k) {
    for (SparseMatrix::InnerIterator it(m, k); it; ++it) out = std::max(out, std::abs(it.value()));
  }
  return out;
}

Eigen::VectorXd random_vector(Eigen::Index n, std::mt19937_64& gen) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  Eigen::VectorXd v(n);
  for (Eigen::Index i = 0; i < n; ++i) v[i] = u(gen);
  return v;
}

SparseMatrix block(const SparseMatrix& m, std::size_t r0, std::size_t c0, std::size_t rows, std::size_t cols) {
  return m.block(static_cast<Eigen::Index>(r0), static_cast<Eigen::Index>(c0), static_cast<Eigen::Index>(rows),
                 static_cast<Eigen::Index>(cols));
}

}  // namespace

TEST(AssembleA, ConstantsInKernel) {
  const TriMesh mesh = build_structured(4);
  const DofLayout layout(mesh);
  const VelocityField c = interpolate_rh(mesh, [](Point) { return Point{2.0, -1.0}; });
  EXPECT_LE((assemble_a(mesh, layout) * c.coefficients).lpNorm<Eigen::Infinity>(), 1e-12);
}

TEST(AssembleA, PositiveOnNonconstant) {
  const TriMesh mesh = build_structured(4);
  const DofLayout layout(mesh);
  const SparseMatrix a = assemble_a(mesh, layout);
  std::mt19937_64 gen(5);
  for (int k = 0; k < 20; ++k) {
    const Eigen::VectorXd v = random_vector(a.rows(), gen);
    EXPECT_GT(v.dot(a * v), 0.0);
  }
}

TEST(AssembleA, SwapFieldEnergy) {
  const TriMesh mesh = build_structured(6);
  const DofLayout layout(mesh);
  const VelocityField v = interpolate_rh(mesh, [](Point p) { return Point{p.y, p.x}; });
  EXPECT_NEAR(v.coefficients.dot(assemble_a(mesh, layout) * v.coefficients), 2.0, 1e-12);
}

TEST(AssembleB, DivergenceFreeAffineInKernel) {
  const TriMesh mesh = build_structured(4);
  const DofLayout layout(mesh);
  const VelocityField v = interpolate_rh(mesh, [](Point p) { return Point{p.x + 2.0 * p.y, 3.0 * p.x - p.y}; });
  EXPECT_LE((assemble_b(mesh, layout, TrialSpace::V) * v.coefficients).lpNorm<Eigen::Infinity>(), 1e-13);
}

TEST(AssembleB, UnitPressureAgainstStretch) {
  const TriMesh mesh = build_structured(1);
  const DofLayout layout(mesh);
  const VelocityField v = interpolate_rh(mesh, [](Point p) { return Point{p.x, 0.0}; });
  const Eigen::VectorXd bv = assemble_b(mesh, layout, TrialSpace::V) * v.coefficients;
  EXPECT_NEAR(bv.sum(), -1.0, 1e-14);
}

TEST(AssembleB, ConstantPressureAnnihilatesW) {
  const TriMesh mesh = build_structured(5);
  const DofLayout layout(mesh);
  const SparseMatrix bw = assemble_b(mesh, layout, TrialSpace::W);
  const Eigen::VectorXd ones = Eigen::VectorXd::Ones(bw.rows());
  std::mt19937_64 gen(9);
  for (int k = 0; k < 10; ++k) {
    const Eigen::VectorXd w = random_vector(bw.cols(), gen);
    EXPECT_NEAR(ones.dot(bw * w), 0.0, 1e-12);
  }
}

TEST(AssembleJump, ContinuousFieldHasNoJump) {
  const TriMesh mesh = build_structured(4);
  const DofLayout layout(mesh);
  const VelocityField v = interpolate_rh(mesh, [](Point p) { return Point{1.0 + p.x - p.y, 2.0 * p.y}; });
  for (int t : {-1, 0, 1}) {
    EXPECT_NEAR(v.coefficients.dot(assemble_jump(mesh, layout, t) * v.coefficients), 0.0, 1e-13);
  }
}

TEST(AssembleJump, LinearJumpOnSingleFace) {
  // n = 1: the diagonal is the only interior face. On triangle 0 put +alpha and
  // -alpha on its two boundary faces; the trace on the diagonal is then linear,
  // vanishes at the midpoint and has slope 4 alpha / L, while triangle 1 is zero.
  const TriMesh mesh = build_structured(1);
  const DofLayout layout(mesh);
  std::size_t diag = 0;
  for (std::size_t f = 0; f < mesh.num_faces(); ++f) {
    if (!mesh.faces()[f].is_boundary()) diag = f;
  }
  const double length = mesh.faces()[diag].length;
  const double alpha = length / 4.0;
  VelocityField v(mesh);
  std::vector<std::size_t> others;
  for (std::size_t f : mesh.tri_to_faces()[0]) {
    if (f != diag) others.push_back(f);
  }
  ASSERT_EQ(others.size(), 2u);
  v.coeff(0, others[0]) = alpha;
  v.coeff(0, others[1]) = -alpha;
  const double s = v.coefficients.dot(assemble_jump(mesh, layout, -1) * v.coefficients);
  EXPECT_NEAR(s, std::pow(length, 3) / 12.0 / length, 1e-14);
}

TEST(Stabilizers, PositiveSemidefinite) {
  const TriMesh mesh = build_structured(6);
  const DofLayout layout(mesh);
  const auto mark = mark_subdomain(mesh, {0.5, 0.5}, 0.3);
  std::mt19937_64 gen(17);
  const SparseMatrix blocks[] = {assemble_jump(mesh, layout, -1), assemble_jump(mesh, layout, 0),
                                 assemble_pressure_stab(mesh, layout, 2), assemble_pressure_stab(mesh, layout, 0),
                                 assemble_mass_omega(mesh, layout, mark), assemble_divdiv(mesh, layout, -2)};
  for (const SparseMatrix& m : blocks) {
    for (int k = 0; k < 25; ++k) {
      const Eigen::VectorXd v = random_vector(m.rows(), gen);
      EXPECT_GE(v.dot(m * v), -1e-12);
    }
  }
}

TEST(PressureStab, UnitPressure) {
  const TriMesh mesh = build_structured(5);
  const DofLayout layout(mesh);
  const Eigen::VectorXd one = Eigen::VectorXd::Ones(static_cast<Eigen::Index>(layout.n_press()));
  EXPECT_NEAR(one.dot(assemble_pressure_stab(mesh, layout, 0) * one), 1.0, 1e-13);
}

TEST(PressureStab, UniformMeshIsScaledMass) {
  const TriMesh mesh = build_structured(4);
  const DofLayout layout(mesh);
  const SparseMatrix s = assemble_pressure_stab(mesh, layout, 2);
  const double h = std::sqrt(2.0) / 4.0;
  for (std::size_t t = 0; t < mesh.num_triangles(); ++t) {
    EXPECT_NEAR(s.coeff(static_cast<int>(t), static_cast<int>(t)), h * h * mesh.area(t), 1e-15);
  }
  EXPECT_EQ(s.nonZeros(), static_cast<Eigen::Index>(mesh.num_triangles()));
}

TEST(PressureStab, TraceRatioUnderRefinement) {
  const TriMesh coarse = build_structured(4);
  const TriMesh fine = build_structured(8);
  const SparseMatrix sc = assemble_pressure_stab(coarse, DofLayout(coarse), 2);
  const SparseMatrix sf = assemble_pressure_stab(fine, DofLayout(fine), 2);
  double tc = 0.0, tf = 0.0;
  for (int i = 0; i < sc.rows(); ++i) tc += sc.coeff(i, i);
  for (int i = 0; i < sf.rows(); ++i) tf += sf.coeff(i, i);
  EXPECT_NEAR(tf / tc, 0.25, 1e-13);
}

TEST(MassOmega, UnitFieldOverDomain) {
  const TriMesh mesh = build_structured(4);
  const DofLayout layout(mesh);
  const auto all = mark_subdomain(mesh, {0.5, 0.5}, 2.0);
  VelocityField one(mesh);
  for (std::size_t f = 0; f < mesh.num_faces(); ++f) one.coeff(0, f) = 1.0;
  EXPECT_NEAR(one.coefficients.dot(assemble_mass_omega(mesh, layout, all) * one.coefficients), 1.0, 1e-13);
}

TEST(MassOmega, CrMassIsDiagonal) {
  const TriMesh mesh = build_structured(3);
  const DofLayout layout(mesh);
  const SparseMatrix m = assemble_mass_omega(mesh, layout, mark_subdomain(mesh, {0.5, 0.5}, 2.0));
  for (int k = 0; k < m.outerSize(); ++k) {
    for (SparseMatrix::InnerIterator it(m, k); it; ++it) {
      if (it.row() != it.col()) {
        EXPECT_NEAR(it.value(), 0.0, 1e-16);
      }
    }
  }
}

TEST(DataRhs, NoiseFreeMatchesInterpolatedData) {
  const TriMesh mesh = build_structured(16);
  const DofLayout layout(mesh);
  const ObservationData obs = observation(mesh, 0.3);
  const Eigen::VectorXd direct = assemble_data_rhs(mesh, layout, obs);
  const Eigen::VectorXd via_rh =
      assemble_mass_omega(mesh, layout, obs.mark) * interpolate_rh(mesh, obs.measured).coefficients;
  EXPECT_LE((direct - via_rh).lpNorm<Eigen::Infinity>(), 1e-3);
}

TEST(DataRhs, SeedDeterminism) {
  const TriMesh mesh = build_structured(8);
  const DofLayout layout(mesh);
  const Eigen::VectorXd a = assemble_data_rhs(mesh, layout, observation(mesh, 0.3, 0.01, 42));
  const Eigen::VectorXd b = assemble_data_rhs(mesh, layout, observation(mesh, 0.3, 0.01, 42));
  const Eigen::VectorXd c = assemble_data_rhs(mesh, layout, observation(mesh, 0.3, 0.01, 43));
  EXPECT_EQ(0, std::memcmp(a.data(), b.data(), sizeof(double) * static_cast<std::size_t>(a.size())));
  EXPECT_GT((a - c).norm(), 0.0);
}

TEST(DataRhs, NoiseIsRelativeAndBounded) {
  const TriMesh mesh = build_structured(8);
  const DofLayout layout(mesh);
  const Eigen::VectorXd clean = assemble_data_rhs(mesh, layout, observation(mesh, 0.3));
  const Eigen::VectorXd noisy = assemble_data_rhs(mesh, layout, observation(mesh, 0.3, 0.01, 7));
  EXPECT_GT((noisy - clean).norm(), 0.0);
  EXPECT_LE((noisy - clean).norm(), 0.02 * clean.norm());
}

TEST(AssembleGlobal, DimensionOnTwoByTwo) {
  const TriMesh mesh = build_structured(2);
  const DofLayout layout(mesh);
  const AssembledSystem sys = assemble_global(mesh, layout, StabParams{}, observation(mesh));
  EXPECT_EQ(sys.matrix.rows(), 65);
  EXPECT_EQ(sys.matrix.cols(), 65);
  EXPECT_EQ(sys.rhs.size(), 65);
}

TEST(AssembleGlobal, ExactlySymmetric) {
  const TriMesh mesh = build_structured(6);
  const DofLayout layout(mesh);
  for (const StabParams& params : {StabParams{}, StabParams{1e-3, 0.5, 2.0, 100.0}}) {
    const AssembledSystem sys = assemble_global(mesh, layout, params, observation(mesh, 0.3));
    const SparseMatrix diff = sys.matrix - SparseMatrix(sys.matrix.transpose());
    EXPECT_EQ(max_abs_entry(diff), 0.0);
  }
}

TEST(AssembleGlobal, ZeroPressureBlocksWithoutPenalties) {
  const TriMesh mesh = build_structured(4);
  const DofLayout layout(mesh);
  const AssembledSystem sys = assemble_global(mesh, layout, StabParams{}, observation(mesh));
  const std::size_t np = layout.n_press();
  EXPECT_EQ(max_abs_entry(block(sys.matrix, layout.offset_p(), layout.offset_p(), np, np)), 0.0);
  EXPECT_EQ(max_abs_entry(block(sys.matrix, layout.offset_x(), layout.offset_x(), np, np)), 0.0);
}

TEST(AssembleGlobal, RhsVanishesOutsideVelocityBlock) {
  const TriMesh mesh = build_structured(4);
  const DofLayout layout(mesh);
  const AssembledSystem sys = assemble_global(mesh, layout, StabParams{}, observation(mesh, 0.3));
  const auto nu = static_cast<Eigen::Index>(2 * layout.n_vel());
  EXPECT_EQ(sys.rhs.tail(sys.rhs.size() - nu).lpNorm<Eigen::Infinity>(), 0.0);
  EXPECT_GT(sys.rhs.head(nu).norm(), 0.0);
}

TEST(AssembleGlobal, RejectsInvalidWeights) {
  const TriMesh mesh = build_structured(2);
  const DofLayout layout(mesh);
  EXPECT_THROW(assemble_global(mesh, layout, StabParams{0.0, 0.0, 0.0, 800.0}, observation(mesh)),
               std::invalid_argument);
  EXPECT_THROW(assemble_global(mesh, layout, StabParams{1e-5, 0.0, 0.0, 0.0}, observation(mesh)),
               std::invalid_argument);
  EXPECT_THROW(assemble_global(mesh, layout, StabParams{1e-5, -1.0, 0.0, 800.0}, observation(mesh)),
               std::invalid_argument);
}

TEST(AssembleGlobal, EmptyMarkIsFlagged) {
  const TriMesh mesh = build_structured(2);
  const DofLayout layout(mesh);
  const AssembledSystem sys = assemble_global(mesh, layout, StabParams{}, observation(mesh, 0.0));
  EXPECT_FALSE(sys.warnings.empty());
}

TEST(AssembleGlobal, BitwiseReproducible) {
  const TriMesh mesh = build_structured(5);
  const DofLayout layout(mesh);
  const AssembledSystem a = assemble_global(mesh, layout, StabParams{}, observation(mesh, 0.3, 0.01, 3));
  const AssembledSystem b = assemble_global(mesh, layout, StabParams{}, observation(mesh, 0.3, 0.01, 3));
  ASSERT_EQ(a.matrix.nonZeros(), b.matrix.nonZeros());
  EXPECT_EQ(0, std::memcmp(a.matrix.valuePtr(), b.matrix.valuePtr(), sizeof(double) * a.matrix.nonZeros()));
  EXPECT_EQ(0, std::memcmp(a.rhs.data(), b.rhs.data(), sizeof(double) * static_cast<std::size_t>(a.rhs.size())));
}

TEST(SolvedSystem, ElementwiseMassConservation) {
  const TriMesh mesh = build_structured(8);
  const DofLayout layout(mesh);
  const AssembledSystem sys = assemble_global(mesh, layout, StabParams{}, observation(mesh));
  const SolutionFields f = split_solution(mesh, sys, solve(sys).solution);
  EXPECT_LE(divergence_check(mesh, f.u), 1e-9 * (1.0 + f.u.coefficients.lpNorm<Eigen::Infinity>()));
  EXPECT_LE(divergence_check(mesh, f.z), 1e-9 * (1.0 + f.z.coefficients.lpNorm<Eigen::Infinity>()));
}

TEST(SolvedSystem, StabilityIdentity) {
  const TriMesh mesh = build_structured(8);
  const DofLayout layout(mesh);
  for (const StabParams& params : {StabParams{}, StabParams{1e-3, 0.5, 2.0, 100.0}}) {
    const ObservationData obs = observation(mesh, 0.3);
    const AssembledSystem sys = assemble_global(mesh, layout, params, obs);
    const Eigen::VectorXd s = solve(sys).solution;
    Eigen::VectorXd t = s;
    t.segment(static_cast<Eigen::Index>(layout.offset_z()),
              static_cast<Eigen::Index>(layout.total() - 1 - layout.offset_z())) *= -1.0;
    const SolutionFields f = split_solution(mesh, sys, s);
    const double jump = f.u.coefficients.dot(assemble_jump(mesh, layout, -1) * f.u.coefficients);
    const double mass = f.u.coefficients.dot(assemble_mass_omega(mesh, layout, obs.mark) * f.u.coefficients);
    const double sp = f.p.coefficients.dot(assemble_pressure_stab(mesh, layout, 2) * f.p.coefficients);
    const double sx = f.x.coefficients.dot(assemble_pressure_stab(mesh, layout, 0) * f.x.coefficients);
    const double lhs = params.gamma_u * jump + params.gamma_M * mass + params.gamma_p * sp + params.gamma_x * sx;
    EXPECT_NEAR(lhs, sys.rhs.dot(t), 1e-9 * std::abs(lhs));
  }
}

TEST(AssembleEliminated, RejectsMissingPenalties) {
  const TriMesh mesh = build_structured(2);
  const DofLayout layout(mesh);
  EXPECT_THROW(assemble_eliminated(mesh, layout, StabParams{1e-5, 0.0, 1.0, 800.0}, observation(mesh)),
               std::invalid_argument);
  EXPECT_THROW(assemble_eliminated(mesh, layout, StabParams{1e-5, 1.0, 0.0, 800.0}, observation(mesh)),
               std::invalid_argument);
}

TEST(AssembleEliminated, AgreesWithFourField) {
  const TriMesh mesh = build_structured(8);
  const DofLayout layout(mesh);
  const StabParams params{1e-5, 1.0, 1.0, 800.0};
  const ObservationData obs = observation(mesh);
  const AssembledSystem full = assemble_global(mesh, layout, params, obs);
  const AssembledSystem elim = assemble_eliminated(mesh, layout, params, obs);
  EXPECT_EQ(max_abs_entry(elim.matrix - SparseMatrix(elim.matrix.transpose())), 0.0);
  const SolutionFields a = split_solution(mesh, full, solve(full).solution);
  const SolutionFields b = split_solution(mesh, elim, solve(elim).solution);
  EXPECT_LE((a.u.coefficients - b.u.coefficients).norm(), 1e-8 * a.u.coefficients.norm());
  EXPECT_LE((a.z.coefficients - b.z.coefficients).norm(), 1e-8 * a.z.coefficients.norm());
  auto centered = [&](const PressureField& p) {
    double mean = 0.0;
    for (std::size_t t = 0; t < mesh.num_triangles(); ++t) mean += mesh.area(t) * p.coefficients[t];
    return Eigen::VectorXd(p.coefficients.array() - mean);
  };
  const Eigen::VectorXd pa = centered(a.p), pb = centered(b.p);
  EXPECT_LE((pa - pb).norm(), 1e-8 * pa.norm());
  EXPECT_LE((a.x.coefficients - b.x.coefficients).norm(), 1e-8 * a.x.coefficients.norm());
}

TEST(AssembleEliminated, DivergenceVanishesAsDualPenaltyShrinks) {
  // The dual-pressure weight enters as gamma_x^-1 (div u, div v): shrinking it
  // tightens the divergence constraint, and gamma_x = 0 enforces it exactly.
  const TriMesh mesh = build_structured(8);
  const DofLayout layout(mesh);
  const ObservationData obs = observation(mesh);
  double previous = std::numeric_limits<double>::infinity();
  for (double gx : {100.0, 10.0, 1.0, 0.1, 0.01, 0.001}) {
    const StabParams params{1e-5, 1.0, gx, 800.0};
    const AssembledSystem sys = assemble_eliminated(mesh, layout, params, obs);
    const SolutionFields f = split_solution(mesh, sys, solve(sys).solution);
    const double div = divergence_check(mesh, f.u);
    EXPECT_LT(div, previous) << "gamma_x=" << gx;
    previous = div;
  }
  const AssembledSystem exact = assemble_global(mesh, layout, StabParams{1e-5, 1.0, 0.0, 800.0}, obs);
  const SolutionFields f = split_solution(mesh, exact, solve(exact).solution);
  EXPECT_LE(divergence_check(mesh, f.u), 1e-9 * (1.0 + f.u.coefficients.lpNorm<Eigen::Infinity>()));
  EXPECT_LT(divergence_check(mesh, f.u), previous);
}
