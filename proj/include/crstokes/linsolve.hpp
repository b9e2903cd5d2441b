#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <Eigen/SparseLU>

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include "crstokes/assembly.hpp"

namespace crstokes {

struct FactorStats {
  long long fill_in = 0;  // nonzeros of L + U beyond those of the input matrix
  long long pivot_perturbations = 0;
  int refinement_steps = 0;
};

struct SolveReport {
  Eigen::VectorXd solution;
  /// ||A x - b|| / ||b||, or ||A x|| when b = 0; recomputed after the solve.
  double relative_residual = 0.0;
  FactorStats factor_stats;
};

class SolveError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct SolveOptions {
  int max_refinement_steps = 10;
  /// Refinement stops once a correction is below this fraction of the solution.
  double correction_tolerance = 1e-15;
};

inline double relative_residual(const SparseMatrix& matrix, const Eigen::VectorXd& x, const Eigen::VectorXd& b) {
  const double r = (matrix * x - b).norm();
  const double nb = b.norm();
  return nb > 0.0 ? r / nb : r;
}

namespace detail {

/// b - A x accumulated in extended precision, rounded to double at the end.
inline Eigen::VectorXd extended_residual(const SparseMatrix& a, const Eigen::VectorXd& x, const Eigen::VectorXd& b) {
  std::vector<long double> r(static_cast<std::size_t>(b.size()));
  for (Eigen::Index i = 0; i < b.size(); ++i) r[static_cast<std::size_t>(i)] = b[i];
  for (Eigen::Index col = 0; col < a.outerSize(); ++col) {
    const long double xc = x[col];
    for (SparseMatrix::InnerIterator it(a, col); it; ++it) {
      r[static_cast<std::size_t>(it.row())] -= static_cast<long double>(it.value()) * xc;
    }
  }
  Eigen::VectorXd out(b.size());
  for (Eigen::Index i = 0; i < b.size(); ++i) out[i] = static_cast<double>(r[static_cast<std::size_t>(i)]);
  return out;
}

}  // namespace detail

/// Sparse LU (partial pivoting, COLAMD) of the matrix with the border rows
/// and columns removed; the border is recovered from a dense Schur complement.
class BorderedLU {
 public:
  BorderedLU(const SparseMatrix& matrix, std::vector<Eigen::Index> border) : border_(std::move(border)) {
    const Eigen::Index n = matrix.rows();
    std::sort(border_.begin(), border_.end());
    border_.erase(std::unique(border_.begin(), border_.end()), border_.end());
    for (Eigen::Index b : border_) {
      if (b < 0 || b >= n) throw SolveError("solve: border index out of range");
    }

    position_.assign(static_cast<std::size_t>(n), -1);
    std::vector<bool> in_border(static_cast<std::size_t>(n), false);
    for (std::size_t k = 0; k < border_.size(); ++k) {
      in_border[static_cast<std::size_t>(border_[k])] = true;
      position_[static_cast<std::size_t>(border_[k])] = static_cast<Eigen::Index>(k);
    }
    for (Eigen::Index i = 0; i < n; ++i) {
      if (!in_border[static_cast<std::size_t>(i)]) {
        position_[static_cast<std::size_t>(i)] = static_cast<Eigen::Index>(interior_.size());
        interior_.push_back(i);
      }
    }

    const Eigen::Index ni = static_cast<Eigen::Index>(interior_.size());
    const Eigen::Index nb = static_cast<Eigen::Index>(border_.size());
    std::vector<Eigen::Triplet<double>> triplets;
    triplets.reserve(static_cast<std::size_t>(matrix.nonZeros()));
    Eigen::MatrixXd k_ib = Eigen::MatrixXd::Zero(ni, nb);
    k_bi_ = Eigen::MatrixXd::Zero(nb, ni);
    Eigen::MatrixXd k_bb = Eigen::MatrixXd::Zero(nb, nb);
    for (Eigen::Index col = 0; col < matrix.outerSize(); ++col) {
      for (SparseMatrix::InnerIterator it(matrix, col); it; ++it) {
        const auto r = static_cast<std::size_t>(it.row());
        const auto c = static_cast<std::size_t>(it.col());
        const Eigen::Index pr = position_[r];
        const Eigen::Index pc = position_[c];
        if (!in_border[r] && !in_border[c]) {
          triplets.emplace_back(pr, pc, it.value());
        } else if (!in_border[r]) {
          k_ib(pr, pc) += it.value();
        } else if (!in_border[c]) {
          k_bi_(pr, pc) += it.value();
        } else {
          k_bb(pr, pc) += it.value();
        }
      }
    }
    SparseMatrix k_ii(ni, ni);
    k_ii.setFromTriplets(triplets.begin(), triplets.end());
    k_ii.makeCompressed();

    lu_.analyzePattern(k_ii);
    lu_.factorize(k_ii);
    if (lu_.info() != Eigen::Success) {
      throw SolveError("solve: factorization failed (" + lu_.lastErrorMessage() + ")");
    }
    fill_in_ = static_cast<long long>(lu_.nnzL() + lu_.nnzU()) - matrix.nonZeros();

    if (nb > 0) {
      x_ib_ = lu_.solve(k_ib);
      if (!x_ib_.allFinite()) throw SolveError("solve: back substitution failed");
      schur_.setThreshold(0.0);
      schur_.compute(k_bb - k_bi_ * x_ib_);
      if (!schur_.isInvertible()) throw SolveError("solve: singular border complement");
    }
  }

  Eigen::VectorXd solve(const Eigen::VectorXd& rhs) const {
    const Eigen::Index ni = static_cast<Eigen::Index>(interior_.size());
    const Eigen::Index nb = static_cast<Eigen::Index>(border_.size());
    Eigen::VectorXd r_i(ni), r_b(nb);
    for (Eigen::Index k = 0; k < ni; ++k) r_i(k) = rhs(interior_[static_cast<std::size_t>(k)]);
    for (Eigen::Index k = 0; k < nb; ++k) r_b(k) = rhs(border_[static_cast<std::size_t>(k)]);

    Eigen::VectorXd y = lu_.solve(r_i);
    Eigen::VectorXd x_b;
    if (nb > 0) {
      x_b = schur_.solve(Eigen::VectorXd(r_b - k_bi_ * y));
      y -= x_ib_ * x_b;
    }
    Eigen::VectorXd x(rhs.size());
    for (Eigen::Index k = 0; k < ni; ++k) x(interior_[static_cast<std::size_t>(k)]) = y(k);
    for (Eigen::Index k = 0; k < nb; ++k) x(border_[static_cast<std::size_t>(k)]) = x_b(k);
    return x;
  }

  long long fill_in() const { return fill_in_; }

 private:
  std::vector<Eigen::Index> border_;
  std::vector<Eigen::Index> interior_;
  std::vector<Eigen::Index> position_;
  Eigen::SparseLU<SparseMatrix, Eigen::COLAMDOrdering<int>> lu_;
  Eigen::MatrixXd x_ib_;
  Eigen::MatrixXd k_bi_;
  Eigen::FullPivLU<Eigen::MatrixXd> schur_;
  long long fill_in_ = 0;
};

/// Direct solve followed by iterative refinement with residuals accumulated
/// in extended precision, which recovers forward accuracy on the
/// ill-conditioned saddle-point systems. `border` lists unknowns that couple
/// densely or carry a kernel of the remaining block; leave it empty for a plain
/// sparse LU.
inline SolveReport solve(const SparseMatrix& matrix, const Eigen::VectorXd& rhs, const SolveOptions& options = {},
                         const std::vector<Eigen::Index>& border = {}) {
  if (matrix.rows() != matrix.cols()) throw SolveError("solve: matrix is not square");
  if (matrix.rows() != rhs.size()) throw SolveError("solve: right-hand side has the wrong size");

  const BorderedLU factor(matrix, border);
  SolveReport report;
  report.solution = factor.solve(rhs);
  if (!report.solution.allFinite()) throw SolveError("solve: back substitution failed");
  double previous = std::numeric_limits<double>::infinity();
  for (int step = 0; step < options.max_refinement_steps; ++step) {
    const Eigen::VectorXd correction = factor.solve(detail::extended_residual(matrix, report.solution, rhs));
    const double size = correction.norm();
    if (!std::isfinite(size) || !(size < previous)) break;
    report.solution += correction;
    report.factor_stats.refinement_steps = step + 1;
    previous = size;
    if (size <= options.correction_tolerance * report.solution.norm()) break;
  }
  report.relative_residual = relative_residual(matrix, report.solution, rhs);
  report.factor_stats.fill_in = factor.fill_in();
  return report;
}

/// Solves an assembled system. Breakdown is reported together with any
/// warnings raised during assembly.
inline SolveReport solve(const AssembledSystem& system, const SolveOptions& options = {}) {
  if (!system.singular_reason.empty()) throw SolveError("solve: singular system (" + system.singular_reason + ")");
  try {
    return solve(system.matrix, system.rhs, options, system.border);
  } catch (const SolveError& e) {
    std::string message = e.what();
    for (const auto& w : system.warnings) message += "; " + w;
    throw SolveError(message);
  }
}

}  // namespace crstokes
