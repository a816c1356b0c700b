#pragma once

// Dense phase-one simplex for small feasibility problems.
//
// The only LP questions this library asks are of the form "is there a
// convex combination of these vertices landing inside this box", with at
// most a few hundred vertices and a handful of rows, so a dense tableau with
// Bland's anti-cycling rule is both adequate and easy to audit.

#include "rh/core.hpp"

#include <cmath>
#include <limits>

namespace rh::lp {

enum class Status { feasible, infeasible, iteration_limit };

template <typename Scalar>
struct Result {
  Status status = Status::infeasible;
  Vector<Scalar> x;          // a feasible point when status == feasible
  Scalar residual = Scalar(0);  // optimal phase-one objective (sum of artificials)
};

/// Searches for x ≥ 0 with A x = b.
template <typename Scalar>
Result<Scalar> find_nonnegative_solution(const Matrix<Scalar>& A, const Vector<Scalar>& b,
                                         Scalar tol = Scalar(1e-9), int max_iterations = 20000) {
  require(A.rows() == b.size(), "lp: row count of A must match b");
  // Pivoting and the final feasibility check never go below rounding level.
  tol = std::max(tol, Scalar(64) * std::numeric_limits<Scalar>::epsilon());
  const Eigen::Index m = A.rows();
  const Eigen::Index n = A.cols();
  const Eigen::Index cols = n + m + 1;  // structural, artificial, rhs

  Matrix<Scalar> tableau = Matrix<Scalar>::Zero(m + 1, cols);
  for (Eigen::Index i = 0; i < m; ++i) {
    const Scalar sign = b(i) < Scalar(0) ? Scalar(-1) : Scalar(1);
    tableau.row(i).head(n) = sign * A.row(i);
    tableau(i, n + i) = Scalar(1);
    tableau(i, cols - 1) = sign * b(i);
  }
  // Phase-one objective row: reduced costs of minimising the artificial sum.
  for (Eigen::Index i = 0; i < m; ++i) {
    tableau.row(m).head(n) -= tableau.row(i).head(n);
    tableau(m, cols - 1) -= tableau(i, cols - 1);
  }

  std::vector<Eigen::Index> basis(static_cast<std::size_t>(m));
  for (Eigen::Index i = 0; i < m; ++i) basis[static_cast<std::size_t>(i)] = n + i;

  Result<Scalar> result;
  int iteration = 0;
  for (;; ++iteration) {
    if (iteration >= max_iterations) {
      result.status = Status::iteration_limit;
      return result;
    }
    Eigen::Index entering = -1;
    for (Eigen::Index j = 0; j < n + m; ++j) {
      if (tableau(m, j) < -tol) {
        entering = j;
        break;
      }
    }
    if (entering < 0) break;

    Eigen::Index leaving = -1;
    Scalar best_ratio = std::numeric_limits<Scalar>::infinity();
    for (Eigen::Index i = 0; i < m; ++i) {
      const Scalar coefficient = tableau(i, entering);
      if (coefficient <= tol) continue;
      const Scalar ratio = tableau(i, cols - 1) / coefficient;
      const bool better = ratio < best_ratio - tol;
      const bool tie = std::abs(ratio - best_ratio) <= tol && leaving >= 0 &&
                       basis[static_cast<std::size_t>(i)] < basis[static_cast<std::size_t>(leaving)];
      if (better || tie) {
        best_ratio = ratio;
        leaving = i;
      }
    }
    if (leaving < 0) {
      // Phase-one objective is bounded below by zero, so this is a numerical fault.
      result.status = Status::iteration_limit;
      return result;
    }

    tableau.row(leaving) /= tableau(leaving, entering);
    for (Eigen::Index i = 0; i <= m; ++i) {
      if (i == leaving) continue;
      const Scalar factor = tableau(i, entering);
      if (factor != Scalar(0)) tableau.row(i) -= factor * tableau.row(leaving);
    }
    basis[static_cast<std::size_t>(leaving)] = entering;
  }

  result.residual = -tableau(m, cols - 1);
  result.x = Vector<Scalar>::Zero(n);
  for (Eigen::Index i = 0; i < m; ++i) {
    const Eigen::Index var = basis[static_cast<std::size_t>(i)];
    if (var < n) result.x(var) = tableau(i, cols - 1);
  }
  const Scalar scale = Scalar(1) + b.cwiseAbs().sum();
  result.status = result.residual <= tol * scale ? Status::feasible : Status::infeasible;
  return result;
}

/// Decides whether some α in the probability simplex satisfies
/// lower ≤ V α ≤ upper (each column of V is one vertex).
template <typename Scalar>
Result<Scalar> convex_combination_in_box(const Matrix<Scalar>& vertices, const Vector<Scalar>& lower,
                                         const Vector<Scalar>& upper, Scalar tol = Scalar(1e-9)) {
  require(vertices.rows() == lower.size() && lower.size() == upper.size(),
          "lp: vertex dimension must match the box");
  require(vertices.cols() >= 1, "lp: need at least one vertex");
  const Eigen::Index p = vertices.rows();
  const Eigen::Index k = vertices.cols();

  // Variables [α (k), s_low (p), s_up (p)], all non-negative:
  //   V α - s_low = lower - tol,  V α + s_up = upper + tol,  1ᵀα = 1.
  Matrix<Scalar> A = Matrix<Scalar>::Zero(2 * p + 1, k + 2 * p);
  Vector<Scalar> b(2 * p + 1);
  A.block(0, 0, p, k) = vertices;
  A.block(0, k, p, p) = -Matrix<Scalar>::Identity(p, p);
  A.block(p, 0, p, k) = vertices;
  A.block(p, k + p, p, p) = Matrix<Scalar>::Identity(p, p);
  A.row(2 * p).head(k).setOnes();
  b.head(p) = lower.array() - tol;
  b.segment(p, p) = upper.array() + tol;
  b(2 * p) = Scalar(1);

  auto result = find_nonnegative_solution<Scalar>(A, b, tol);
  if (result.status == Status::feasible) result.x = result.x.head(k).eval();
  return result;
}

}  // namespace rh::lp
