#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "rmpc/error.hpp"
#include "rmpc/polytope.hpp"

namespace rmpc {

/**
 * @brief QR factorization M = [E J] [F; 0] of a full column rank matrix.
 *
 * E spans the range of M, J its orthogonal complement and F is upper triangular
 * with a non-negative diagonal.
 */
struct QrFactorization
{
  Eigen::MatrixXd E;
  Eigen::MatrixXd J;
  Eigen::MatrixXd F;
};

/// Relative threshold on the pivoted diagonal below which a matrix counts as rank deficient.
inline constexpr double kRankTolerance = 1e-9;

inline QrFactorization qr_factorize(const Eigen::MatrixXd & M)
{
  const Eigen::Index rows = M.rows();
  const Eigen::Index cols = M.cols();
  if (cols > rows) { throw Error(ErrorKind::RankDeficient, "qr_factorize: more columns than rows"); }

  QrFactorization out;
  if (cols == 0) {
    out.E.resize(rows, 0);
    out.J = Eigen::MatrixXd::Identity(rows, rows);
    out.F.resize(0, 0);
    return out;
  }

  const double scale = M.norm();
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> pivoted(M);
  const double min_diag = pivoted.matrixR().diagonal().cwiseAbs().minCoeff();
  if (!(scale > 0.0) || min_diag < kRankTolerance * scale) {
    throw Error(ErrorKind::RankDeficient, "qr_factorize: pivot below rank threshold");
  }

  Eigen::HouseholderQR<Eigen::MatrixXd> qr(M);
  Eigen::MatrixXd Q = qr.householderQ() * Eigen::MatrixXd::Identity(rows, rows);
  Eigen::MatrixXd F = qr.matrixQR().topRows(cols).triangularView<Eigen::Upper>();
  for (Eigen::Index i = 0; i < cols; ++i) {
    if (F(i, i) < 0.0) {
      F.row(i) *= -1.0;
      Q.col(i) *= -1.0;
    }
  }
  out.E = Q.leftCols(cols);
  out.J = Q.rightCols(rows - cols);
  out.F = std::move(F);
  return out;
}

/// Solution of the discrete-time algebraic Riccati equation and the matching LQR gain.
struct DareResult
{
  Eigen::MatrixXd P;
  /// u = -K_inf x is the LQR law.
  Eigen::MatrixXd K_inf;
  int iterations = 0;
};

/**
 * @brief Solve P = A'PA - A'PB (R + B'PB)^{-1} B'PA + Q by value iteration from P = Q.
 *
 * Converged once successive iterates differ by at most 1e-12 in max-norm
 * (relative to max(1, |P|_max)).
 */
inline DareResult solve_dare(
  const Eigen::MatrixXd & A,
  const Eigen::MatrixXd & B,
  const Eigen::MatrixXd & Q,
  const Eigen::MatrixXd & R,
  int max_iterations = 10000,
  double tolerance = 1e-12)
{
  const Eigen::Index n = A.rows();
  if (A.cols() != n || B.rows() != n || Q.rows() != n || Q.cols() != n || R.rows() != B.cols() ||
      R.cols() != B.cols()) {
    throw Error(ErrorKind::InvalidArgument, "solve_dare: dimension mismatch");
  }
  if (Eigen::LLT<Eigen::MatrixXd>(R).info() != Eigen::Success) {
    throw Error(ErrorKind::InvalidArgument, "solve_dare: R must be positive definite");
  }

  Eigen::MatrixXd P = Q;
  for (int it = 1; it <= max_iterations; ++it) {
    const Eigen::MatrixXd S = R + B.transpose() * P * B;
    const Eigen::MatrixXd K = S.ldlt().solve(B.transpose() * P * A);
    Eigen::MatrixXd next = A.transpose() * P * A - A.transpose() * P * B * K + Q;
    next = 0.5 * (next + next.transpose()).eval();
    if (!next.allFinite()) { break; }
    const double change = (next - P).cwiseAbs().maxCoeff();
    P = std::move(next);
    if (change <= tolerance * std::max(1.0, P.cwiseAbs().maxCoeff())) {
      DareResult out;
      out.K_inf = (R + B.transpose() * P * B).ldlt().solve(B.transpose() * P * A);
      out.P = std::move(P);
      out.iterations = it;
      return out;
    }
  }
  throw Error(ErrorKind::NoConvergence, "solve_dare: value iteration did not converge");
}

/// Minimizer of a linear program together with the multipliers of its constraint rows.
struct LpResult
{
  Eigen::VectorXd x;
  double value = 0.0;
  /// One multiplier per row, lambda >= 0, with A' lambda = -c at the optimum.
  Eigen::VectorXd multipliers;
  int iterations = 0;
};

namespace detail {

/**
 * Active-set method for min c'x s.t. A x <= b on the inequality form, started at a
 * feasible x. The working set holds linearly independent rows; without curvature the
 * step is the projected steepest descent direction, taken until a row blocks. Bland's
 * lowest-index rule picks both the blocking and the dropped row.
 */
inline LpResult minimize_from(
  const Eigen::VectorXd & c, const Eigen::MatrixXd & A, const Eigen::VectorXd & b, Eigen::VectorXd x,
  int max_iterations = 0)
{
  const Eigen::Index n = A.cols();
  const Eigen::Index q = A.rows();
  if (max_iterations <= 0) { max_iterations = static_cast<int>(50 * (q + n) + 100); }
  const double cscale = std::max(1.0, c.cwiseAbs().maxCoeff());

  std::vector<Eigen::Index> work;
  std::vector<char> in_work(static_cast<std::size_t>(q), 0);
  Eigen::VectorXd row_norm = A.rowwise().norm();

  for (int it = 0; it < max_iterations; ++it) {
    Eigen::MatrixXd Aw(static_cast<Eigen::Index>(work.size()), n);
    for (std::size_t k = 0; k < work.size(); ++k) { Aw.row(static_cast<Eigen::Index>(k)) = A.row(work[k]); }

    Eigen::VectorXd p;
    Eigen::MatrixXd Qfull;
    if (work.empty()) {
      p = -c;
    } else {
      Eigen::HouseholderQR<Eigen::MatrixXd> qr(Aw.transpose());
      Qfull = qr.householderQ() * Eigen::MatrixXd::Identity(n, n);
      const auto null_basis = Qfull.rightCols(n - static_cast<Eigen::Index>(work.size()));
      p = -(null_basis * (null_basis.transpose() * c));
    }

    if (p.norm() <= 1e-12 * cscale) {
      Eigen::VectorXd lam = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(work.size()));
      if (!work.empty()) { lam = Aw.transpose().colPivHouseholderQr().solve(-c); }
      Eigen::Index drop = -1;
      Eigen::Index drop_row = q;
      for (Eigen::Index k = 0; k < lam.size(); ++k) {
        if (lam(k) < -1e-11 * cscale && work[static_cast<std::size_t>(k)] < drop_row) {
          drop = k;
          drop_row = work[static_cast<std::size_t>(k)];
        }
      }
      if (drop < 0) {
        LpResult out;
        out.multipliers = Eigen::VectorXd::Zero(q);
        for (std::size_t k = 0; k < work.size(); ++k) {
          out.multipliers(work[k]) = std::max(0.0, lam(static_cast<Eigen::Index>(k)));
        }
        out.value = c.dot(x);
        out.x = std::move(x);
        out.iterations = it;
        return out;
      }
      in_work[static_cast<std::size_t>(drop_row)] = 0;
      work.erase(work.begin() + drop);
      continue;
    }

    double step = std::numeric_limits<double>::infinity();
    Eigen::Index block = -1;
    const double pnorm = p.norm();
    for (Eigen::Index i = 0; i < q; ++i) {
      if (in_work[static_cast<std::size_t>(i)]) { continue; }
      const double rate = A.row(i).dot(p);
      if (rate <= 1e-13 * row_norm(i) * pnorm) { continue; }
      const double t = std::max(0.0, (b(i) - A.row(i).dot(x)) / rate);
      if (block < 0 || t < step - 1e-14 * std::max(1.0, step)) {
        step = t;
        block = i;
      }
    }
    if (block < 0) { throw Error(ErrorKind::Unbounded, "linear program is unbounded"); }
    x += step * p;
    work.push_back(block);
    in_work[static_cast<std::size_t>(block)] = 1;
  }
  throw Error(ErrorKind::NoConvergence, "linear program iteration limit reached");
}

/// Feasible point of {A x <= b} minimizing the largest violation; returns (x, max violation).
inline std::pair<Eigen::VectorXd, double> least_violation_point(const Eigen::MatrixXd & A, const Eigen::VectorXd & b)
{
  const Eigen::Index n = A.cols();
  const Eigen::Index q = A.rows();
  if (q == 0) { return {Eigen::VectorXd::Zero(n), -1.0}; }
  Eigen::MatrixXd Aaux(q + 1, n + 1);
  Aaux.topLeftCorner(q, n) = A;
  Aaux.topRightCorner(q, 1).setConstant(-1.0);
  Aaux.bottomLeftCorner(1, n).setZero();
  Aaux(q, n) = -1.0;
  Eigen::VectorXd baux(q + 1);
  baux << b, 1.0;
  Eigen::VectorXd start = Eigen::VectorXd::Zero(n + 1);
  start(n) = std::max((-b).maxCoeff(), -1.0);
  Eigen::VectorXd caux = Eigen::VectorXd::Zero(n + 1);
  caux(n) = 1.0;
  LpResult aux = minimize_from(caux, Aaux, baux, start);
  return {aux.x.head(n), aux.x(n)};
}

}  // namespace detail

/**
 * @brief Minimize cost' x over a polytope.
 *
 * Throws Infeasible for an empty polytope and Unbounded when the objective has no
 * lower bound on it.
 */
inline LpResult solve_lp(const Eigen::VectorXd & cost, const Polytope & constraints)
{
  if (cost.size() != constraints.dim()) { throw Error(ErrorKind::InvalidArgument, "solve_lp: dimension mismatch"); }
  auto [x0, slack] = detail::least_violation_point(constraints.T, constraints.d);
  const double dscale = constraints.rows() > 0 ? std::max(1.0, constraints.d.cwiseAbs().maxCoeff()) : 1.0;
  if (slack > 1e-9 * dscale) { throw Error(ErrorKind::Infeasible, "solve_lp: polytope is empty"); }
  return detail::minimize_from(cost, constraints.T, constraints.d, std::move(x0));
}

}  // namespace rmpc
