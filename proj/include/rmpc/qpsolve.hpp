#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <vector>

#include "rmpc/condense.hpp"
#include "rmpc/error.hpp"
#include "rmpc/numerics.hpp"

namespace rmpc {

inline constexpr double kActivityTolerance = 1e-7;
inline constexpr double kWeakTolerance = 1e-8;
inline constexpr double kKktTolerance = 1e-7;

using IndexSet = std::vector<Eigen::Index>;

struct QpSolution
{
  Eigen::VectorXd epsilon;
  /// One entry per row of G; zero outside the final working set.
  Eigen::VectorXd lambda;
  IndexSet active;
  IndexSet inactive;
  IndexSet weakly_active;
  /// Linearly independent rows the solver terminated with (subset of active).
  IndexSet working_set;
  double objective = 0.0;
  int iterations = 0;
  bool warm_started = false;
};

struct ActiveSetClassification
{
  IndexSet active;
  IndexSet inactive;
  IndexSet weakly_active;
};

inline ActiveSetClassification classify(
  const CondensedQp & qp, const Eigen::VectorXd & x, const Eigen::VectorXd & epsilon, const Eigen::VectorXd & lambda)
{
  const Eigen::VectorXd residual = qp.G * epsilon - qp.rhs(x);
  ActiveSetClassification out;
  for (Eigen::Index i = 0; i < qp.q(); ++i) {
    if (std::abs(residual(i)) <= kActivityTolerance) {
      out.active.push_back(i);
      if (lambda(i) <= kWeakTolerance) { out.weakly_active.push_back(i); }
    } else {
      out.inactive.push_back(i);
    }
  }
  return out;
}

/// Least-violation point of G e <= W + S x (LP in (e, t)), or nullopt when x lies outside the feasible set.
inline std::optional<Eigen::VectorXd> phase1(const CondensedQp & qp, const Eigen::VectorXd & x, double tol = 1e-9)
{
  const auto [eps, t] = detail::least_violation_point(qp.G, qp.rhs(x));
  if (t > tol) { return std::nullopt; }
  return eps;
}

inline bool is_feasible(const CondensedQp & qp, const Eigen::VectorXd & x) { return phase1(qp, x).has_value(); }

struct SolverStats
{
  long solves = 0;
  long iterations = 0;
  long working_set_changes = 0;
  long warm_starts_used = 0;
};

/**
 * @brief Primal active-set solver for the condensed QPs.
 *
 * The Hessian may be singular (the epigraph variable enters linearly). Steps are taken in
 * the null space of the working set: a Newton step when the reduced Hessian is positive
 * definite, otherwise a zero-curvature descent ray limited by the blocking row.
 */
class QpSolver
{
public:
  QpSolution solve(const CondensedQp & qp, const Eigen::VectorXd & x, const IndexSet * warm_start = nullptr)
  {
    const Eigen::VectorXd b = qp.rhs(x);
    ++stats_.solves;

    std::optional<Start> start;
    if (warm_start != nullptr && !warm_start->empty()) { start = warm_point(qp, b, *warm_start); }
    const bool warm = start.has_value();
    if (!warm) { start = cold_point(qp, b); }
    if (warm) { ++stats_.warm_starts_used; }

    QpSolution sol = iterate(qp, b, std::move(*start));
    sol.warm_started = warm;
    const auto cls = classify(qp, x, sol.epsilon, sol.lambda);
    sol.active = cls.active;
    sol.inactive = cls.inactive;
    sol.weakly_active = cls.weakly_active;
    return sol;
  }

  /// Solve starting from a given point that satisfies the non-epigraph rows.
  QpSolution solve_from(const CondensedQp & qp, const Eigen::VectorXd & x, const Eigen::VectorXd & eps0)
  {
    const Eigen::VectorXd b = qp.rhs(x);
    Start start = lift_epigraph(qp, b, eps0);
    if (((qp.G * start.eps - b).array() > 1e-9).any()) {
      throw Error(ErrorKind::InvalidArgument, "solve_from: start point is infeasible");
    }
    ++stats_.solves;
    QpSolution sol = iterate(qp, b, std::move(start));
    const auto cls = classify(qp, x, sol.epsilon, sol.lambda);
    sol.active = cls.active;
    sol.inactive = cls.inactive;
    sol.weakly_active = cls.weakly_active;
    return sol;
  }

  const SolverStats & stats() const { return stats_; }

private:
  struct Start
  {
    Eigen::VectorXd eps;
    IndexSet work;
  };

  struct NullSpace
  {
    Eigen::MatrixXd Q;
    Eigen::MatrixXd R;
    Eigen::Index k = 0;

    Eigen::MatrixXd basis() const { return Q.rightCols(Q.cols() - k); }
  };

  SolverStats stats_;

  static Eigen::MatrixXd rows_of(const Eigen::MatrixXd & G, const IndexSet & idx)
  {
    Eigen::MatrixXd out(static_cast<Eigen::Index>(idx.size()), G.cols());
    for (std::size_t k = 0; k < idx.size(); ++k) { out.row(static_cast<Eigen::Index>(k)) = G.row(idx[k]); }
    return out;
  }

  static NullSpace null_space(const Eigen::MatrixXd & Gw, Eigen::Index p)
  {
    NullSpace ns;
    ns.k = Gw.rows();
    if (ns.k == 0) {
      ns.Q = Eigen::MatrixXd::Identity(p, p);
      return ns;
    }
    Eigen::HouseholderQR<Eigen::MatrixXd> qr(Gw.transpose());
    ns.Q = qr.householderQ() * Eigen::MatrixXd::Identity(p, p);
    ns.R = qr.matrixQR().topRows(ns.k).triangularView<Eigen::Upper>();
    return ns;
  }

  static bool independent_of(const Eigen::MatrixXd & Gw, const Eigen::RowVectorXd & row)
  {
    if (Gw.rows() == 0) { return row.norm() > kRankTolerance; }
    if (Gw.rows() >= Gw.cols()) { return false; }
    Eigen::MatrixXd stacked(Gw.rows() + 1, Gw.cols());
    stacked << Gw, row;
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(stacked.transpose());
    qr.setThreshold(kRankTolerance);
    return qr.rank() == stacked.rows();
  }

  /// Phase-1 point, then lifted as in lift_epigraph.
  static Start cold_point(const CondensedQp & qp, const Eigen::VectorXd & b)
  {
    const auto [eps0, t] = detail::least_violation_point(qp.G, b);
    if (t > 1e-9) { throw Error(ErrorKind::Infeasible, "state outside the feasible set of the QP"); }
    return lift_epigraph(qp, b, eps0);
  }

  /// For the min-max QP, lower the epigraph variable onto the worst vertex row and start with that row.
  static Start lift_epigraph(const CondensedQp & qp, const Eigen::VectorXd & b, Eigen::VectorXd eps)
  {
    Start s{std::move(eps), {}};
    if (qp.r > 0) {
      const Eigen::Index g = qp.p() - 1;
      double gamma = 0.0;
      Eigen::Index arg = -1;
      for (Eigen::Index i = 0; i < qp.r; ++i) {
        const double coef = -qp.G(i, g);
        const double need = (qp.G.row(i).head(g).dot(s.eps.head(g)) - b(i)) / coef;
        if (arg < 0 || need > gamma + 1e-14 * std::max(1.0, std::abs(gamma))) {
          gamma = need;
          arg = i;
        }
      }
      s.eps(g) = gamma;
      s.work.push_back(arg);
    }
    return s;
  }

  /// Minimizer on the warm working set if it is primal feasible, else nullopt.
  static std::optional<Start> warm_point(const CondensedQp & qp, const Eigen::VectorXd & b, const IndexSet & warm)
  {
    const Eigen::Index p = qp.p();
    IndexSet work;
    Eigen::MatrixXd Gw(0, p);
    for (const auto i : warm) {
      if (i < 0 || i >= qp.q()) { throw Error(ErrorKind::InvalidArgument, "warm start index out of range"); }
      if (independent_of(Gw, qp.G.row(i))) {
        work.push_back(i);
        Gw = rows_of(qp.G, work);
      }
    }
    if (qp.r > 0 && std::none_of(work.begin(), work.end(), [&](Eigen::Index i) { return i < qp.r; })) {
      return std::nullopt;
    }
    const NullSpace ns = null_space(Gw, p);
    Eigen::VectorXd bw(ns.k);
    for (Eigen::Index k = 0; k < ns.k; ++k) { bw(k) = b(work[static_cast<std::size_t>(k)]); }
    Eigen::VectorXd eps = Eigen::VectorXd::Zero(p);
    if (ns.k > 0) {
      const Eigen::VectorXd y = ns.R.transpose().triangularView<Eigen::Lower>().solve(bw);
      eps = ns.Q.leftCols(ns.k) * y;
    }
    const Eigen::MatrixXd Z = ns.basis();
    if (Z.cols() > 0) {
      const Eigen::MatrixXd Hr = Z.transpose() * qp.Hhat * Z;
      const Eigen::LLT<Eigen::MatrixXd> llt(Hr);
      if (llt.info() != Eigen::Success) { return std::nullopt; }
      eps -= Z * llt.solve(Z.transpose() * (qp.Hhat * eps + qp.c));
    }
    if (((qp.G * eps - b).array() > 1e-9).any()) { return std::nullopt; }
    return Start{eps, work};
  }

  QpSolution iterate(const CondensedQp & qp, const Eigen::VectorXd & b, Start start)
  {
    const Eigen::Index p = qp.p();
    const Eigen::Index q = qp.q();
    Eigen::VectorXd eps = std::move(start.eps);
    IndexSet work = std::move(start.work);
    std::vector<char> in_work(static_cast<std::size_t>(q), 0);
    for (const auto i : work) { in_work[static_cast<std::size_t>(i)] = 1; }

    const int max_iterations = static_cast<int>(10 * q + 10 * p + 50);
    const int bland_after = static_cast<int>(2 * p + 5);
    int zero_steps = 0;
    double f_prev = qp.objective(eps);
    const double fscale = 1.0 + qp.Hhat.cwiseAbs().maxCoeff();

    for (int it = 0; it < max_iterations; ++it) {
      ++stats_.iterations;
      const Eigen::MatrixXd Gw = rows_of(qp.G, work);
      const NullSpace ns = null_space(Gw, p);
      const Eigen::MatrixXd Z = ns.basis();
      const Eigen::VectorXd grad = qp.Hhat * eps + qp.c;
      const double gscale = 1.0 + grad.cwiseAbs().maxCoeff();

      Eigen::VectorXd step = Eigen::VectorXd::Zero(p);
      bool ray = false;
      if (Z.cols() > 0) {
        const Eigen::MatrixXd Hr = Z.transpose() * qp.Hhat * Z;
        const Eigen::VectorXd gr = Z.transpose() * grad;
        const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(Hr);
        const Eigen::VectorXd ev = es.eigenvalues();
        const double curv_tol = 1e-11 * fscale;
        Eigen::VectorXd dr = Eigen::VectorXd::Zero(Z.cols());
        Eigen::VectorXd flat = Eigen::VectorXd::Zero(Z.cols());
        for (Eigen::Index k = 0; k < ev.size(); ++k) {
          const Eigen::VectorXd v = es.eigenvectors().col(k);
          const double gk = v.dot(gr);
          if (ev(k) > curv_tol) {
            dr -= (gk / ev(k)) * v;
          } else {
            flat -= gk * v;
          }
        }
        if (flat.norm() > 1e-12 * gscale) {
          dr = flat;
          ray = true;
        }
        step = Z * dr;
      }

      if (!ray && step.norm() <= 1e-12 * (1.0 + eps.norm())) {
        Eigen::VectorXd lam = Eigen::VectorXd::Zero(ns.k);
        if (ns.k > 0) {
          const Eigen::VectorXd y = ns.Q.leftCols(ns.k).transpose() * (-grad);
          lam = ns.R.triangularView<Eigen::Upper>().solve(y);
        }
        Eigen::Index drop = -1;
        if (zero_steps >= bland_after) {
          Eigen::Index best_row = q;
          for (Eigen::Index k = 0; k < lam.size(); ++k) {
            const auto row = work[static_cast<std::size_t>(k)];
            if (lam(k) < -kWeakTolerance && row < best_row) {
              best_row = row;
              drop = k;
            }
          }
        } else {
          double most = -kWeakTolerance;
          for (Eigen::Index k = 0; k < lam.size(); ++k) {
            if (lam(k) < most) {
              most = lam(k);
              drop = k;
            }
          }
        }
        if (drop < 0) {
          QpSolution sol;
          sol.epsilon = eps;
          sol.lambda = Eigen::VectorXd::Zero(q);
          for (Eigen::Index k = 0; k < lam.size(); ++k) {
            sol.lambda(work[static_cast<std::size_t>(k)]) = std::max(0.0, lam(k));
          }
          sol.objective = qp.objective(eps);
          sol.iterations = it + 1;
          sol.working_set = work;
          std::sort(sol.working_set.begin(), sol.working_set.end());
          return sol;
        }
        in_work[static_cast<std::size_t>(work[static_cast<std::size_t>(drop)])] = 0;
        work.erase(work.begin() + drop);
        ++stats_.working_set_changes;
        continue;
      }

      double alpha = ray ? std::numeric_limits<double>::infinity() : 1.0;
      Eigen::Index block = -1;
      const Eigen::VectorXd Gs = qp.G * step;
      const Eigen::VectorXd slack = b - qp.G * eps;
      const double snorm = step.norm();
      for (Eigen::Index i = 0; i < q; ++i) {
        if (in_work[static_cast<std::size_t>(i)] || Gs(i) <= 1e-13 * snorm) { continue; }
        const double t = std::max(0.0, slack(i)) / Gs(i);
        if (t < alpha - 1e-15 * std::max(1.0, alpha) || (block < 0 && t <= alpha)) {
          alpha = t;
          block = i;
        }
      }
      if (block < 0 && ray) { throw Error(ErrorKind::Unbounded, "QP objective unbounded below"); }
      eps += alpha * step;
      zero_steps = alpha * snorm <= 1e-14 * (1.0 + eps.norm()) ? zero_steps + 1 : 0;

      const double f_now = qp.objective(eps);
      if (f_now > f_prev + 1e-9 * (1.0 + std::abs(f_prev))) {
        throw Error(ErrorKind::NoConvergence, "active-set objective increased");
      }
      f_prev = f_now;

      if (block >= 0) {
        work.push_back(block);
        in_work[static_cast<std::size_t>(block)] = 1;
        ++stats_.working_set_changes;
      }
    }
    throw Error(ErrorKind::CycleDetected, "active-set iteration limit reached");
  }
};

inline QpSolution solve(const CondensedQp & qp, const Eigen::VectorXd & x, const IndexSet * warm_start = nullptr)
{
  QpSolver solver;
  return solver.solve(qp, x, warm_start);
}

}  // namespace rmpc
