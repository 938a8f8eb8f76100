#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "rmpc/condense.hpp"
#include "rmpc/error.hpp"
#include "rmpc/io.hpp"
#include "rmpc/numerics.hpp"
#include "rmpc/polytope.hpp"
#include "rmpc/qpsolve.hpp"

namespace rmpc {

inline constexpr double kConditionLimit = 1e12;
inline constexpr double kRegionTolerance = 1e-9;

/// Which block a region row comes from and the QP rows it represents.
struct RowOrigin
{
  /// false: primal feasibility of an inactive row; true: sign of an active multiplier.
  bool multiplier = false;
  IndexSet constraints;
};

/**
 * @brief Affine optimizer, multipliers and validity region for one active set.
 *
 * e*(x) = K_eps x + b_eps, lambda_A(x) = K_lambda x + b_lambda on the region
 * {T x <= d}; its first n_C rows describe primal feasibility, the rest dual feasibility.
 */
struct RegionalLaw
{
  Eigen::MatrixXd K_eps;
  Eigen::VectorXd b_eps;
  Eigen::MatrixXd K_lambda;
  Eigen::VectorXd b_lambda;
  Polytope region;
  Eigen::Index n_C = 0;
  std::vector<RowOrigin> origins;
  Eigen::MatrixXd K;
  Eigen::VectorXd b;
  Eigen::MatrixXd K_V;
  Eigen::VectorXd b_V;
  IndexSet active;
};

enum class ContainsMode { Full, FeasibleOnly };

inline bool contains(const RegionalLaw & law, const Eigen::VectorXd & x, ContainsMode mode = ContainsMode::Full)
{
  const Eigen::Index rows = mode == ContainsMode::Full ? law.region.rows() : law.n_C;
  for (Eigen::Index i = 0; i < rows; ++i) {
    if (law.region.T.row(i).dot(x) > law.region.d(i) + kRegionTolerance) { return false; }
  }
  return true;
}

inline Eigen::VectorXd apply(const RegionalLaw & law, const Eigen::VectorXd & x) { return law.K * x + law.b; }

namespace detail {

inline double condition_number(const Eigen::MatrixXd & M)
{
  if (M.size() == 0) { return 1.0; }
  const Eigen::JacobiSVD<Eigen::MatrixXd> svd(M);
  const auto & sv = svd.singularValues();
  const double smin = sv(sv.size() - 1);
  return smin > 0.0 ? sv(0) / smin : std::numeric_limits<double>::infinity();
}

struct RawRow
{
  Eigen::RowVectorXd t;
  double d;
  RowOrigin origin;
};

/// Drop vacuous rows, scale to unit norm and merge duplicates within one block.
inline void append_cleaned(std::vector<RawRow> & out, std::vector<RawRow> rows)
{
  const std::size_t block_start = out.size();
  for (auto & row : rows) {
    const double nrm = row.t.norm();
    if (nrm <= 1e-10 * (1.0 + std::abs(row.d))) {
      if (row.d >= -kRegionTolerance) { continue; }
      throw Error(ErrorKind::EmptyResult, "region has an infeasible zero row");
    }
    row.t /= nrm;
    row.d /= nrm;
    bool merged = false;
    for (std::size_t k = block_start; k < out.size(); ++k) {
      if ((out[k].t - row.t).cwiseAbs().maxCoeff() <= 1e-10 && std::abs(out[k].d - row.d) <= 1e-10) {
        auto & c = out[k].origin.constraints;
        c.insert(c.end(), row.origin.constraints.begin(), row.origin.constraints.end());
        merged = true;
        break;
      }
    }
    if (!merged) { out.push_back(std::move(row)); }
  }
}

}  // namespace detail

/**
 * @brief Build the affine law of an active set via the null-space decomposition of (G^A)'.
 *
 * Throws RankDeficient if G^A lacks full row rank and IllConditioned if the reduced
 * Hessian or the range-space factor is singular within the condition bound.
 */
inline RegionalLaw build_regional_law(const CondensedQp & qp, IndexSet active)
{
  std::sort(active.begin(), active.end());
  active.erase(std::unique(active.begin(), active.end()), active.end());
  const Eigen::Index p = qp.p();
  const Eigen::Index n = qp.n;
  const auto na = static_cast<Eigen::Index>(active.size());
  if (na > p) { throw Error(ErrorKind::RankDeficient, "more active rows than decision variables"); }

  Eigen::MatrixXd GA(na, p), SA(na, n);
  Eigen::VectorXd WA(na);
  std::vector<char> is_active(static_cast<std::size_t>(qp.q()), 0);
  for (Eigen::Index k = 0; k < na; ++k) {
    const auto i = active[static_cast<std::size_t>(k)];
    if (i < 0 || i >= qp.q()) { throw Error(ErrorKind::InvalidArgument, "active index out of range"); }
    GA.row(k) = qp.G.row(i);
    SA.row(k) = qp.S.row(i);
    WA(k) = qp.W(i);
    is_active[static_cast<std::size_t>(i)] = 1;
  }

  const QrFactorization qr = qr_factorize(GA.transpose());
  const Eigen::MatrixXd & E = qr.E;
  const Eigen::MatrixXd & J = qr.J;
  if (detail::condition_number(qr.F) > kConditionLimit) {
    throw Error(ErrorKind::IllConditioned, "active rows nearly dependent");
  }
  const Eigen::MatrixXd Theta = na > 0 ? Eigen::MatrixXd(qr.F.transpose().inverse()) : Eigen::MatrixXd(0, 0);

  Eigen::MatrixXd Psi(J.cols(), J.cols());
  if (J.cols() > 0) {
    const Eigen::MatrixXd Hr = J.transpose() * qp.Hhat * J;
    if (detail::condition_number(Hr) > kConditionLimit) {
      throw Error(ErrorKind::IllConditioned, "reduced Hessian singular on the active set");
    }
    Psi = Hr.inverse();
  }

  const Eigen::MatrixXd JPsiJt = J * Psi * J.transpose();
  const Eigen::MatrixXd range = E - JPsiJt * qp.Hhat * E;

  RegionalLaw law;
  law.active = active;
  law.K_eps = range * Theta * SA;
  law.b_eps = range * Theta * WA - JPsiJt * qp.c;
  law.K_lambda = -Theta.transpose() * E.transpose() * (qp.Hhat * law.K_eps);
  law.b_lambda = -Theta.transpose() * E.transpose() * (qp.Hhat * law.b_eps + qp.c);

  std::vector<detail::RawRow> primal, dual;
  for (Eigen::Index i = 0; i < qp.q(); ++i) {
    if (is_active[static_cast<std::size_t>(i)]) { continue; }
    primal.push_back(
      {qp.G.row(i) * law.K_eps - qp.S.row(i), qp.W(i) - qp.G.row(i).dot(law.b_eps), RowOrigin{false, {i}}});
  }
  for (Eigen::Index k = 0; k < na; ++k) {
    dual.push_back({-law.K_lambda.row(k), law.b_lambda(k), RowOrigin{true, {active[static_cast<std::size_t>(k)]}}});
  }
  std::vector<detail::RawRow> rows;
  detail::append_cleaned(rows, std::move(primal));
  law.n_C = static_cast<Eigen::Index>(rows.size());
  detail::append_cleaned(rows, std::move(dual));

  Eigen::MatrixXd T(static_cast<Eigen::Index>(rows.size()), n);
  Eigen::VectorXd d(static_cast<Eigen::Index>(rows.size()));
  for (std::size_t k = 0; k < rows.size(); ++k) {
    T.row(static_cast<Eigen::Index>(k)) = rows[k].t;
    d(static_cast<Eigen::Index>(k)) = rows[k].d;
    law.origins.push_back(std::move(rows[k].origin));
  }
  law.region = Polytope(std::move(T), std::move(d));

  law.K = qp.u_eps * law.K_eps + qp.u_x;
  law.b = qp.u_eps * law.b_eps;
  law.K_V = qp.v_eps * law.K_eps + qp.v_x;
  law.b_V = qp.v_eps * law.b_eps;
  return law;
}

enum class FallbackReason { None, RankLoss, Tie, TooManyCrossings };

inline std::string_view to_string(FallbackReason r)
{
  switch (r) {
    case FallbackReason::None: return "none";
    case FallbackReason::RankLoss: return "rank_loss";
    case FallbackReason::Tie: return "tie";
    case FallbackReason::TooManyCrossings: return "too_many_crossings";
  }
  return "unknown";
}

struct LineUpdate
{
  /// Laws built in crossing order; the last one contains x_to unless a fallback occurred.
  std::vector<RegionalLaw> laws;
  FallbackReason fallback = FallbackReason::None;

  bool fallback_required() const { return fallback != FallbackReason::None; }
};

inline constexpr int kMaxCrossings = 50;
inline constexpr double kTieTolerance = 1e-9;

/// Walk from x_from to x_to, updating the active set at every crossed facet.
inline LineUpdate update_active_set_along_line(
  const CondensedQp & qp, const RegionalLaw & law, const Eigen::VectorXd & x_from, const Eigen::VectorXd & x_to)
{
  LineUpdate out;
  const RegionalLaw * current = &law;
  Eigen::VectorXd x = x_from;
  const Eigen::VectorXd dir = x_to - x_from;
  double travelled = 0.0;

  for (int crossing = 0;; ++crossing) {
    if (contains(*current, x_to)) { return out; }
    if (crossing >= kMaxCrossings) {
      out.fallback = FallbackReason::TooManyCrossings;
      return out;
    }
    const auto & R = current->region;
    double t_min = std::numeric_limits<double>::infinity();
    Eigen::Index facet = -1;
    for (Eigen::Index i = 0; i < R.rows(); ++i) {
      const double rate = R.T.row(i).dot(dir);
      if (rate <= 1e-14) { continue; }
      const double t = std::max(0.0, (R.d(i) - R.T.row(i).dot(x)) / rate);
      if (t < t_min) {
        t_min = t;
        facet = i;
      }
    }
    if (facet < 0 || travelled + t_min > 1.0 + kTieTolerance) { return out; }
    for (Eigen::Index i = 0; i < R.rows(); ++i) {
      if (i == facet) { continue; }
      const double rate = R.T.row(i).dot(dir);
      if (rate <= 1e-14) { continue; }
      const double t = std::max(0.0, (R.d(i) - R.T.row(i).dot(x)) / rate);
      if (t - t_min <= kTieTolerance) {
        out.fallback = FallbackReason::Tie;
        return out;
      }
    }
    const RowOrigin & origin = current->origins[static_cast<std::size_t>(facet)];
    if (origin.constraints.size() != 1) {
      out.fallback = FallbackReason::Tie;
      return out;
    }
    const Eigen::Index j = origin.constraints.front();
    IndexSet next = current->active;
    if (origin.multiplier) {
      next.erase(std::remove(next.begin(), next.end(), j), next.end());
    } else {
      next.push_back(j);
    }
    try {
      out.laws.push_back(build_regional_law(qp, next));
    } catch (const Error & e) {
      if (e.kind() != ErrorKind::RankDeficient && e.kind() != ErrorKind::IllConditioned) { throw; }
      out.laws.clear();
      out.fallback = FallbackReason::RankLoss;
      return out;
    }
    current = &out.laws.back();
    x += t_min * dir;
    travelled += t_min;
  }
}

inline nlohmann::json to_json(const RegionalLaw & law)
{
  using io::to_json;
  nlohmann::json origins = nlohmann::json::array();
  for (const auto & o : law.origins) {
    origins.push_back({{"block", o.multiplier ? "O" : "C"}, {"constraints", o.constraints}});
  }
  return nlohmann::json{
    {"K", to_json(law.K)},
    {"b", to_json(Eigen::VectorXd(law.b))},
    {"K_eps", to_json(law.K_eps)},
    {"b_eps", to_json(Eigen::VectorXd(law.b_eps))},
    {"region", to_json(law.region)},
    {"n_C", law.n_C},
    {"origins", origins},
    {"active", law.active},
  };
}

}  // namespace rmpc
