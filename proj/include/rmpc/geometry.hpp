#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <optional>
#include <vector>

#include "rmpc/error.hpp"
#include "rmpc/numerics.hpp"
#include "rmpc/polytope.hpp"

namespace rmpc {

/// Support function h_P(a) = max { a'x | x in P }.
inline double support(const Polytope & P, const Eigen::VectorXd & direction)
{
  return -solve_lp(-direction, P).value;
}

/// Per-axis bounds [lo, hi] of a bounded polytope.
inline std::pair<Eigen::VectorXd, Eigen::VectorXd> bounding_box(const Polytope & P)
{
  const Eigen::Index n = P.dim();
  Eigen::VectorXd lo(n), hi(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const Eigen::VectorXd e = Eigen::VectorXd::Unit(n, i);
    hi(i) = support(P, e);
    lo(i) = -support(P, -e);
  }
  return {lo, hi};
}

/// Nonempty and bounded, checked by LP in every axis direction.
inline bool is_proper(const Polytope & P)
{
  try {
    bounding_box(P);
    return true;
  } catch (const Error &) {
    return false;
  }
}

inline bool is_empty(const Polytope & P)
{
  if (P.rows() == 0) { return false; }
  const double slack = detail::least_violation_point(P.T, P.d).second;
  return slack > 1e-9 * std::max(1.0, P.d.cwiseAbs().maxCoeff());
}

/**
 * @brief Drop rows that can be removed without enlarging the set.
 *
 * Zero rows and duplicate normals are merged first; the result is row-normalized.
 * A row is redundant when maximizing its normal over the remaining rows (with the row
 * itself relaxed by one unit) stays within its own offset.
 */
inline Polytope remove_redundancy(const Polytope & P, double tol = 1e-9)
{
  const Polytope N = P.normalized();
  const Eigen::Index n = N.dim();

  std::vector<Eigen::Index> candidates;
  for (Eigen::Index i = 0; i < N.rows(); ++i) {
    if (N.T.row(i).norm() == 0.0) {
      if (N.d(i) < 0.0) { throw Error(ErrorKind::EmptyResult, "remove_redundancy: infeasible zero row"); }
      continue;
    }
    bool merged = false;
    for (auto & k : candidates) {
      if ((N.T.row(i) - N.T.row(k)).cwiseAbs().maxCoeff() <= 1e-12) {
        if (N.d(i) < N.d(k)) { k = i; }
        merged = true;
        break;
      }
    }
    if (!merged) { candidates.push_back(i); }
  }

  std::vector<char> keep(candidates.size(), 1);
  for (std::size_t a = 0; a < candidates.size(); ++a) {
    std::vector<Eigen::Index> others;
    for (std::size_t b = 0; b < candidates.size(); ++b) {
      if (b != a && keep[b]) { others.push_back(candidates[b]); }
    }
    const auto m = static_cast<Eigen::Index>(others.size());
    Eigen::MatrixXd T(m + 1, n);
    Eigen::VectorXd d(m + 1);
    for (Eigen::Index k = 0; k < m; ++k) {
      T.row(k) = N.T.row(others[static_cast<std::size_t>(k)]);
      d(k) = N.d(others[static_cast<std::size_t>(k)]);
    }
    const Eigen::Index row = candidates[a];
    T.row(m) = N.T.row(row);
    d(m) = N.d(row) + 1.0;
    const double reach = -solve_lp(-N.T.row(row).transpose(), Polytope(T, d)).value;
    if (reach <= N.d(row) + tol) { keep[a] = 0; }
  }

  std::vector<Eigen::Index> kept;
  for (std::size_t a = 0; a < candidates.size(); ++a) {
    if (keep[a]) { kept.push_back(candidates[a]); }
  }
  Eigen::MatrixXd T(static_cast<Eigen::Index>(kept.size()), n);
  Eigen::VectorXd d(static_cast<Eigen::Index>(kept.size()));
  for (std::size_t k = 0; k < kept.size(); ++k) {
    T.row(static_cast<Eigen::Index>(k)) = N.T.row(kept[k]);
    d(static_cast<Eigen::Index>(k)) = N.d(kept[k]);
  }
  return {std::move(T), std::move(d)};
}

/// P minus S: every offset shrunk by the support of S along its row.
inline Polytope pontryagin_difference(const Polytope & P, const Polytope & S)
{
  if (P.dim() != S.dim()) { throw Error(ErrorKind::InvalidArgument, "pontryagin_difference: dimension mismatch"); }
  Polytope out = P;
  for (Eigen::Index i = 0; i < P.rows(); ++i) { out.d(i) -= support(S, P.T.row(i).transpose()); }
  if (is_empty(out)) { throw Error(ErrorKind::EmptyResult, "pontryagin_difference: result is empty"); }
  return out;
}

namespace detail {

inline double cross2(const Eigen::Vector2d & o, const Eigen::Vector2d & a, const Eigen::Vector2d & b)
{
  return (a.x() - o.x()) * (b.y() - o.y()) - (a.y() - o.y()) * (b.x() - o.x());
}

/// Convex hull (counter-clockwise, no repeated points) of a planar point set.
inline std::vector<Eigen::Vector2d> convex_hull_2d(std::vector<Eigen::Vector2d> pts, double tol = 1e-12)
{
  std::sort(pts.begin(), pts.end(), [](const auto & a, const auto & b) {
    return a.x() < b.x() || (a.x() == b.x() && a.y() < b.y());
  });
  if (pts.size() < 3) { return pts; }
  std::vector<Eigen::Vector2d> hull(2 * pts.size());
  std::size_t k = 0;
  double scale = 1.0;
  for (const auto & p : pts) { scale = std::max(scale, p.cwiseAbs().maxCoeff()); }
  const double eps = tol * scale * scale;
  for (const auto & p : pts) {
    while (k >= 2 && cross2(hull[k - 2], hull[k - 1], p) <= eps) { --k; }
    hull[k++] = p;
  }
  const std::size_t lower = k + 1;
  for (auto it = pts.rbegin() + 1; it != pts.rend(); ++it) {
    while (k >= lower && cross2(hull[k - 2], hull[k - 1], *it) <= eps) { --k; }
    hull[k++] = *it;
  }
  hull.resize(k - 1);
  return hull;
}

/// Halfspace form of the convex hull of planar points, including segments and single points.
inline Polytope hull_to_polytope_2d(const std::vector<Eigen::Vector2d> & pts)
{
  auto hull = convex_hull_2d(pts);
  std::vector<Eigen::Vector2d> uniq;
  for (const auto & p : hull) {
    bool dup = false;
    for (const auto & u : uniq) { dup = dup || (p - u).norm() <= 1e-12 * std::max(1.0, u.norm()); }
    if (!dup) { uniq.push_back(p); }
  }
  if (uniq.empty()) { throw Error(ErrorKind::EmptyResult, "hull of an empty point set"); }
  if (uniq.size() == 1) {
    return Polytope::box(uniq[0], uniq[0]);
  }
  if (uniq.size() == 2) {
    const Eigen::Vector2d dir = (uniq[1] - uniq[0]).normalized();
    const Eigen::Vector2d nrm(-dir.y(), dir.x());
    Eigen::MatrixXd T(4, 2);
    Eigen::VectorXd d(4);
    T.row(0) = nrm.transpose();
    d(0) = nrm.dot(uniq[0]);
    T.row(1) = -nrm.transpose();
    d(1) = -nrm.dot(uniq[0]);
    T.row(2) = dir.transpose();
    d(2) = std::max(dir.dot(uniq[0]), dir.dot(uniq[1]));
    T.row(3) = -dir.transpose();
    d(3) = -std::min(dir.dot(uniq[0]), dir.dot(uniq[1]));
    return {T, d};
  }
  const auto m = static_cast<Eigen::Index>(uniq.size());
  Eigen::MatrixXd T(m, 2);
  Eigen::VectorXd d(m);
  for (Eigen::Index i = 0; i < m; ++i) {
    const Eigen::Vector2d & a = uniq[static_cast<std::size_t>(i)];
    const Eigen::Vector2d & b = uniq[static_cast<std::size_t>((i + 1) % m)];
    const Eigen::Vector2d edge = b - a;
    const Eigen::Vector2d nrm = Eigen::Vector2d(edge.y(), -edge.x()).normalized();
    T.row(i) = nrm.transpose();
    d(i) = nrm.dot(a);
  }
  return {T, d};
}

}  // namespace detail

/**
 * @brief Vertices of a bounded polytope in one or two dimensions.
 *
 * Planar polygons are returned counter-clockwise. The polygon is obtained by clipping
 * its bounding box with every halfspace.
 */
inline std::vector<Eigen::VectorXd> vertices(const Polytope & P)
{
  const Eigen::Index n = P.dim();
  if (n > 2) { throw Error(ErrorKind::DimensionTooHigh, "vertex enumeration supports dimension <= 2"); }
  if (is_empty(P)) { return {}; }
  auto [lo, hi] = bounding_box(P);
  if (n == 1) {
    std::vector<Eigen::VectorXd> out{lo};
    if (hi(0) - lo(0) > 1e-12 * std::max(1.0, std::abs(lo(0)))) { out.push_back(hi); }
    return out;
  }

  const double pad = 1e-9 * std::max(1.0, (hi - lo).cwiseAbs().maxCoeff());
  std::vector<Eigen::Vector2d> poly{
    {lo(0) - pad, lo(1) - pad}, {hi(0) + pad, lo(1) - pad}, {hi(0) + pad, hi(1) + pad}, {lo(0) - pad, hi(1) + pad}};
  for (Eigen::Index i = 0; i < P.rows() && !poly.empty(); ++i) {
    const Eigen::Vector2d a = P.T.row(i).transpose();
    const double b = P.d(i);
    if (a.norm() == 0.0) { continue; }
    std::vector<Eigen::Vector2d> next;
    for (std::size_t k = 0; k < poly.size(); ++k) {
      const Eigen::Vector2d & cur = poly[k];
      const Eigen::Vector2d & nxt = poly[(k + 1) % poly.size()];
      const double fc = a.dot(cur) - b;
      const double fn = a.dot(nxt) - b;
      if (fc <= 0.0) { next.push_back(cur); }
      if ((fc < 0.0 && fn > 0.0) || (fc > 0.0 && fn < 0.0)) {
        const double t = fc / (fc - fn);
        next.push_back(cur + t * (nxt - cur));
      }
    }
    poly = std::move(next);
  }

  auto hull = detail::convex_hull_2d(poly, 1e-14);
  std::vector<Eigen::VectorXd> out;
  for (const auto & p : hull) {
    bool dup = false;
    for (const auto & q : out) { dup = dup || (p - q).norm() <= 1e-10 * std::max(1.0, p.norm()); }
    if (!dup) { out.emplace_back(p); }
  }
  if (out.empty() && !poly.empty()) { out.emplace_back(poly.front()); }
  return out;
}

/// Image {M x | x in P} for a source of dimension <= 2 and an image of dimension <= 2.
inline Polytope linear_map(const Eigen::MatrixXd & M, const Polytope & P)
{
  if (M.cols() != P.dim()) { throw Error(ErrorKind::InvalidArgument, "linear_map: dimension mismatch"); }
  if (M.rows() > 2 || P.dim() > 2) { throw Error(ErrorKind::DimensionTooHigh, "linear_map supports dimension <= 2"); }
  const auto verts = vertices(P);
  if (verts.empty()) { throw Error(ErrorKind::EmptyResult, "linear_map of an empty set"); }
  if (M.rows() == 1) {
    double lo = std::numeric_limits<double>::infinity();
    double hi = -lo;
    for (const auto & v : verts) {
      const double y = (M * v)(0);
      lo = std::min(lo, y);
      hi = std::max(hi, y);
    }
    return Polytope::box(Eigen::VectorXd::Constant(1, lo), Eigen::VectorXd::Constant(1, hi));
  }
  std::vector<Eigen::Vector2d> pts;
  for (const auto & v : verts) { pts.emplace_back(M * v); }
  return remove_redundancy(detail::hull_to_polytope_2d(pts));
}

/**
 * @brief All vertex sequences of the N-fold product of the box [lo, hi].
 *
 * Each sequence is a stacked vector of length s*N. The sequences are ordered
 * lexicographically with the first component most significant and lo before hi.
 */
inline std::vector<Eigen::VectorXd> box_vertices(const Eigen::VectorXd & lo, const Eigen::VectorXd & hi, int horizon)
{
  const Eigen::Index s = lo.size();
  const Eigen::Index len = s * horizon;
  if (len > 20) { throw Error(ErrorKind::TooManyVertices, "box_vertices: more than 2^20 vertex sequences"); }
  const std::size_t count = std::size_t{1} << static_cast<unsigned>(len);
  std::vector<Eigen::VectorXd> out;
  out.reserve(count);
  for (std::size_t idx = 0; idx < count; ++idx) {
    Eigen::VectorXd v(len);
    for (Eigen::Index j = 0; j < len; ++j) {
      const bool upper = (idx >> static_cast<unsigned>(len - 1 - j)) & 1U;
      v(j) = upper ? hi(j % s) : lo(j % s);
    }
    out.push_back(std::move(v));
  }
  return out;
}

/// Extracts [lo, hi] from a polytope that is an axis-aligned box, or nullopt otherwise.
inline std::optional<std::pair<Eigen::VectorXd, Eigen::VectorXd>> as_box(const Polytope & P)
{
  const Eigen::Index n = P.dim();
  Eigen::VectorXd lo = Eigen::VectorXd::Constant(n, -std::numeric_limits<double>::infinity());
  Eigen::VectorXd hi = Eigen::VectorXd::Constant(n, std::numeric_limits<double>::infinity());
  for (Eigen::Index i = 0; i < P.rows(); ++i) {
    Eigen::Index axis = -1;
    for (Eigen::Index j = 0; j < n; ++j) {
      if (P.T(i, j) != 0.0) {
        if (axis >= 0) { return std::nullopt; }
        axis = j;
      }
    }
    if (axis < 0) { continue; }
    const double bound = P.d(i) / P.T(i, axis);
    if (P.T(i, axis) > 0) {
      hi(axis) = std::min(hi(axis), bound);
    } else {
      lo(axis) = std::max(lo(axis), bound);
    }
  }
  if (!lo.allFinite() || !hi.allFinite()) { return std::nullopt; }
  return std::make_pair(lo, hi);
}

/// Diagnostics of an mRPI outer approximation.
struct MrpiInfo
{
  int terms = 0;
  double alpha = 0.0;
  /// Half-width of the box added to a lower-dimensional disturbance set.
  double inflation = 0.0;
};

/**
 * @brief Outer approximation of the minimal robust positively invariant set of x+ = A x + w, w in W.
 *
 * Returns (1 - alpha)^{-1} (W + A W + ... + A^{s-1} W) for the smallest s with
 * A^s W contained in alpha W and alpha <= alpha_max. When W is lower-dimensional it is
 * first inflated by a box of half-width 1e-3 * |W|, since the containment can never
 * hold for a flat set. The Minkowski sum is evaluated through support functions on a
 * fixed dictionary of normals (facet normals of every A^i W plus 64 spread directions).
 * Planar and scalar systems only.
 */
inline Polytope mrpi_approximation(
  const Eigen::MatrixXd & A, const Polytope & W, double alpha_max = 1e-2, MrpiInfo * info = nullptr)
{
  const Eigen::Index n = A.rows();
  if (n > 2) { throw Error(ErrorKind::DimensionTooHigh, "mrpi_approximation supports dimension <= 2"); }
  if (W.dim() != n) { throw Error(ErrorKind::InvalidArgument, "mrpi_approximation: dimension mismatch"); }

  // Full-dimensional disturbance set in vertex form.
  std::vector<Eigen::VectorXd> wverts = vertices(W);
  double inflation = 0.0;
  Polytope Wfull = W;
  if (n == 2) {
    std::vector<Eigen::Vector2d> pts;
    for (const auto & v : wverts) { pts.emplace_back(v); }
    const auto hull = detail::convex_hull_2d(pts);
    if (hull.size() < 3) {
      double extent = 0.0;
      for (const auto & v : wverts) { extent = std::max(extent, v.cwiseAbs().maxCoeff()); }
      inflation = 1e-3 * std::max(extent, 1e-12);
      std::vector<Eigen::Vector2d> grown;
      for (const auto & v : pts) {
        for (double sx : {-1.0, 1.0}) {
          for (double sy : {-1.0, 1.0}) { grown.emplace_back(v + inflation * Eigen::Vector2d(sx, sy)); }
        }
      }
      Wfull = remove_redundancy(detail::hull_to_polytope_2d(grown));
      wverts = vertices(Wfull);
    } else {
      Wfull = remove_redundancy(W);
    }
  } else {
    auto [lo, hi] = bounding_box(W);
    if (hi(0) - lo(0) <= 0.0) {
      inflation = 1e-3 * std::max(std::abs(lo(0)), 1e-12);
      lo(0) -= inflation;
      hi(0) += inflation;
    }
    Wfull = Polytope::box(lo, hi);
    wverts = vertices(Wfull);
  }
  for (Eigen::Index j = 0; j < Wfull.rows(); ++j) {
    if (!(Wfull.d(j) > 0.0)) {
      throw Error(ErrorKind::InvalidArgument, "mrpi_approximation: W must contain the origin in its interior");
    }
  }

  auto h_w = [&](const Eigen::VectorXd & a) {
    double best = -std::numeric_limits<double>::infinity();
    for (const auto & v : wverts) { best = std::max(best, a.dot(v)); }
    return best;
  };

  // Smallest s with A^s W inside alpha W.
  Eigen::MatrixXd power = Eigen::MatrixXd::Identity(n, n);
  int terms = 0;
  double alpha = 0.0;
  for (int s = 1;; ++s) {
    if (s > 200) { throw Error(ErrorKind::NoConvergence, "mrpi_approximation: more than 200 terms"); }
    power = A * power;
    alpha = 0.0;
    for (Eigen::Index j = 0; j < Wfull.rows(); ++j) {
      alpha = std::max(alpha, h_w(power.transpose() * Wfull.T.row(j).transpose()) / Wfull.d(j));
    }
    if (alpha <= alpha_max) {
      terms = s;
      break;
    }
  }

  std::vector<Eigen::VectorXd> normals;
  if (n == 1) {
    normals = {Eigen::VectorXd::Constant(1, 1.0), Eigen::VectorXd::Constant(1, -1.0)};
  } else {
    constexpr int kSpread = 64;
    for (int k = 0; k < kSpread; ++k) {
      const double th = 2.0 * std::numbers::pi * k / kSpread;
      normals.emplace_back(Eigen::Vector2d(std::cos(th), std::sin(th)));
    }
    Eigen::MatrixXd Ai = Eigen::MatrixXd::Identity(n, n);
    for (int i = 0; i < terms; ++i) {
      std::vector<Eigen::Vector2d> img;
      for (const auto & v : wverts) { img.emplace_back(Ai * v); }
      const Polytope face = detail::hull_to_polytope_2d(img);
      for (Eigen::Index j = 0; j < face.rows(); ++j) { normals.emplace_back(face.T.row(j).transpose()); }
      Ai = A * Ai;
    }
  }

  const double scale = 1.0 / (1.0 - alpha);
  Eigen::MatrixXd T(static_cast<Eigen::Index>(normals.size()), n);
  Eigen::VectorXd d(static_cast<Eigen::Index>(normals.size()));
  for (std::size_t k = 0; k < normals.size(); ++k) {
    const Eigen::VectorXd a = normals[k].normalized();
    double h = 0.0;
    Eigen::MatrixXd Ai = Eigen::MatrixXd::Identity(n, n);
    for (int i = 0; i < terms; ++i) {
      h += h_w(Ai.transpose() * a);
      Ai = A * Ai;
    }
    T.row(static_cast<Eigen::Index>(k)) = a.transpose();
    d(static_cast<Eigen::Index>(k)) = scale * h;
  }
  if (info != nullptr) { *info = MrpiInfo{terms, alpha, inflation}; }
  return remove_redundancy(Polytope(T, d));
}

/**
 * @brief Maximal positively invariant subset of S for x+ = A_K x (Gilbert and Tan).
 *
 * Rows S.T A_K^k are appended until every new row is redundant; the result is
 * redundancy-free and row-normalized.
 */
inline Polytope maximal_admissible_set(const Eigen::MatrixXd & A_K, const Polytope & S, int max_k = 500, double tol = 1e-9)
{
  if (A_K.rows() != S.dim() || A_K.cols() != S.dim()) {
    throw Error(ErrorKind::InvalidArgument, "maximal_admissible_set: dimension mismatch");
  }
  Polytope omega = S;
  Eigen::MatrixXd power = Eigen::MatrixXd::Identity(S.dim(), S.dim());
  for (int k = 1; k <= max_k; ++k) {
    power = A_K * power;
    const Eigen::MatrixXd rows = S.T * power;
    bool all_redundant = true;
    for (Eigen::Index i = 0; i < rows.rows() && all_redundant; ++i) {
      double reach = 0.0;
      try {
        reach = support(omega, rows.row(i).transpose());
      } catch (const Error & e) {
        if (e.kind() != ErrorKind::Unbounded) { throw; }
        reach = std::numeric_limits<double>::infinity();
      }
      all_redundant = reach <= S.d(i) + tol;
    }
    if (all_redundant) { return remove_redundancy(omega); }
    omega = omega.intersect(Polytope(rows, S.d));
  }
  throw Error(ErrorKind::NoTermination, "maximal_admissible_set: no finite determination within the step limit");
}

/**
 * @brief Order-insensitive row comparison of two normalized polytopes.
 *
 * Each reference row is greedily paired with the closest unused candidate row; the
 * result is the largest entry-wise deviation over (T, d), or infinity on a row count mismatch.
 */
inline double row_match_error(const Polytope & candidate, const Polytope & reference)
{
  if (candidate.rows() != reference.rows() || candidate.dim() != reference.dim()) {
    return std::numeric_limits<double>::infinity();
  }
  const Polytope a = candidate.normalized();
  const Polytope b = reference.normalized();
  std::vector<char> used(static_cast<std::size_t>(a.rows()), 0);
  double worst = 0.0;
  for (Eigen::Index i = 0; i < b.rows(); ++i) {
    double best = std::numeric_limits<double>::infinity();
    Eigen::Index pick = -1;
    for (Eigen::Index j = 0; j < a.rows(); ++j) {
      if (used[static_cast<std::size_t>(j)]) { continue; }
      const double dev = std::max((a.T.row(j) - b.T.row(i)).cwiseAbs().maxCoeff(), std::abs(a.d(j) - b.d(i)));
      if (dev < best) {
        best = dev;
        pick = j;
      }
    }
    used[static_cast<std::size_t>(pick)] = 1;
    worst = std::max(worst, best);
  }
  return worst;
}

/// Largest support-function gap |h_a(t) - h_b(t)| over the normals of `reference`.
inline double support_gap(const Polytope & candidate, const Polytope & reference)
{
  double worst = 0.0;
  const Polytope ref = reference.normalized();
  for (Eigen::Index i = 0; i < ref.rows(); ++i) {
    const Eigen::VectorXd t = ref.T.row(i).transpose();
    worst = std::max(worst, std::abs(support(candidate, t) - support(ref, t)));
  }
  return worst;
}

}  // namespace rmpc
