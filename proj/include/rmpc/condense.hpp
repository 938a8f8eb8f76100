#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "rmpc/error.hpp"
#include "rmpc/geometry.hpp"
#include "rmpc/io.hpp"
#include "rmpc/polytope.hpp"

namespace rmpc {

enum class Formulation { MinMax, Tube, Nominal };

inline std::string_view to_string(Formulation f)
{
  switch (f) {
    case Formulation::MinMax: return "minmax";
    case Formulation::Tube: return "tube";
    case Formulation::Nominal: return "nominal";
  }
  return "unknown";
}

inline Formulation formulation_from_string(std::string_view name)
{
  if (name == "minmax") { return Formulation::MinMax; }
  if (name == "tube") { return Formulation::Tube; }
  if (name == "nominal") { return Formulation::Nominal; }
  throw Error(ErrorKind::InvalidArgument, "unknown formulation '" + std::string(name) + "'");
}

/// x+ = A x + B u + D w with the pre-stabilizing gain u = -K_inf x + v.
struct LtiSystem
{
  Eigen::MatrixXd A;
  Eigen::MatrixXd B;
  Eigen::MatrixXd D;
  Eigen::MatrixXd K_inf;
  Eigen::MatrixXd A_cl;

  LtiSystem() = default;
  LtiSystem(Eigen::MatrixXd A_, Eigen::MatrixXd B_, Eigen::MatrixXd D_, Eigen::MatrixXd K)
      : A(std::move(A_)), B(std::move(B_)), D(std::move(D_)), K_inf(std::move(K))
  {
    if (A.rows() != A.cols() || B.rows() != A.rows() || D.rows() != A.rows() || K_inf.rows() != B.cols() ||
        K_inf.cols() != A.rows()) {
      throw Error(ErrorKind::InvalidArgument, "LtiSystem: inconsistent dimensions");
    }
    A_cl = A - B * K_inf;
  }

  Eigen::Index n() const { return A.rows(); }
  Eigen::Index m() const { return B.cols(); }
  Eigen::Index s() const { return D.cols(); }

  double closed_loop_spectral_radius() const { return A_cl.eigenvalues().cwiseAbs().maxCoeff(); }
};

struct ProblemData
{
  LtiSystem system;
  Polytope X;
  Polytope U;
  Polytope Dset;
  Eigen::MatrixXd Q;
  Eigen::MatrixXd R;
  Eigen::MatrixXd P;
  Polytope terminal;
  int N = 1;

  void validate() const
  {
    const Eigen::Index n = system.n();
    const Eigen::Index m = system.m();
    if (N < 1) { throw Error(ErrorKind::InvalidArgument, "horizon must be at least 1"); }
    if (X.dim() != n || U.dim() != m || Dset.dim() != system.s() || terminal.dim() != n) {
      throw Error(ErrorKind::InvalidArgument, "ProblemData: set dimensions do not match the system");
    }
    if (Q.rows() != n || P.rows() != n || R.rows() != m) {
      throw Error(ErrorKind::InvalidArgument, "ProblemData: weight dimensions do not match the system");
    }
    if (Eigen::LLT<Eigen::MatrixXd>(R).info() != Eigen::Success ||
        Eigen::LLT<Eigen::MatrixXd>(P).info() != Eigen::Success) {
      throw Error(ErrorKind::InvalidArgument, "ProblemData: R and P must be positive definite");
    }
    if (Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(Q).eigenvalues().minCoeff() < -1e-12) {
      throw Error(ErrorKind::InvalidArgument, "ProblemData: Q must be positive semidefinite");
    }
  }
};

/// Stacked prediction X = Phi x + Gamma_v V + Gamma_w W of x(1..N) under x+ = A_cl x + B v + D w.
struct PredictionMatrices
{
  Eigen::MatrixXd Phi;
  Eigen::MatrixXd Gamma_v;
  Eigen::MatrixXd Gamma_w;
};

inline PredictionMatrices build_prediction(const LtiSystem & sys, int N)
{
  const Eigen::Index n = sys.n(), m = sys.m(), s = sys.s();
  PredictionMatrices pm;
  pm.Phi = Eigen::MatrixXd::Zero(n * N, n);
  pm.Gamma_v = Eigen::MatrixXd::Zero(n * N, m * N);
  pm.Gamma_w = Eigen::MatrixXd::Zero(n * N, s * N);
  std::vector<Eigen::MatrixXd> powers{Eigen::MatrixXd::Identity(n, n)};
  for (int i = 1; i <= N; ++i) { powers.push_back(sys.A_cl * powers.back()); }
  for (int i = 0; i < N; ++i) {
    pm.Phi.middleRows(i * n, n) = powers[static_cast<std::size_t>(i + 1)];
    for (int j = 0; j <= i; ++j) {
      pm.Gamma_v.block(i * n, j * m, n, m) = powers[static_cast<std::size_t>(i - j)] * sys.B;
      pm.Gamma_w.block(i * n, j * s, n, s) = powers[static_cast<std::size_t>(i - j)] * sys.D;
    }
  }
  return pm;
}

inline PredictionMatrices build_prediction(const ProblemData & data) { return build_prediction(data.system, data.N); }

/**
 * @brief Condensed QP  min 1/2 e' Hhat e + c' e  s.t.  G e <= W + S x.
 *
 * For the min-max formulation e = (Z, gamma) with Z = V + H^{-1} L' x; the first r rows
 * are the epigraph rows (one per disturbance vertex sequence), the remaining l rows are
 * state, input and terminal constraints. Every row is scaled to unit norm of [G_i S_i].
 */
struct CondensedQp
{
  Formulation formulation = Formulation::MinMax;
  int N = 0;
  Eigen::Index n = 0, m = 0, s = 0;

  Eigen::MatrixXd H;
  Eigen::MatrixXd L;
  Eigen::MatrixXd Hhat;
  Eigen::VectorXd c;
  Eigen::MatrixXd G;
  Eigen::VectorXd W;
  Eigen::MatrixXd S;
  Eigen::Index r = 0;
  Eigen::Index l = 0;

  /// Applied input u = u_eps e + u_x x.
  Eigen::MatrixXd u_eps;
  Eigen::MatrixXd u_x;
  /// Correction sequence V = v_eps e + v_x x.
  Eigen::MatrixXd v_eps;
  Eigen::MatrixXd v_x;
  /// Objective + x' cost_offset x equals the worst-case (or nominal) horizon cost.
  Eigen::MatrixXd cost_offset;

  Eigen::MatrixXd K_inf;
  Polytope state_set;
  Polytope input_set;

  Eigen::Index p() const { return G.cols(); }
  Eigen::Index q() const { return G.rows(); }
  Eigen::VectorXd rhs(const Eigen::VectorXd & x) const { return W + S * x; }
  double objective(const Eigen::VectorXd & e) const { return 0.5 * e.dot(Hhat * e) + c.dot(e); }
  Eigen::VectorXd input(const Eigen::VectorXd & e, const Eigen::VectorXd & x) const { return u_eps * e + u_x * x; }
};

namespace detail {

/// Quadratic form M over zeta = (x0, V[, W]) of the horizon cost.
struct HorizonCost
{
  Eigen::MatrixXd M;
  /// Affine maps zeta -> x(i), i = 0..N, and zeta -> u(i), i = 0..N-1.
  std::vector<Eigen::MatrixXd> state_maps;
  std::vector<Eigen::MatrixXd> input_maps;
};

inline HorizonCost horizon_cost(const ProblemData & data, bool with_disturbance)
{
  const auto & sys = data.system;
  const Eigen::Index n = sys.n(), m = sys.m(), s = sys.s();
  const int N = data.N;
  const Eigen::Index nw = with_disturbance ? s * N : 0;
  const Eigen::Index dim = n + m * N + nw;
  const PredictionMatrices pm = build_prediction(sys, N);

  HorizonCost hc;
  hc.M = Eigen::MatrixXd::Zero(dim, dim);
  for (int i = 0; i <= N; ++i) {
    Eigen::MatrixXd Sx = Eigen::MatrixXd::Zero(n, dim);
    if (i == 0) {
      Sx.leftCols(n).setIdentity();
    } else {
      Sx.leftCols(n) = pm.Phi.middleRows((i - 1) * n, n);
      Sx.middleCols(n, m * N) = pm.Gamma_v.middleRows((i - 1) * n, n);
      if (with_disturbance) { Sx.rightCols(nw) = pm.Gamma_w.middleRows((i - 1) * n, n); }
    }
    if (i < N) {
      Eigen::MatrixXd Su = -sys.K_inf * Sx;
      Su.middleCols(n + i * m, m) += Eigen::MatrixXd::Identity(m, m);
      hc.M += Sx.transpose() * data.Q * Sx + Su.transpose() * data.R * Su;
      hc.input_maps.push_back(std::move(Su));
    } else {
      hc.M += Sx.transpose() * data.P * Sx;
    }
    hc.state_maps.push_back(std::move(Sx));
  }
  hc.M = 0.5 * (hc.M + hc.M.transpose()).eval();
  return hc;
}

struct RowBuffer
{
  std::vector<Eigen::VectorXd> G;
  std::vector<double> W;
  std::vector<Eigen::VectorXd> S;

  void add(Eigen::VectorXd g, double w, Eigen::VectorXd s)
  {
    G.push_back(std::move(g));
    W.push_back(w);
    S.push_back(std::move(s));
  }

  void emit(CondensedQp & qp, Eigen::Index p, Eigen::Index n) const
  {
    const auto q = static_cast<Eigen::Index>(G.size());
    qp.G.resize(q, p);
    qp.W.resize(q);
    qp.S.resize(q, n);
    for (Eigen::Index i = 0; i < q; ++i) {
      const auto k = static_cast<std::size_t>(i);
      const double scale = std::sqrt(G[k].squaredNorm() + S[k].squaredNorm());
      const double f = scale > 0.0 ? 1.0 / scale : 1.0;
      qp.G.row(i) = f * G[k].transpose();
      qp.W(i) = f * W[k];
      qp.S.row(i) = f * S[k].transpose();
    }
  }
};

inline std::pair<Eigen::VectorXd, Eigen::VectorXd> disturbance_box(const Polytope & Dset)
{
  auto box = as_box(Dset);
  if (!box) { throw Error(ErrorKind::InvalidArgument, "disturbance set must be an axis-aligned box"); }
  return *box;
}

/// max over the product box of coeff' W.
inline double box_support(const Eigen::VectorXd & coeff, const Eigen::VectorXd & lo, const Eigen::VectorXd & hi)
{
  const Eigen::Index s = lo.size();
  double h = 0.0;
  for (Eigen::Index k = 0; k < coeff.size(); ++k) { h += std::max(coeff(k) * lo(k % s), coeff(k) * hi(k % s)); }
  return h;
}

}  // namespace detail

/**
 * @brief Epigraph condensation of the min-max problem.
 *
 * The horizon cost J(x, V, W) is collected into H (V-quadratic part) and L (x-V cross
 * term); with Z = V + H^{-1} L' x, the W-dependent remainder is affine in Z for every
 * fixed vertex sequence W_j and becomes the epigraph row 2 (M_vw W_j)' Z - gamma <= ...
 * State, input and terminal rows hold for every disturbance sequence; each offset is
 * tightened by the row-wise worst case over the disturbance box.
 */
inline CondensedQp build_minmax_qp(const ProblemData & data)
{
  data.validate();
  const auto & sys = data.system;
  const Eigen::Index n = sys.n(), m = sys.m(), s = sys.s();
  const int N = data.N;
  const Eigen::Index mN = m * N, sN = s * N;
  if (is_empty(data.terminal)) { throw Error(ErrorKind::EmptyTerminal, "terminal set is empty"); }

  const auto [lo, hi] = detail::disturbance_box(data.Dset);
  std::vector<Eigen::VectorXd> verts;
  try {
    verts = box_vertices(lo, hi, N);
  } catch (const Error &) {
    throw Error(ErrorKind::VertexLimit, "too many disturbance vertex sequences");
  }

  const detail::HorizonCost hc = detail::horizon_cost(data, true);
  const Eigen::MatrixXd Mxx = hc.M.topLeftCorner(n, n);
  const Eigen::MatrixXd Mxv = hc.M.block(0, n, n, mN);
  const Eigen::MatrixXd Mxw = hc.M.block(0, n + mN, n, sN);
  const Eigen::MatrixXd Mvv = hc.M.block(n, n, mN, mN);
  const Eigen::MatrixXd Mvw = hc.M.block(n, n + mN, mN, sN);
  const Eigen::MatrixXd Mww = hc.M.bottomRightCorner(sN, sN);

  CondensedQp qp;
  qp.formulation = Formulation::MinMax;
  qp.N = N;
  qp.n = n;
  qp.m = m;
  qp.s = s;
  qp.H = 2.0 * Mvv;
  qp.L = 2.0 * Mxv;
  const Eigen::LLT<Eigen::MatrixXd> Hllt(qp.H);
  if (Hllt.info() != Eigen::Success) { throw Error(ErrorKind::InvalidArgument, "H is not positive definite"); }
  const Eigen::MatrixXd HinvLt = Hllt.solve(qp.L.transpose());
  const Eigen::Index p = mN + 1;

  detail::RowBuffer rows;
  for (const auto & Wj : verts) {
    Eigen::VectorXd g(p);
    g.head(mN) = 2.0 * Mvw * Wj;
    g(mN) = -1.0;
    const double w = -Wj.dot(Mww * Wj);
    const Eigen::VectorXd srow = -2.0 * (Mxw * Wj - qp.L * (Hllt.solve(Mvw * Wj)));
    rows.add(std::move(g), w, srow);
  }

  auto add_constraint = [&](const Eigen::MatrixXd & map, const Polytope & set) {
    for (Eigen::Index k = 0; k < set.rows(); ++k) {
      const Eigen::RowVectorXd coeff = set.T.row(k) * map;
      const Eigen::VectorXd cx = coeff.head(n).transpose();
      const Eigen::VectorXd cv = coeff.segment(n, mN).transpose();
      const Eigen::VectorXd cw = coeff.tail(sN).transpose();
      Eigen::VectorXd g = Eigen::VectorXd::Zero(p);
      g.head(mN) = cv;
      const double w = set.d(k) - detail::box_support(cw, lo, hi);
      Eigen::VectorXd srow = -cx + HinvLt.transpose() * cv;
      rows.add(std::move(g), w, std::move(srow));
    }
  };
  for (int i = 0; i < N; ++i) {
    add_constraint(hc.state_maps[static_cast<std::size_t>(i)], data.X);
    add_constraint(hc.input_maps[static_cast<std::size_t>(i)], data.U);
  }
  add_constraint(hc.state_maps.back(), data.terminal);

  rows.emit(qp, p, n);
  qp.r = static_cast<Eigen::Index>(verts.size());
  qp.l = qp.q() - qp.r;

  qp.Hhat = Eigen::MatrixXd::Zero(p, p);
  qp.Hhat.topLeftCorner(mN, mN) = qp.H;
  qp.c = Eigen::VectorXd::Unit(p, mN);

  qp.u_eps = Eigen::MatrixXd::Zero(m, p);
  qp.u_eps.leftCols(m).setIdentity();
  qp.u_x = -sys.K_inf - HinvLt.topRows(m);
  qp.v_eps = Eigen::MatrixXd::Zero(mN, p);
  qp.v_eps.leftCols(mN).setIdentity();
  qp.v_x = -HinvLt;
  qp.cost_offset = Mxx - 0.5 * qp.L * HinvLt;
  qp.K_inf = sys.K_inf;
  qp.state_set = data.X;
  qp.input_set = data.U;
  return qp;
}

/// Nominal condensed MPC in Z = V + H^{-1} L' x: no disturbance, no tightening, no epigraph.
inline CondensedQp build_nominal_qp(const ProblemData & data)
{
  data.validate();
  const auto & sys = data.system;
  const Eigen::Index n = sys.n(), m = sys.m();
  const int N = data.N;
  const Eigen::Index mN = m * N;
  if (is_empty(data.terminal)) { throw Error(ErrorKind::EmptyTerminal, "terminal set is empty"); }

  const detail::HorizonCost hc = detail::horizon_cost(data, false);
  CondensedQp qp;
  qp.formulation = Formulation::Nominal;
  qp.N = N;
  qp.n = n;
  qp.m = m;
  qp.s = sys.s();
  qp.H = 2.0 * hc.M.block(n, n, mN, mN);
  qp.L = 2.0 * hc.M.block(0, n, n, mN);
  const Eigen::LLT<Eigen::MatrixXd> Hllt(qp.H);
  if (Hllt.info() != Eigen::Success) { throw Error(ErrorKind::InvalidArgument, "H is not positive definite"); }
  const Eigen::MatrixXd HinvLt = Hllt.solve(qp.L.transpose());

  detail::RowBuffer rows;
  auto add_constraint = [&](const Eigen::MatrixXd & map, const Polytope & set) {
    for (Eigen::Index k = 0; k < set.rows(); ++k) {
      const Eigen::RowVectorXd coeff = set.T.row(k) * map;
      const Eigen::VectorXd cx = coeff.head(n).transpose();
      const Eigen::VectorXd cv = coeff.segment(n, mN).transpose();
      rows.add(cv, set.d(k), -cx + HinvLt.transpose() * cv);
    }
  };
  for (int i = 0; i < N; ++i) {
    add_constraint(hc.state_maps[static_cast<std::size_t>(i)], data.X);
    add_constraint(hc.input_maps[static_cast<std::size_t>(i)], data.U);
  }
  add_constraint(hc.state_maps.back(), data.terminal);
  rows.emit(qp, mN, n);
  qp.r = 0;
  qp.l = qp.q();

  qp.Hhat = qp.H;
  qp.c = Eigen::VectorXd::Zero(mN);
  qp.u_eps = Eigen::MatrixXd::Zero(m, mN);
  qp.u_eps.leftCols(m).setIdentity();
  qp.u_x = -sys.K_inf - HinvLt.topRows(m);
  qp.v_eps = Eigen::MatrixXd::Identity(mN, mN);
  qp.v_x = -HinvLt;
  qp.cost_offset = hc.M.topLeftCorner(n, n) - 0.5 * qp.L * HinvLt;
  qp.K_inf = sys.K_inf;
  qp.state_set = data.X;
  qp.input_set = data.U;
  return qp;
}

/**
 * @brief Tube formulation over e = (nominal initial state, nominal correction sequence).
 *
 * Rows: x - x0bar in R, nominal states in X - R and inputs in U - K_inf R over the
 * horizon, nominal terminal state in the terminal set. The applied input is
 * u = -K_inf (x - x0bar) + u0bar = -K_inf x + v0bar.
 */
inline CondensedQp build_tube_qp(const ProblemData & data, const Polytope & R_set)
{
  data.validate();
  const auto & sys = data.system;
  const Eigen::Index n = sys.n(), m = sys.m();
  const int N = data.N;
  const Eigen::Index mN = m * N;
  const Eigen::Index p = n + mN;
  if (R_set.dim() != n) { throw Error(ErrorKind::InvalidArgument, "tube: RPI set dimension mismatch"); }
  if (is_empty(data.terminal)) { throw Error(ErrorKind::EmptyTerminal, "terminal set is empty"); }

  Polytope Xt, Ut;
  try {
    Xt = pontryagin_difference(data.X, R_set);
    Ut = data.U;
    for (Eigen::Index k = 0; k < Ut.rows(); ++k) {
      Ut.d(k) -= support(R_set, sys.K_inf.transpose() * data.U.T.row(k).transpose());
    }
    if (is_empty(Ut)) { throw Error(ErrorKind::EmptyResult, "tightened input set is empty"); }
  } catch (const Error & e) {
    if (e.kind() != ErrorKind::EmptyResult) { throw; }
    throw Error(ErrorKind::EmptyTightened, e.what());
  }

  const detail::HorizonCost hc = detail::horizon_cost(data, false);
  CondensedQp qp;
  qp.formulation = Formulation::Tube;
  qp.N = N;
  qp.n = n;
  qp.m = m;
  qp.s = sys.s();
  qp.H = 2.0 * hc.M;
  qp.L = Eigen::MatrixXd::Zero(n, p);
  if (Eigen::LLT<Eigen::MatrixXd>(qp.H).info() != Eigen::Success) {
    throw Error(ErrorKind::InvalidArgument, "tube Hessian is not positive definite");
  }

  detail::RowBuffer rows;
  for (Eigen::Index k = 0; k < R_set.rows(); ++k) {
    Eigen::VectorXd g = Eigen::VectorXd::Zero(p);
    g.head(n) = -R_set.T.row(k).transpose();
    rows.add(std::move(g), R_set.d(k), -R_set.T.row(k).transpose());
  }
  auto add_constraint = [&](const Eigen::MatrixXd & map, const Polytope & set) {
    for (Eigen::Index k = 0; k < set.rows(); ++k) {
      rows.add((set.T.row(k) * map).transpose(), set.d(k), Eigen::VectorXd::Zero(n));
    }
  };
  for (int i = 0; i < N; ++i) {
    add_constraint(hc.state_maps[static_cast<std::size_t>(i)], Xt);
    add_constraint(hc.input_maps[static_cast<std::size_t>(i)], Ut);
  }
  add_constraint(hc.state_maps.back(), data.terminal);
  rows.emit(qp, p, n);
  qp.r = 0;
  qp.l = qp.q();

  qp.Hhat = qp.H;
  qp.c = Eigen::VectorXd::Zero(p);
  qp.u_eps = Eigen::MatrixXd::Zero(m, p);
  qp.u_eps.middleCols(n, m).setIdentity();
  qp.u_x = -sys.K_inf;
  qp.v_eps = Eigen::MatrixXd::Zero(mN, p);
  qp.v_eps.rightCols(mN).setIdentity();
  qp.v_x = Eigen::MatrixXd::Zero(mN, n);
  qp.cost_offset = Eigen::MatrixXd::Zero(n, n);
  qp.K_inf = sys.K_inf;
  qp.state_set = data.X;
  qp.input_set = data.U;
  return qp;
}

/// Closed-form row count of a formulation.
inline std::int64_t constraint_counts(
  Formulation formulation, int N, int s, int m, int n, int q_R, int q_TM, int q_TT)
{
  const std::int64_t box_rows = 2LL * N * (m + n);
  switch (formulation) {
    case Formulation::MinMax: {
      std::int64_t vertices = 1;
      for (int i = 0; i < N; ++i) { vertices *= 2LL * s; }
      return vertices + box_rows + q_TM;
    }
    case Formulation::Tube: return q_R + box_rows + q_TT;
    case Formulation::Nominal: return box_rows + q_TM;
  }
  return 0;
}

/**
 * @brief Largest horizon for which the min-max QP has fewer rows than the tube QP.
 *
 * The largest N with (2s)^N + q_TM < q_R + q_TT, found by direct integer evaluation.
 * Returns -1 when not even N = 0 qualifies.
 */
inline int horizon_rule(int s, int q_R, int q_TM, int q_TT)
{
  if (s < 1) { throw Error(ErrorKind::InvalidArgument, "horizon_rule requires s >= 1"); }
  const std::int64_t budget = static_cast<std::int64_t>(q_R) + q_TT - q_TM;
  int best = -1;
  std::int64_t vertices = 1;
  for (int N = 0; N < 62 && vertices < budget; ++N) {
    best = N;
    if (vertices > budget / (2LL * s)) { break; }
    vertices *= 2LL * s;
  }
  return best;
}

/// Real-valued bound log(q_R + q_TT - q_TM) / log(2 s) that the horizon must stay strictly below.
inline double horizon_bound(int s, int q_R, int q_TM, int q_TT)
{
  return std::log(static_cast<double>(q_R + q_TT - q_TM)) / std::log(2.0 * s);
}

inline nlohmann::json to_json(const CondensedQp & qp)
{
  using io::to_json;
  return nlohmann::json{
    {"formulation", std::string(to_string(qp.formulation))},
    {"N", qp.N},
    {"q", qp.q()},
    {"p", qp.p()},
    {"r", qp.r},
    {"l", qp.l},
    {"H", to_json(qp.H)},
    {"L", to_json(qp.L)},
    {"Hhat", to_json(qp.Hhat)},
    {"c", to_json(Eigen::VectorXd(qp.c))},
    {"G", to_json(qp.G)},
    {"W", to_json(Eigen::VectorXd(qp.W))},
    {"S", to_json(qp.S)},
    {"u_eps", to_json(qp.u_eps)},
    {"u_x", to_json(qp.u_x)},
  };
}

}  // namespace rmpc
