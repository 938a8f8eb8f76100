#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <limits>
#include <utility>

#include "rmpc/error.hpp"

namespace rmpc {

/// Halfspace polytope {x | T x <= d}. Row i of T is an outward normal.
struct Polytope
{
  Eigen::MatrixXd T;
  Eigen::VectorXd d;

  Polytope() = default;
  Polytope(Eigen::MatrixXd T_, Eigen::VectorXd d_) : T(std::move(T_)), d(std::move(d_))
  {
    if (T.rows() != d.size()) {
      throw Error(ErrorKind::InvalidArgument, "polytope row count mismatch between T and d");
    }
  }

  /// Axis-aligned box lo <= x <= hi, rows ordered (e_1, -e_1, e_2, -e_2, ...).
  static Polytope box(const Eigen::VectorXd & lo, const Eigen::VectorXd & hi)
  {
    const Eigen::Index n = lo.size();
    Eigen::MatrixXd T = Eigen::MatrixXd::Zero(2 * n, n);
    Eigen::VectorXd d(2 * n);
    for (Eigen::Index i = 0; i < n; ++i) {
      T(2 * i, i) = 1.0;
      d(2 * i) = hi(i);
      T(2 * i + 1, i) = -1.0;
      d(2 * i + 1) = -lo(i);
    }
    return {std::move(T), std::move(d)};
  }

  static Polytope symmetric_box(const Eigen::VectorXd & half_width) { return box(-half_width, half_width); }

  Eigen::Index dim() const { return T.cols(); }
  Eigen::Index rows() const { return T.rows(); }

  /// Largest constraint violation max_i (T_i x - d_i); non-positive inside.
  double violation(const Eigen::VectorXd & x) const
  {
    if (rows() == 0) { return -std::numeric_limits<double>::infinity(); }
    return (T * x - d).maxCoeff();
  }

  bool contains(const Eigen::VectorXd & x, double tol = 1e-9) const { return rows() == 0 || violation(x) <= tol; }

  /// Rows scaled to unit Euclidean norm; zero rows are kept as they are.
  Polytope normalized() const
  {
    Polytope out = *this;
    for (Eigen::Index i = 0; i < rows(); ++i) {
      const double nrm = T.row(i).norm();
      if (nrm > 0.0) {
        out.T.row(i) /= nrm;
        out.d(i) /= nrm;
      }
    }
    return out;
  }

  Polytope intersect(const Polytope & other) const
  {
    if (other.dim() != dim()) { throw Error(ErrorKind::InvalidArgument, "intersect: dimension mismatch"); }
    Eigen::MatrixXd Tn(rows() + other.rows(), dim());
    Eigen::VectorXd dn(rows() + other.rows());
    Tn << T, other.T;
    dn << d, other.d;
    return {std::move(Tn), std::move(dn)};
  }

  /// The set {c x | x in P} for c > 0.
  Polytope scaled(double c) const { return {T, d * c}; }

  /// Preimage {x | M x in P}.
  Polytope preimage(const Eigen::MatrixXd & M) const { return {T * M, d}; }
};

}  // namespace rmpc
