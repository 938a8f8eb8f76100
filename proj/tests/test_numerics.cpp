#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <random>

#include "rmpc/numerics.hpp"

using namespace rmpc;

namespace {

Eigen::MatrixXd dare_residual(const Eigen::MatrixXd & A, const Eigen::MatrixXd & B, const Eigen::MatrixXd & Q,
                              const Eigen::MatrixXd & R, const Eigen::MatrixXd & P)
{
  const Eigen::MatrixXd S = R + B.transpose() * P * B;
  return A.transpose() * P * A - P - A.transpose() * P * B * S.inverse() * B.transpose() * P * A + Q;
}

// Brute-force LP oracle in the plane: best objective over all pairwise row intersections.
double lp_vertex_oracle(const Eigen::Vector2d & c, const Polytope & P)
{
  double best = std::numeric_limits<double>::infinity();
  for (Eigen::Index i = 0; i < P.rows(); ++i) {
    for (Eigen::Index j = i + 1; j < P.rows(); ++j) {
      Eigen::Matrix2d M;
      M << P.T.row(i), P.T.row(j);
      if (std::abs(M.determinant()) < 1e-12) { continue; }
      const Eigen::Vector2d v = M.inverse() * Eigen::Vector2d(P.d(i), P.d(j));
      if (P.contains(v, 1e-9)) { best = std::min(best, c.dot(v)); }
    }
  }
  return best;
}

}  // namespace

TEST(QrFactorize, Identity)
{
  const auto qr = qr_factorize(Eigen::MatrixXd::Identity(3, 3));
  EXPECT_TRUE(qr.E.isApprox(Eigen::MatrixXd::Identity(3, 3), 1e-12));
  EXPECT_EQ(qr.J.cols(), 0);
  EXPECT_TRUE(qr.F.isApprox(Eigen::MatrixXd::Identity(3, 3), 1e-12));
}

TEST(QrFactorize, ThreeFourFive)
{
  Eigen::MatrixXd M(2, 1);
  M << 3, 4;
  const auto qr = qr_factorize(M);
  EXPECT_NEAR(std::abs(qr.E(0, 0)), 0.6, 1e-12);
  EXPECT_NEAR(std::abs(qr.E(1, 0)), 0.8, 1e-12);
  EXPECT_NEAR(qr.F(0, 0), 5.0, 1e-12);
  ASSERT_EQ(qr.J.cols(), 1);
  EXPECT_NEAR(std::abs(qr.J.col(0).dot(Eigen::Vector2d(-0.8, 0.6))), 1.0, 1e-12);
}

TEST(QrFactorize, RandomReconstructionAndComplement)
{
  std::mt19937 rng(7);
  std::normal_distribution<double> g;
  for (int trial = 0; trial < 50; ++trial) {
    Eigen::MatrixXd M(6, 2);
    for (Eigen::Index i = 0; i < M.size(); ++i) { M.data()[i] = g(rng); }
    const auto qr = qr_factorize(M);
    Eigen::MatrixXd EJ(6, 6);
    EJ << qr.E, qr.J;
    Eigen::MatrixXd F0 = Eigen::MatrixXd::Zero(6, 2);
    F0.topRows(2) = qr.F;
    EXPECT_LE((EJ * F0 - M).norm(), 1e-10);
    EXPECT_LE((EJ.transpose() * EJ - Eigen::MatrixXd::Identity(6, 6)).norm(), 1e-10);
    EXPECT_LE((M.transpose() * qr.J).norm(), 1e-10);
    EXPECT_GT(qr.F(0, 0), 0.0);
    EXPECT_GT(qr.F(1, 1), 0.0);
    EXPECT_EQ(qr.F(1, 0), 0.0);
  }
}

TEST(QrFactorize, RankDeficientThrows)
{
  Eigen::MatrixXd M(3, 2);
  M << 1, 2, 2, 4, 3, 6;
  try {
    qr_factorize(M);
    FAIL() << "expected RankDeficient";
  } catch (const Error & e) {
    EXPECT_EQ(e.kind(), ErrorKind::RankDeficient);
  }
}

TEST(SolveDare, ScalarDeadbeat)
{
  const Eigen::MatrixXd Z = Eigen::MatrixXd::Zero(1, 1), I = Eigen::MatrixXd::Identity(1, 1);
  const auto res = solve_dare(Z, I, I, I);
  EXPECT_NEAR(res.P(0, 0), 1.0, 1e-12);
  EXPECT_NEAR(res.K_inf(0, 0), 0.0, 1e-12);
}

TEST(SolveDare, ScalarGoldenRatioMatchesFixedPoint)
{
  // Independent scalar fixed-point iteration p <- p - p^2 / (1 + p) + 1.
  double p = 1.0;
  for (int k = 0; k < 200; ++k) { p = p - p * p / (1.0 + p) + 1.0; }
  const Eigen::MatrixXd I = Eigen::MatrixXd::Identity(1, 1);
  const auto res = solve_dare(I, I, I, I);
  EXPECT_NEAR(res.P(0, 0), p, 1e-10);
  EXPECT_NEAR(res.P(0, 0), (1.0 + std::sqrt(5.0)) / 2.0, 1e-10);
}

TEST(SolveDare, DoubleIntegratorAppendixWeight)
{
  Eigen::MatrixXd A(2, 2), B(2, 1), R(1, 1);
  A << 1, 1, 0, 1;
  B << 0, 1;
  R << 10;
  const Eigen::MatrixXd Q = Eigen::MatrixXd::Identity(2, 2);
  const auto res = solve_dare(A, B, Q, R);
  Eigen::Matrix2d P_ref;
  P_ref << 3.81471424647913, 4.86866526790586, 4.86866526790586, 13.7039014909127;
  for (int i = 0; i < 2; ++i) {
    for (int j = 0; j < 2; ++j) { EXPECT_NEAR(res.P(i, j) / P_ref(i, j), 1.0, 1e-5); }
  }
  EXPECT_LE(dare_residual(A, B, Q, R, res.P).norm(), 1e-8);
  const Eigen::MatrixXd K = (R + B.transpose() * res.P * B).inverse() * B.transpose() * res.P * A;
  EXPECT_LE((K - res.K_inf).norm(), 1e-12);
  EXPECT_EQ(Eigen::LLT<Eigen::MatrixXd>(res.P).info(), Eigen::Success);
}

TEST(SolveDare, RandomPairsResidual)
{
  std::mt19937 rng(11);
  std::normal_distribution<double> g;
  std::uniform_int_distribution<int> dim(1, 4);
  for (int trial = 0; trial < 100; ++trial) {
    const int n = dim(rng);
    const int m = std::uniform_int_distribution<int>(1, n)(rng);
    Eigen::MatrixXd A(n, n), B(n, m);
    for (Eigen::Index i = 0; i < A.size(); ++i) { A.data()[i] = 0.6 * g(rng); }
    for (Eigen::Index i = 0; i < B.size(); ++i) { B.data()[i] = g(rng); }
    const Eigen::MatrixXd Q = Eigen::MatrixXd::Identity(n, n);
    const Eigen::MatrixXd R = Eigen::MatrixXd::Identity(m, m);
    const auto res = solve_dare(A, B, Q, R);
    const double scale = std::max(1.0, res.P.cwiseAbs().maxCoeff());
    EXPECT_LE(dare_residual(A, B, Q, R, res.P).norm() / scale, 1e-8) << "trial " << trial;
    EXPECT_EQ(Eigen::LLT<Eigen::MatrixXd>(res.P).info(), Eigen::Success);
  }
}

TEST(SolveDare, UnstabilizableDoesNotConverge)
{
  Eigen::MatrixXd A(2, 2), B(2, 1);
  A << 2, 0, 0, 0.5;
  B << 0, 1;
  try {
    solve_dare(A, B, Eigen::MatrixXd::Identity(2, 2), Eigen::MatrixXd::Identity(1, 1), 2000);
    FAIL() << "expected NoConvergence";
  } catch (const Error & e) {
    EXPECT_EQ(e.kind(), ErrorKind::NoConvergence);
  }
}

TEST(SolveLp, BoxMinimum)
{
  const auto box = Polytope::box(Eigen::Vector2d(-10, -10), Eigen::Vector2d(10, 10));
  const auto res = solve_lp(Eigen::Vector2d(1, 0), box);
  EXPECT_NEAR(res.value, -10.0, 1e-9);
  EXPECT_NEAR(res.x(0), -10.0, 1e-9);
}

TEST(SolveLp, ZeroObjective)
{
  const auto box = Polytope::box(Eigen::Vector2d(1, 1), Eigen::Vector2d(2, 3));
  const auto res = solve_lp(Eigen::Vector2d(0, 0), box);
  EXPECT_NEAR(res.value, 0.0, 1e-12);
  EXPECT_TRUE(box.contains(res.x));
}

TEST(SolveLp, TriangleVertex)
{
  Eigen::MatrixXd T(3, 2);
  T << -1, 0, 0, -1, 1, 1;
  const Polytope tri(T, Eigen::Vector3d(0, 0, 1));
  const auto res = solve_lp(Eigen::Vector2d(1, 1), tri);
  EXPECT_NEAR(res.value, 0.0, 1e-9);
  EXPECT_NEAR(res.x.norm(), 0.0, 1e-9);
}

TEST(SolveLp, InfeasibleAndUnbounded)
{
  Eigen::MatrixXd T(2, 1);
  T << 1, -1;
  try {
    solve_lp(Eigen::VectorXd::Ones(1), Polytope(T, Eigen::Vector2d(-1, -1)));
    FAIL();
  } catch (const Error & e) {
    EXPECT_EQ(e.kind(), ErrorKind::Infeasible);
  }
  Eigen::MatrixXd H(1, 1);
  H << 1;
  try {
    solve_lp(Eigen::VectorXd::Ones(1), Polytope(H, Eigen::VectorXd::Ones(1)));
    FAIL();
  } catch (const Error & e) {
    EXPECT_EQ(e.kind(), ErrorKind::Unbounded);
  }
}

TEST(SolveLp, RandomPolygonsAgainstVertexOracle)
{
  std::mt19937 rng(3);
  std::uniform_real_distribution<double> ang(0.0, 2.0 * 3.14159265358979);
  std::uniform_real_distribution<double> off(0.5, 2.0);
  for (int trial = 0; trial < 200; ++trial) {
    const int rows = 3 + trial % 8;
    Eigen::MatrixXd T(rows + 4, 2);
    Eigen::VectorXd d(rows + 4);
    for (int i = 0; i < rows; ++i) {
      const double a = ang(rng);
      T.row(i) << std::cos(a), std::sin(a);
      d(i) = off(rng);
    }
    T.bottomRows(4) << 1, 0, -1, 0, 0, 1, 0, -1;
    d.tail(4).setConstant(5.0);
    const Polytope P(T, d);
    const Eigen::Vector2d c(std::cos(ang(rng)), std::sin(ang(rng)));
    const auto res = solve_lp(c, P);
    EXPECT_LE(P.violation(res.x), 1e-9);
    EXPECT_NEAR(res.value, lp_vertex_oracle(c, P), 1e-8);
    // Duality gap of the returned multipliers.
    EXPECT_LE((T.transpose() * res.multipliers + c).norm(), 1e-8);
    EXPECT_NEAR(res.value, -d.dot(res.multipliers), 1e-8);
    EXPECT_GE(res.multipliers.minCoeff(), 0.0);
  }
}
