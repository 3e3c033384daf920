#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "oracles.hpp"
#include "pmpsc/errors.hpp"
#include "pmpsc/linalg.hpp"
#include "pmpsc/stats.hpp"

namespace pmpsc {
namespace {

Eigen::MatrixXd random_stable(Rng& rng, int n, double radius) {
  Eigen::MatrixXd A = Eigen::MatrixXd::Random(n, n);
  (void)rng;
  return A * (radius / spectral_radius(A));
}

TEST(MinEigenvalue, Identity) {
  EXPECT_DOUBLE_EQ(min_eigenvalue(Eigen::MatrixXd::Identity(4, 4)), 1.0);
}

TEST(MinEigenvalue, Diagonal) {
  EXPECT_NEAR(min_eigenvalue(Eigen::Vector2d(-1, -3).asDiagonal().toDenseMatrix()), -3.0, 1e-14);
}

TEST(MinEigenvalue, MatchesInertiaBisection) {
  std::srand(7);
  for (int trial = 0; trial < 20; ++trial) {
    Eigen::MatrixXd M = Eigen::MatrixXd::Random(6, 6);
    M = symmetrize(M);
    const double expected = oracle::min_eig_bisect(M);
    EXPECT_NEAR(min_eigenvalue(M), expected, 1e-8 * std::max(1.0, M.norm()));
  }
}

TEST(MinEigenvalue, RejectsAsymmetric) {
  Eigen::MatrixXd M(2, 2);
  M << 1, 2, 0, 1;
  EXPECT_THROW(min_eigenvalue(M), InvalidArgument);
}

TEST(Lyapunov, ScalarClosedForm) {
  Eigen::MatrixXd a(1, 1), w(1, 1);
  a << 0.5;
  w << 1.0;
  EXPECT_NEAR(solve_discrete_lyapunov(a, w)(0, 0), 4.0 / 3.0, 1e-14);
}

TEST(Lyapunov, ZeroDynamics) {
  Eigen::MatrixXd W(2, 2);
  W << 2, 0.5, 0.5, 1;
  EXPECT_TRUE(solve_discrete_lyapunov(Eigen::MatrixXd::Zero(2, 2), W).isApprox(W, 1e-15));
}

TEST(Lyapunov, MatchesSeriesAndIsPsd) {
  std::srand(11);
  Rng rng(3);
  for (int trial = 0; trial < 10; ++trial) {
    const Eigen::MatrixXd A = random_stable(rng, 4, 0.8);
    Eigen::MatrixXd G = Eigen::MatrixXd::Random(4, 4);
    const Eigen::MatrixXd W = G * G.transpose();
    const Eigen::MatrixXd S = solve_discrete_lyapunov(A, W);
    EXPECT_LE((S - oracle::lyapunov_series(A, W)).cwiseAbs().maxCoeff(), 1e-8);
    EXPECT_LE((A.transpose() * S * A - S + W).norm(), 1e-8);
    EXPECT_TRUE(is_symmetric(S, 1e-12));
    EXPECT_GE(min_eigenvalue(S), -1e-12);
  }
}

TEST(Lyapunov, RejectsUnstable) {
  Eigen::MatrixXd a(1, 1), w(1, 1);
  a << 1.0;
  w << 1.0;
  EXPECT_THROW(solve_discrete_lyapunov(a, w), Unstable);
}

TEST(Lqr, ScalarGoldenRatio) {
  Eigen::MatrixXd one = Eigen::MatrixXd::Ones(1, 1);
  const auto res = lqr_gain(one, one, one, one);
  const double p = oracle::scalar_riccati(1, 1, 1, 1);
  EXPECT_NEAR(res.P(0, 0), p, 1e-10);
  EXPECT_NEAR(p, (1 + std::sqrt(5.0)) / 2, 1e-10);
  EXPECT_NEAR(res.K(0, 0), -p / (1 + p), 1e-12);
}

TEST(Lqr, ZeroInputStableA) {
  Eigen::MatrixXd A(2, 2);
  A << 0.5, 0.1, 0, 0.3;
  const auto res = lqr_gain(A, Eigen::MatrixXd::Zero(2, 1), Eigen::MatrixXd::Identity(2, 2),
                            Eigen::MatrixXd::Identity(1, 1));
  EXPECT_EQ(res.K.norm(), 0.0);
}

TEST(Lqr, RandomPairsAreStabilized) {
  std::srand(5);
  int done = 0;
  for (int trial = 0; done < 100 && trial < 1000; ++trial) {
    const Eigen::MatrixXd A = 1.5 * Eigen::MatrixXd::Random(4, 4);
    const Eigen::MatrixXd B = Eigen::MatrixXd::Random(4, 2);
    // Controllability as a stand-in for stabilizability.
    Eigen::MatrixXd C(4, 8);
    C << B, A * B, A * A * B, A * A * A * B;
    if (Eigen::FullPivLU<Eigen::MatrixXd>(C).rank() < 4) continue;
    const auto res = lqr_gain(A, B, Eigen::MatrixXd::Identity(4, 4), Eigen::MatrixXd::Identity(2, 2));
    EXPECT_LT(spectral_radius(A + B * res.K), 1.0);
    ++done;
  }
  EXPECT_EQ(done, 100);
}

TEST(Chi2, SixDofAtNinetyEight) {
  const double q = chi2_quantile(0.98, 6);
  EXPECT_NEAR(oracle::chi2_cdf_simpson(q, 6), 0.98, 1e-8);
  EXPECT_NEAR(q, 15.0332, 1e-3);
}

TEST(Chi2, OneDofMatchesErf) {
  for (double p : {0.5, 0.9, 0.95, 0.99}) EXPECT_NEAR(chi2_quantile(p, 1), oracle::chi2_1_quantile(p), 1e-8);
}

TEST(Wilson, KnownInterval) {
  const auto [lo, hi] = wilson_interval(98, 100);
  EXPECT_NEAR(lo, 0.9300, 1e-3);
  EXPECT_NEAR(hi, 0.9945, 1e-3);
}

}  // namespace
}  // namespace pmpsc
