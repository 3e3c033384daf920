#include <cmath>

#include <gtest/gtest.h>

#include "oracles.hpp"
#include "pmpsc/errors.hpp"
#include "pmpsc/linalg.hpp"
#include "pmpsc/stats.hpp"
#include "pmpsc/tubes.hpp"

namespace pmpsc {
namespace {

Eigen::MatrixXd mat1(double a) { return Eigen::MatrixXd::Constant(1, 1, a); }

Eigen::MatrixXd double_integrator_A() {
  Eigen::MatrixXd A(2, 2);
  A << 1, 0.1, 0, 1;
  return A;
}
Eigen::MatrixXd double_integrator_B() {
  Eigen::MatrixXd B(2, 1);
  B << 0.005, 0.1;
  return B;
}

TEST(Budget, EvenSplitMultipliesBack) {
  const auto b = ProbabilityBudget::even(0.98, 0.9);
  EXPECT_NEAR(b.p_m_x * b.p_s_x, 0.98, 1e-12);
  EXPECT_NEAR(b.p_m_u * b.p_s_u, 0.9, 1e-12);
  EXPECT_NEAR(b.p_m_x, std::sqrt(0.98), 1e-15);
  const auto c = ProbabilityBudget::split(0.98, 0.98, 0.995, 0.99);
  EXPECT_NEAR(c.p_s_x * c.p_m_x, 0.98, 1e-12);
  EXPECT_THROW(ProbabilityBudget::split(0.98, 0.98, 0.97, 0.99), InvalidArgument);
}

TEST(Prs, ChebyshevLevel) { EXPECT_NEAR(prs_level(6, 0.98, false), 300.0, 1e-9); }

TEST(Prs, GaussianLevelMatchesIntegral) {
  const double q = prs_level(6, 0.98, true);
  EXPECT_NEAR(q, 15.03, 0.01);
  EXPECT_NEAR(oracle::chi2_cdf_simpson(q, 6), 0.98, 1e-6);
}

TEST(Prs, ScalarMonteCarloCoverage) {
  const auto R = prs_stochastic(mat1(0.5), mat1(1.0), 0.95, true);
  ASSERT_TRUE(R.has_value());
  // Sigma = 1 / (1 - 0.25)
  EXPECT_NEAR(1.0 / R->S(0, 0), 4.0 / 3.0, 1e-10);
  EXPECT_NEAR(R->rho, oracle::chi2_1_quantile(0.95), 1e-8);
  Rng rng(7);
  std::normal_distribution<double> nd(0, 1);
  double e = 0;
  long inside = 0;
  const long N = 1000000;
  for (long k = 0; k < N; ++k) {
    e = 0.5 * e + nd(rng);
    inside += R->contains(Eigen::VectorXd::Constant(1, e));
  }
  EXPECT_GE(static_cast<double>(inside) / N, 0.95);
}

TEST(Prs, ZeroNoiseIsDegenerate) {
  EXPECT_FALSE(prs_stochastic(mat1(0.5), mat1(0.0), 0.9, true).has_value());
  EXPECT_THROW(prs_stochastic(mat1(1.2), mat1(1.0), 0.9, true), Unstable);
}

TEST(Prs, RankDeficientNoiseIsRegularized) {
  Eigen::MatrixXd A = Eigen::MatrixXd::Identity(2, 2) * 0.5;
  Eigen::MatrixXd W = Eigen::MatrixXd::Zero(2, 2);
  W(0, 0) = 1;
  const auto R = prs_stochastic(A, W, 0.9, true);
  ASSERT_TRUE(R.has_value());
  EXPECT_TRUE(R->S.allFinite());
  EXPECT_GT(R->S(1, 1), 1e10);
}

// Property: Pr(e(k) in R_s) >= p_s - CI at k = 1, 10, 100 starting from e(0) = 0.
TEST(Prs, ReachabilityAtFixedTimes) {
  const Eigen::MatrixXd A = double_integrator_A();
  const Eigen::MatrixXd B = double_integrator_B();
  const auto K = lqr_gain(A, B, Eigen::MatrixXd::Identity(2, 2), mat1(1.0)).K;
  const Eigen::MatrixXd Acl = A + B * K;
  Eigen::MatrixXd W(2, 2);
  W << 0.01, 0.002, 0.002, 0.02;
  const double p_s = 0.9;
  const auto R = prs_stochastic(Acl, W, p_s, true);
  ASSERT_TRUE(R.has_value());
  const Eigen::MatrixXd L = W.llt().matrixL();
  Rng rng(11);
  const int rollouts = 100000;
  long hit1 = 0, hit10 = 0, hit100 = 0;
  for (int r = 0; r < rollouts; ++r) {
    Eigen::VectorXd e = Eigen::VectorXd::Zero(2);
    for (int k = 1; k <= 100; ++k) {
      e = Acl * e + L * standard_normal(rng, 2);
      if (k == 1) hit1 += R->contains(e);
      if (k == 10) hit10 += R->contains(e);
      if (k == 100) hit100 += R->contains(e);
    }
  }
  for (long h : {hit1, hit10, hit100}) {
    const auto ci = wilson_interval(h, rollouts);
    EXPECT_GE(ci.second, p_s) << h;
  }
}

TEST(Ris, NoDisturbanceGivesFloor) {
  EXPECT_DOUBLE_EQ(ris_model_error(mat1(0.5), mat1(1.0), std::nullopt), 1e-12);
}

TEST(Ris, ScalarMatchesReachabilityFixedPoint) {
  // Interval reachability e+ in [-(a r + w), a r + w] until the radius settles.
  double r = 0;
  for (int i = 0; i < 200; ++i) r = 0.5 * r + 1.0;
  const double alpha_true = r * r;
  const Ellipsoid W(Eigen::VectorXd::Zero(1), mat1(1.0), 1.0);
  const double alpha = ris_model_error(mat1(0.5), mat1(1.0), W);
  EXPECT_GE(alpha, alpha_true * (1 - 1e-6));
  EXPECT_LE(alpha, 1.1 * alpha_true);
}

TEST(Ris, ExactMultiplierRelation) {
  // At the scalar optimum tau0 = 1/2, tau1 = 2 the block matrix is singular.
  EXPECT_NEAR(ris_lmi_max_eigenvalue(mat1(0.5), mat1(1.0), mat1(1.0), 0.5, 2.0), 0.0, 1e-12);
  EXPECT_GT(ris_lmi_max_eigenvalue(mat1(0.5), mat1(1.0), mat1(1.0), 0.5, 1.0), 0.0);
}

TEST(Ris, SamplingCertificate) {
  const Eigen::MatrixXd A = double_integrator_A();
  const Eigen::MatrixXd B = double_integrator_B();
  const auto lqr = lqr_gain(A, B, Eigen::MatrixXd::Identity(2, 2), mat1(1.0));
  const Eigen::MatrixXd Acl = A + B * lqr.K;
  Eigen::MatrixXd S(2, 2);
  S << 4.0, 1.0, 1.0, 9.0;
  const Ellipsoid W(Eigen::VectorXd::Zero(2), S, 0.01);
  const double alpha = ris_model_error(Acl, lqr.P, W);
  const Eigen::MatrixXd Lp = lqr.P.llt().matrixL();
  const Eigen::MatrixXd Lw = (S / 0.01).llt().matrixL();
  Rng rng(3);
  double worst = 1e9;
  for (int i = 0; i < 100000; ++i) {
    // boundary points: L' x = sqrt(level) * unit
    const Eigen::VectorXd e = Lp.transpose().triangularView<Eigen::Upper>().solve(
        std::sqrt(alpha) * unit_sphere_sample(rng, 2));
    const Eigen::VectorXd w =
        Lw.transpose().triangularView<Eigen::Upper>().solve(unit_sphere_sample(rng, 2));
    const Eigen::VectorXd ep = Acl * e + w;
    worst = std::min(worst, alpha - ep.dot(lqr.P * ep));
  }
  EXPECT_GE(worst, -1e-8 * alpha);
}

TEST(Ris, InfeasibleAtCap) {
  const Ellipsoid W(Eigen::VectorXd::Zero(1), mat1(1.0), 1.0);
  EXPECT_THROW(ris_model_error(mat1(0.5), mat1(1.0), W, 1.0, 1.0), InfeasibleAtCap);
}

TEST(Compose, DegenerateParts) {
  Eigen::MatrixXd S(2, 2);
  S << 2.0, 0.3, 0.3, 1.0;
  const Ellipsoid E(Eigen::VectorXd::Zero(2), S, 0.7);
  const auto only_e = compose_tube(E, std::nullopt, 2);
  const auto only_s = compose_tube(std::nullopt, E, 2);
  Rng rng(5);
  for (int i = 0; i < 50; ++i) {
    const Eigen::VectorXd a = standard_normal(rng, 2);
    EXPECT_NEAR(only_e.support(a), E.support(a), 1e-12);
    EXPECT_NEAR(only_s.support(a), E.support(a), 1e-12);
  }
  const Ellipsoid ball(Eigen::VectorXd::Zero(2), Eigen::MatrixXd::Identity(2, 2), 1.0);
  const auto both = compose_tube(ball, ball, 2);
  for (int i = 0; i < 50; ++i) {
    const Eigen::VectorXd a = standard_normal(rng, 2);
    EXPECT_NEAR(both.support(a), 2 * a.norm(), 1e-12);
  }
}

// Property: e = e_m + e_s with e_m driven by bounded model error and e_s by
// Gaussian noise lies in E (+) R_s with probability at least p_m p_s.
TEST(Compose, JointRolloutCoverage) {
  const Eigen::MatrixXd A = double_integrator_A();
  const Eigen::MatrixXd B = double_integrator_B();
  const auto lqr = lqr_gain(A, B, Eigen::MatrixXd::Identity(2, 2), mat1(1.0));
  const Eigen::MatrixXd Acl = A + B * lqr.K;
  const double w = 0.02;
  const Ellipsoid Wm(Eigen::VectorXd::Zero(2), Eigen::MatrixXd::Identity(2, 2), w * w);
  const Ellipsoid E(Eigen::VectorXd::Zero(2), lqr.P, ris_model_error(Acl, lqr.P, Wm));
  const Eigen::MatrixXd W = 1e-4 * Eigen::MatrixXd::Identity(2, 2);
  const double p_s = 0.9;
  const auto Rs = prs_stochastic(Acl, W, p_s, true);
  Rng rng(13);
  const int rollouts = 20000;
  long inside = 0;
  for (int r = 0; r < rollouts; ++r) {
    Eigen::VectorXd e = Eigen::VectorXd::Zero(2);
    for (int k = 0; k < 30; ++k)
      e = Acl * e + w * unit_ball_sample(rng, 2) + 0.01 * standard_normal(rng, 2);
    inside += minkowski_contains(E, *Rs, e);
  }
  EXPECT_GE(wilson_interval(inside, rollouts).second, p_s);
}

TEST(TubeSpec, DegenerateModeLeavesConstraints) {
  const Eigen::MatrixXd A = double_integrator_A();
  const Eigen::MatrixXd B = double_integrator_B();
  const auto spec = build_tube_spec(A, B, Eigen::MatrixXd::Zero(2, 2), 0.0, 0.0,
                                    ProbabilityBudget::even(0.98, 0.98));
  const auto X = HPolytope::box(Eigen::Vector2d(-1, -2), Eigen::Vector2d(1, 2));
  const auto U = HPolytope::box(Eigen::VectorXd::Constant(1, -3), Eigen::VectorXd::Constant(1, 3));
  const auto t = tighten_constraints(X, U, spec);
  EXPECT_TRUE(t.X.h().isApprox(X.h(), 1e-12));
  EXPECT_TRUE(t.U.h().isApprox(U.h(), 1e-12));
  EXPECT_NEAR(spec.levels.p_m_x * spec.levels.p_s_x, 0.98, 1e-12);
  EXPECT_LT(spectral_radius(A + B * spec.K), 1.0);
}

TEST(TubeSpec, DoublingDisturbanceIsMonotone) {
  const Eigen::MatrixXd A = double_integrator_A();
  const Eigen::MatrixXd B = double_integrator_B();
  const Eigen::MatrixXd W = 1e-4 * Eigen::MatrixXd::Identity(2, 2);
  const auto budget = ProbabilityBudget::even(0.95, 0.95);
  const auto s1 = build_tube_spec(A, B, W, 0.01, 0.01, budget);
  const auto s2 = build_tube_spec(A, B, W, 0.02, 0.02, budget);
  EXPECT_GT(s2.alpha_x, s1.alpha_x);
  Rng rng(17);
  for (int i = 0; i < 100; ++i) {
    const Eigen::VectorXd a = standard_normal(rng, 2);
    EXPECT_GE(s2.R_x.support(a), s1.R_x.support(a) - 1e-12);
  }
}

TEST(TubeSpec, InvariantShapeNoWorseThanLqr) {
  const Eigen::MatrixXd A = double_integrator_A();
  const Eigen::MatrixXd B = double_integrator_B();
  const Eigen::MatrixXd W = 1e-5 * Eigen::MatrixXd::Identity(2, 2);
  const auto X = HPolytope::box(Eigen::Vector2d(-1, -1), Eigen::Vector2d(1, 1));
  const auto U = HPolytope::box(Eigen::VectorXd::Constant(1, -2), Eigen::VectorXd::Constant(1, 2));
  TubeOptions opt;
  opt.X = X;
  opt.U = U;
  const auto budget = ProbabilityBudget::even(0.98, 0.98);
  const auto lqr = build_tube_spec(A, B, W, 0.01, 0.01, budget, opt);
  opt.shape = RisShape::Invariant;
  const auto inv = build_tube_spec(A, B, W, 0.01, 0.01, budget, opt);
  auto worst_depth = [&](const TubeSpec& s) {
    const auto t = tighten_constraints(X, U, s);
    return std::min((t.X.h().array() / X.h().array()).minCoeff(),
                    (t.U.h().array() / U.h().array()).minCoeff());
  };
  EXPECT_GE(worst_depth(inv), worst_depth(lqr) - 0.05);
  EXPECT_NO_THROW(inv.validate(A, B));
}

}  // namespace
}  // namespace pmpsc
