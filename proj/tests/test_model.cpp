#include <algorithm>
#include <cmath>

#include <gtest/gtest.h>

#include "oracles.hpp"
#include "pmpsc/errors.hpp"
#include "pmpsc/linalg.hpp"
#include "pmpsc/model.hpp"
#include "pmpsc/stats.hpp"

namespace pmpsc {
namespace {

Eigen::VectorXd vec(std::initializer_list<double> v) {
  Eigen::VectorXd out(v.size());
  int i = 0;
  for (double x : v) out[i++] = x;
  return out;
}

Dataset scalar_data(int samples, std::uint64_t seed) {
  Rng rng(seed);
  std::uniform_real_distribution<double> ud(-1, 1);
  std::normal_distribution<double> nd(0, 0.01);
  Dataset d(1, 1);
  for (int k = 0; k < samples; ++k) {
    const double x = ud(rng), u = ud(rng);
    d.add(vec({x}), vec({u}), vec({0.8 * x + 1.0 * u + nd(rng)}));
  }
  return d;
}

Dataset linear_data(const Eigen::MatrixXd& A, const Eigen::MatrixXd& B, int samples,
                    std::uint64_t seed, double sigma = 0.01) {
  Rng rng(seed);
  std::uniform_real_distribution<double> ud(-1, 1);
  const int n = static_cast<int>(A.rows()), m = static_cast<int>(B.cols());
  Dataset d(n, m);
  for (int k = 0; k < samples; ++k) {
    Eigen::VectorXd x(n), u(m);
    for (int i = 0; i < n; ++i) x[i] = ud(rng);
    for (int i = 0; i < m; ++i) u[i] = ud(rng);
    d.add(x, u, A * x + B * u + sigma * standard_normal(rng, n));
  }
  return d;
}

TEST(FitBlr, EmptyDatasetRecoversPrior) {
  const Dataset d(2, 1);
  const auto post = fit_blr(d, 10.0, 0.01);
  EXPECT_EQ(post.mean.norm(), 0.0);
  for (const auto& C : post.precisions) EXPECT_TRUE(C.isApprox(0.1 * Eigen::MatrixXd::Identity(3, 3)));
}

TEST(FitBlr, ScalarSystemMatchesNormalEquations) {
  const auto d = scalar_data(1000, 1);
  const auto post = fit_blr(d, 10.0, 0.01);
  EXPECT_NEAR(post.mean(0, 0), 0.8, 0.05);
  EXPECT_NEAR(post.mean(1, 0), 1.0, 0.05);
  // Ridge identity: (Phi'Phi + s^2 Sigma^-1) theta = Phi'y
  const Eigen::MatrixXd Phi = d.regressors();
  const Eigen::VectorXd y = d.successors().col(0);
  const Eigen::VectorXd ridge =
      (Phi.transpose() * Phi + 1e-4 * 0.1 * Eigen::MatrixXd::Identity(2, 2)).ldlt().solve(Phi.transpose() * y);
  EXPECT_LE((post.mean.col(0) - ridge).cwiseAbs().maxCoeff(), 1e-10);
  const auto [A, B] = nominal_matrices(post);
  EXPECT_NEAR(A(0, 0), 0.8, 0.05);
  EXPECT_NEAR(B(0, 0), 1.0, 0.05);
}

TEST(FitBlr, DuplicatedRecordsDoubleDataPrecision) {
  const auto d = scalar_data(50, 2);
  Dataset dd(1, 1);
  for (const auto& r : d.records()) {
    dd.add(r.x, r.u, r.y);
    dd.add(r.x, r.u, r.y);
  }
  const auto p1 = fit_blr(d, 10.0, 0.01);
  const auto p2 = fit_blr(dd, 10.0, 0.01);
  const Eigen::MatrixXd prior = 0.1 * Eigen::MatrixXd::Identity(2, 2);
  EXPECT_LE(((p2.precisions[0] - prior) - 2 * (p1.precisions[0] - prior)).cwiseAbs().maxCoeff(), 1e-6);
}

TEST(FitBlr, PrecisionDominatesPrior) {
  Eigen::MatrixXd A(2, 2), B(2, 1);
  A << 0.9, 0.1, 0, 0.8;
  B << 0, 1;
  const auto post = fit_blr(linear_data(A, B, 100, 3), 10.0, 0.01);
  for (const auto& C : post.precisions)
    EXPECT_GE(min_eigenvalue(C - 0.1 * Eigen::MatrixXd::Identity(3, 3)), -1e-9);
}

TEST(NominalMatrices, Partition) {
  BLRPosterior post;
  post.n = 2;
  post.m = 1;
  post.mean.resize(3, 2);
  post.mean << 1, 2, 3, 4, 5, 6;  // rows: x1, x2, u; columns: outputs
  const auto [A, B] = nominal_matrices(post);
  Eigen::MatrixXd Ae(2, 2), Be(2, 1);
  Ae << 1, 3, 2, 4;
  Be << 5, 6;
  EXPECT_EQ(A, Ae);
  EXPECT_EQ(B, Be);
}

TEST(ConfidenceVertices, ScalarIsGaussianInterval) {
  BLRPosterior post;
  post.n = 1;
  post.m = 0;
  post.mean = Eigen::MatrixXd::Constant(1, 1, 0.5);
  post.precisions = {Eigen::MatrixXd::Constant(1, 1, 400.0)};
  const auto V = confidence_vertices(post, 0.95);
  ASSERT_EQ(V.size(), 2u);
  const double half = std::sqrt(oracle::chi2_1_quantile(0.95)) / 20.0;
  EXPECT_NEAR(std::max(V[0](0, 0), V[1](0, 0)), 0.5 + half, 1e-9);
  EXPECT_NEAR(std::min(V[0](0, 0), V[1](0, 0)), 0.5 - half, 1e-9);
}

TEST(ConfidenceVertices, IsotropicRadius) {
  BLRPosterior post;
  post.n = 2;
  post.m = 1;
  post.mean = Eigen::MatrixXd::Zero(3, 2);
  post.precisions.assign(2, 9.0 * Eigen::MatrixXd::Identity(3, 3));
  const auto V = confidence_vertices(post, 0.9);
  ASSERT_EQ(V.size(), 12u);
  const double r = std::sqrt(chi2_quantile(0.9, 6));
  for (const auto& v : V) EXPECT_NEAR(v.norm(), std::sqrt(6.0) * r / 3.0, 1e-12);
}

// Hull of the vertices is the cross-polytope sum_k |<t - mean, u_k>| sqrt(l_k) <= s r.
TEST(ConfidenceVertices, CoverageAtLeastPm) {
  Eigen::MatrixXd A(2, 2), B(2, 1);
  A << 0.9, 0.2, -0.1, 0.7;
  B << 0.1, 1.0;
  const auto post = fit_blr(linear_data(A, B, 60, 4, 0.05), 10.0, 0.05);
  const double p_m = 0.9;
  const auto V = confidence_vertices(post, p_m);
  const double r = std::sqrt(chi2_quantile(p_m, 6)), s = std::sqrt(6.0);
  std::vector<Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>> es;
  for (const auto& C : post.precisions) es.emplace_back(C);
  std::vector<Eigen::LLT<Eigen::MatrixXd>> chol;
  for (const auto& C : post.precisions) chol.emplace_back(C);
  Rng rng(99);
  auto sample = [&]() {
    Eigen::MatrixXd th = post.mean;
    for (int i = 0; i < 2; ++i)  // theta_i = mean_i + L^{-T} xi
      th.col(i) += chol[i].matrixU().solve(standard_normal(rng, 3));
    return th;
  };
  auto inside_closed_form = [&](const Eigen::MatrixXd& th) {
    double acc = 0;
    for (int i = 0; i < 2; ++i) {
      const Eigen::VectorXd d = th.col(i) - post.mean.col(i);
      for (int k = 0; k < 3; ++k)
        acc += std::abs(es[i].eigenvectors().col(k).dot(d)) * std::sqrt(es[i].eigenvalues()[k]);
    }
    return acc <= s * r;
  };
  const int N = 100000;
  int inside = 0;
  for (int k = 0; k < N; ++k) inside += inside_closed_form(sample());
  const auto [lo, hi] = wilson_interval(inside, N, 2.5758);
  EXPECT_GE(hi, p_m);
  EXPECT_GE(static_cast<double>(inside) / N, p_m);
  // The closed form agrees with the generic hull test on a subsample.
  std::vector<Eigen::VectorXd> flat;
  for (const auto& v : V) flat.push_back(Eigen::Map<const Eigen::VectorXd>(v.data(), v.size()));
  for (int k = 0; k < 150; ++k) {
    const Eigen::MatrixXd th = post.mean + 0.9 * (sample() - post.mean) * (1.0 + (k % 3));
    const bool cf = inside_closed_form(th);
    const Eigen::VectorXd q = Eigen::Map<const Eigen::VectorXd>(th.data(), th.size());
    EXPECT_EQ(hull_membership(flat, q, 1e-9), cf);
  }
}

TEST(ModelErrorBound, ZeroVarianceGivesZero) {
  Eigen::MatrixXd A(1, 1), B(1, 1);
  A << 0.8;
  B << 1.0;
  Eigen::MatrixXd th(2, 1);
  th << 0.8, 1.0;
  const auto X = HPolytope::box(vec({-2}), vec({2}));
  const auto U = HPolytope::box(vec({-1}), vec({1}));
  const auto b = model_error_bound({th, th}, 0.9, X, U, A, B);
  EXPECT_EQ(b.w_max, 0.0);
  EXPECT_FALSE(b.ball().has_value());
}

TEST(ModelErrorBound, ScalarLinearInState) {
  Eigen::MatrixXd A(1, 1), B(1, 1);
  A << 0.8;
  B << 1.0;
  Eigen::MatrixXd t1(2, 1), t2(2, 1);
  t1 << 0.7, 1.0;
  t2 << 0.9, 1.0;
  const auto b = model_error_bound({t1, t2}, 0.9, HPolytope::box(vec({-2}), vec({2})),
                                   HPolytope::box(vec({0}), vec({0})), A, B);
  EXPECT_NEAR(b.w_max, 0.2, 1e-15);
}

TEST(ModelErrorBound, VertexMaximumMatchesGrid) {
  Eigen::MatrixXd A(2, 2), B(2, 1);
  A << 0.9, 0.2, -0.1, 0.7;
  B << 0.1, 1.0;
  const auto post = fit_blr(linear_data(A, B, 80, 6), 10.0, 0.01);
  const auto [Ah, Bh] = nominal_matrices(post);
  const auto Xo = HPolytope::box(vec({-1.2, -0.5}), vec({1.0, 2.0}));
  const auto Uo = HPolytope::box(vec({-3}), vec({1}));
  const auto V = confidence_vertices(post, 0.99);
  const auto b = model_error_bound(V, 0.99, Xo, Uo, Ah, Bh);
  // 22^3 ~ 10^4 grid including the corners.
  Eigen::MatrixXd AB(2, 3);
  AB << Ah, Bh;
  double grid = 0;
  const int G = 22;
  const Eigen::Vector3d lo(-1.2, -0.5, -3), hi(1.0, 2.0, 1);
  for (int i = 0; i < G; ++i)
    for (int j = 0; j < G; ++j)
      for (int k = 0; k < G; ++k) {
        const Eigen::Vector3d phi = lo + Eigen::Vector3d(i, j, k).cwiseProduct(hi - lo) / (G - 1);
        for (const auto& th : V) grid = std::max(grid, ((th.transpose() - AB) * phi).norm());
      }
  EXPECT_NEAR(b.w_max, grid, 1e-9);
}

TEST(ModelErrorBound, PosteriorContracts) {
  Eigen::MatrixXd A(2, 2), B(2, 1);
  A << 0.9, 0.2, -0.1, 0.7;
  B << 0.1, 1.0;
  const auto Xo = HPolytope::box(vec({-1, -1}), vec({1, 1}));
  const auto Uo = HPolytope::box(vec({-1}), vec({1}));
  std::vector<double> small, large;
  for (int seed = 0; seed < 20; ++seed) {
    for (int N : {400, 4000}) {
      const auto post = fit_blr(linear_data(A, B, N, 100 + seed), 10.0, 0.01);
      const auto [Ah, Bh] = nominal_matrices(post);
      (N == 400 ? small : large).push_back(model_error_bound(post, 0.99, Xo, Uo, Ah, Bh).w_max);
    }
  }
  std::nth_element(small.begin(), small.begin() + 10, small.end());
  std::nth_element(large.begin(), large.begin() + 10, large.end());
  EXPECT_LE(large[10], small[10]);
}

TEST(ModelErrorBound, ZeroExcitationIsRankDeficient) {
  Dataset d(2, 1);
  for (int k = 0; k < 10; ++k) d.add(Eigen::VectorXd::Zero(2), Eigen::VectorXd::Zero(1), Eigen::VectorXd::Zero(2));
  EXPECT_TRUE(std::isinf(regressor_condition(d)));
}

}  // namespace
}  // namespace pmpsc
