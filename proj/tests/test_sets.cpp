#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "oracles.hpp"
#include "pmpsc/errors.hpp"
#include "pmpsc/qp.hpp"
#include "pmpsc/sets.hpp"
#include "pmpsc/stats.hpp"

namespace pmpsc {
namespace {

Eigen::VectorXd vec(std::initializer_list<double> v) {
  Eigen::VectorXd out(v.size());
  int i = 0;
  for (double x : v) out[i++] = x;
  return out;
}

Eigen::MatrixXd I(int n) { return Eigen::MatrixXd::Identity(n, n); }

Eigen::MatrixXd random_spd(Rng& rng, int n) {
  Eigen::MatrixXd G(n, n);
  std::normal_distribution<double> nd;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) G(i, j) = nd(rng);
  return G * G.transpose() + 0.2 * I(n);
}

TEST(Polytope, RejectsEmpty) {
  Eigen::MatrixXd H(2, 1);
  H << 1, -1;
  EXPECT_THROW(HPolytope(H, vec({-1, -1})), EmptySet);
}

TEST(Polytope, DegeneratePointIsAllowed) {
  const auto p = HPolytope::box(vec({0}), vec({0}));
  EXPECT_TRUE(p.contains(vec({0})));
}

TEST(Polytope, GeneralNonBoxDepth) {
  // Triangle x >= 0, y >= 0, x + y <= 1: inscribed radius 1/(2+sqrt 2).
  Eigen::MatrixXd H(3, 2);
  H << -1, 0, 0, -1, 1, 1;
  const HPolytope tri(H, vec({0, 0, 1}));
  EXPECT_FALSE(tri.is_box());
  EXPECT_NEAR(tri.interior_depth(), 1.0 / (2.0 + std::sqrt(2.0)), 1e-7);
}

TEST(Tighten, ScalarExample) {
  const auto poly = HPolytope::box(vec({-1}), vec({1}));
  const Ellipsoid e(vec({0}), 4 * I(1), 1.0);
  const auto t = pontryagin_tighten(poly, SupportSet::from_ellipsoid(e));
  const auto [lo, hi] = t.box_bounds();
  EXPECT_NEAR(hi[0], 0.5, 1e-15);
  EXPECT_NEAR(lo[0], -0.5, 1e-15);
}

TEST(Tighten, EmptyTubeLeavesPolytope) {
  const auto poly = HPolytope::box(vec({-1, -2}), vec({3, 2}));
  const auto t = pontryagin_tighten(poly, SupportSet(2));
  EXPECT_EQ(t.h(), poly.h());
}

TEST(Tighten, TwoBallsExhaustUnitBox) {
  const auto poly = HPolytope::box(vec({-1, -1}), vec({1, 1}));
  SupportSet tube(2);
  tube.add(Ellipsoid(vec({0, 0}), I(2), 0.25));
  tube.add(Ellipsoid(vec({0, 0}), I(2), 0.25));
  EXPECT_THROW(pontryagin_tighten(poly, tube), EmptyTightening);
  // Support of the sum equals the sum of supports: sample e1 + e2.
  Rng rng(1);
  double best = 0;
  for (int s = 0; s < 10000; ++s) {
    const Eigen::VectorXd e = 0.5 * unit_sphere_sample(rng, 2) + 0.5 * unit_sphere_sample(rng, 2);
    best = std::max(best, e[0]);
    EXPECT_LE(e[0], tube.support(vec({1, 0})) + 1e-12);
  }
  EXPECT_NEAR(best, 1.0, 2e-3);
}

TEST(MapTube, IdentityAndZero) {
  Rng rng(2);
  SupportSet tube(3);
  tube.add(Ellipsoid(Eigen::VectorXd::Zero(3), random_spd(rng, 3), 2.0));
  const auto same = map_tube(I(3), tube);
  const auto zero = map_tube(Eigen::MatrixXd::Zero(2, 3), tube);
  for (int k = 0; k < 20; ++k) {
    const Eigen::VectorXd a = standard_normal(rng, 3);
    EXPECT_NEAR(same.support(a), tube.support(a), 1e-12);
    EXPECT_EQ(zero.support(a.head(2)), 0.0);
  }
}

TEST(MapTube, RowProjectionMatchesSampledMax) {
  const auto tube = SupportSet::from_ellipsoid(Ellipsoid(vec({0, 0}), I(2), 1.0));
  Eigen::MatrixXd K(1, 2);
  K << 1, 0;
  const auto img = map_tube(K, tube);
  double best = 0;
  for (int k = 0; k < 100000; ++k) {
    const double t = 2 * M_PI * k / 100000.0;
    best = std::max(best, K.row(0).dot(Eigen::Vector2d(std::cos(t), std::sin(t))));
  }
  EXPECT_NEAR(img.support(vec({1})), 1.0, 1e-14);
  EXPECT_NEAR(img.support(vec({-1})), 1.0, 1e-14);
  EXPECT_NEAR(best, 1.0, 1e-8);
}

TEST(Hull, Basics) {
  EXPECT_TRUE(hull_membership({vec({0})}, vec({0})));
  const std::vector<Eigen::VectorXd> tri = {vec({0, 0}), vec({1, 0}), vec({0, 1})};
  EXPECT_TRUE(hull_membership(tri, vec({0.25, 0.25})));
  EXPECT_FALSE(hull_membership(tri, vec({1, 1})));
  EXPECT_FALSE(hull_membership(tri, vec({-1e-4, 0.5})));
}

TEST(Hull, RandomConvexCombination) {
  Rng rng(5);
  std::uniform_real_distribution<double> ud(0, 1);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<Eigen::VectorXd> V;
    for (int j = 0; j < 12; ++j) V.push_back(standard_normal(rng, 4));
    Eigen::VectorXd lam(12);
    for (int j = 0; j < 12; ++j) lam[j] = -std::log(ud(rng));
    lam /= lam.sum();
    Eigen::VectorXd q = Eigen::VectorXd::Zero(4);
    for (int j = 0; j < 12; ++j) q += lam[j] * V[j];
    EXPECT_TRUE(hull_membership(V, q));
    for (const auto& v : V) EXPECT_TRUE(hull_membership(V, v));
  }
}

TEST(BoxVertices, Corners) {
  EXPECT_EQ(box_vertices(HPolytope::box(vec({-1}), vec({1}))).size(), 2u);
  EXPECT_EQ(box_vertices(HPolytope::box(vec({-1, -1}), vec({1, 1}))).size(), 4u);
  const auto poly = HPolytope::box(vec({0, 0, 0}), vec({1, 1, 1}));
  const auto V = box_vertices(poly);
  ASSERT_EQ(V.size(), 8u);
  Rng rng(8);
  for (int k = 0; k < 20; ++k) {
    const Eigen::VectorXd a = standard_normal(rng, 3);
    double best = -1e300;
    for (const auto& v : V) best = std::max(best, a.dot(v));
    // max a'x over the box via the QP solver (LP with zero Hessian)
    const auto rep = solve_qp(make_qp(Eigen::MatrixXd::Zero(3, 3), -a, {}, Eigen::VectorXd(0), poly.H(), poly.h()));
    ASSERT_EQ(rep.status, QpStatus::Optimal);
    EXPECT_NEAR(best, -rep.objective, 1e-7);
  }
}

TEST(BoxVertices, RejectsNonBox) {
  Eigen::MatrixXd H(3, 2);
  H << -1, 0, 0, -1, 1, 1;
  EXPECT_THROW(box_vertices(HPolytope(H, vec({0, 0, 1}))), NotABox);
}

TEST(SupportSetProperty, SubadditiveAndHomogeneous) {
  Rng rng(13);
  for (int trial = 0; trial < 50; ++trial) {
    SupportSet t1(4), t2(4);
    t1.add(Ellipsoid(Eigen::VectorXd::Zero(4), random_spd(rng, 4), 1.5));
    t2.add(Ellipsoid(Eigen::VectorXd::Zero(4), random_spd(rng, 4), 0.3));
    SupportSet sum = t1;
    sum.append(t2);
    const Eigen::VectorXd a = standard_normal(rng, 4);
    EXPECT_DOUBLE_EQ(sum.support(a), t1.support(a) + t2.support(a));
    EXPECT_NEAR(sum.support(3.0 * a), 3.0 * sum.support(a), 1e-12);
    EXPECT_GE(sum.support(a), 0.0);
  }
}

TEST(SupportSetProperty, TighteningSoundByBoundarySampling) {
  Rng rng(21);
  SupportSet tube(3);
  tube.add(Ellipsoid(Eigen::VectorXd::Zero(3), 20 * random_spd(rng, 3), 1.0));
  tube.add(Ellipsoid(Eigen::VectorXd::Zero(3), 30 * random_spd(rng, 3), 0.5));
  Eigen::MatrixXd H(6, 3);
  H << 1, 0.2, 0, -1, 0, 0.3, 0, 1, 0, 0.1, -1, 0, 0, 0, 1, 0.2, 0.2, -1;
  const HPolytope poly(H, Eigen::VectorXd::Ones(6));
  const auto tight = pontryagin_tighten(poly, tube);
  std::uniform_real_distribution<double> ud(-1.5, 1.5);
  int tested = 0;
  while (tested < 10000) {
    Eigen::VectorXd z(3);
    for (int i = 0; i < 3; ++i) z[i] = ud(rng);
    if (!tight.contains(z, 0)) continue;
    // boundary point of each term in a random direction, summed
    Eigen::VectorXd e = Eigen::VectorXd::Zero(3);
    for (std::size_t t = 0; t < tube.terms().size(); ++t)
      e += tube.term_argmax(t, unit_sphere_sample(rng, 3));
    EXPECT_GE(poly.min_slack(z + e), -1e-8);
    ++tested;
  }
}

TEST(SupportSetProperty, MapThenTightenEqualsDirect) {
  Rng rng(4);
  SupportSet tube(4);
  tube.add(Ellipsoid(Eigen::VectorXd::Zero(4), 50 * random_spd(rng, 4), 1.0));
  Eigen::MatrixXd K(2, 4);
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 4; ++j) K(i, j) = standard_normal(rng, 1)[0];
  const auto U = HPolytope::box(vec({-1, -1}), vec({1, 1}));
  const auto t = pontryagin_tighten(U, map_tube(K, tube));
  const Eigen::MatrixXd Sinv = tube.terms()[0].dual;
  for (int j = 0; j < U.num_facets(); ++j) {
    const Eigen::VectorXd a = U.H().row(j).transpose();
    const double direct = U.h()[j] - std::sqrt(a.dot(K * Sinv * K.transpose() * a));
    EXPECT_NEAR(t.h()[j], direct, 1e-10);
  }
}

TEST(Minkowski, BallsAddRadii) {
  const Ellipsoid b1(vec({0, 0}), I(2), 1.0), b2(vec({0, 0}), I(2), 1.0);
  EXPECT_TRUE(minkowski_contains(b1, b2, vec({1.999, 0})));
  EXPECT_TRUE(minkowski_contains(b1, b2, vec({1.4, 1.4})));
  EXPECT_FALSE(minkowski_contains(b1, b2, vec({2.001, 0})));
  EXPECT_FALSE(minkowski_contains(b1, b2, vec({1.42, 1.42})));
}

TEST(Minkowski, AgreesWithSupportFunctionOnBoundary) {
  Rng rng(17);
  const Ellipsoid e1(Eigen::VectorXd::Zero(3), random_spd(rng, 3), 1.0);
  const Ellipsoid e2(Eigen::VectorXd::Zero(3), random_spd(rng, 3), 2.0);
  SupportSet s(3);
  s.add(e1);
  s.add(e2);
  for (int k = 0; k < 200; ++k) {
    const Eigen::VectorXd a = unit_sphere_sample(rng, 3);
    // The maximizer of a'x over the sum is the sum of per-term maximizers.
    const Eigen::VectorXd x = s.term_argmax(0, a) + s.term_argmax(1, a);
    EXPECT_TRUE(minkowski_contains(e1, e2, 0.999 * x));
    EXPECT_FALSE(minkowski_contains(e1, e2, 1.001 * x));
  }
}

}  // namespace
}  // namespace pmpsc
