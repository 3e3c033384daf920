#include <cmath>

#include <gtest/gtest.h>

#include "pmpsc/ars.hpp"
#include "pmpsc/errors.hpp"

namespace pmpsc {
namespace {

std::vector<Eigen::VectorXd> rep(const Eigen::VectorXd& v, int n) { return std::vector<Eigen::VectorXd>(n, v); }

TEST(EpisodeCost, PerfectTrackingIsFree) {
  const auto w = CostWeights::car_defaults();
  const Eigen::VectorXd x = Eigen::VectorXd::LinSpaced(6, 0, 1);
  const auto c = episode_cost(rep(x, 5), rep(x, 5), rep(Eigen::VectorXd::Zero(2), 5),
                              rep(Eigen::VectorXd::Zero(2), 5), w);
  EXPECT_EQ(c.total, 0.0);
}

TEST(EpisodeCost, WeightsOfTheBenchmark) {
  const auto w = CostWeights::car_defaults();
  Eigen::VectorXd e = Eigen::VectorXd::Zero(6);
  e[1] = 1.0;
  const Eigen::VectorXd z2 = Eigen::VectorXd::Zero(2);
  const auto c = episode_cost({Eigen::VectorXd::Zero(6)}, {e}, {z2}, {z2}, w);
  EXPECT_DOUBLE_EQ(c.total, 1.5);
  const auto p = episode_cost({e}, {e}, {z2}, {Eigen::Vector2d(1, 0)}, w);
  EXPECT_DOUBLE_EQ(p.certification_penalty, 1.0);
  EXPECT_DOUBLE_EQ(p.total, 1.0);
  const auto u = episode_cost({e}, {e}, {Eigen::VectorXd(Eigen::Vector2d(0, 2))}, {Eigen::VectorXd(Eigen::Vector2d(0, 2))}, w);
  EXPECT_DOUBLE_EQ(u.tracking, 4.0);
}

TEST(EpisodeCost, LengthMismatch) {
  const auto w = CostWeights::car_defaults();
  EXPECT_THROW(episode_cost(rep(Eigen::VectorXd::Zero(6), 3), rep(Eigen::VectorXd::Zero(6), 2),
                            rep(Eigen::VectorXd::Zero(2), 3), rep(Eigen::VectorXd::Zero(2), 3), w),
               LengthMismatch);
}

TEST(LinearPolicy, FeaturesAreErrorAndBias) {
  LinearPolicy p = LinearPolicy::zeros(2, 1);
  p.M << 2.0, 3.0, 0.5;
  const Eigen::VectorXd u = p.act(Eigen::Vector2d(1, 1), Eigen::Vector2d(2, 0));
  EXPECT_DOUBLE_EQ(u[0], 2.0 - 3.0 + 0.5);
}

TEST(Ars, IdenticalCostsSkipUpdate) {
  Rng rng(0);
  ArsConfig cfg;
  EXPECT_THROW(ars_update(LinearPolicy::zeros(1, 1), [](const LinearPolicy&) { return 4.0; }, cfg, rng),
               DegenerateRewards);
}

TEST(Ars, QuadraticBandit) {
  ArsConfig cfg;
  cfg.num_directions = 8;
  cfg.top_b = 8;
  Rng rng(11);
  // 1x1 "policy" holding the decision variable directly (bias column only).
  LinearPolicy p{Eigen::MatrixXd::Zero(1, 1)};
  const RolloutFn f = [](const LinearPolicy& q) { return std::pow(q.M(0, 0) - 3.0, 2); };
  int it = 0;
  for (; it < 200 && std::abs(p.M(0, 0) - 3.0) >= 0.1; ++it) p = ars_update(p, f, cfg, rng);
  EXPECT_LT(std::abs(p.M(0, 0) - 3.0), 0.1) << "after " << it << " updates";
}

TEST(Ars, AntisymmetricRewardsDoubleOneSidedEstimate) {
  ArsConfig cfg;
  cfg.num_directions = 6;
  cfg.top_b = 6;
  const Eigen::MatrixXd g = (Eigen::MatrixXd(2, 3) << 1, -2, 0.5, 0.3, 0.0, -1).finished();
  const LinearPolicy p{Eigen::MatrixXd::Zero(2, 3)};
  // linear cost: c(M + nu D) = -c(M - nu D) at M = 0
  const RolloutFn f = [&](const LinearPolicy& q) { return (g.array() * q.M.array()).sum(); };
  Rng rng(5);
  ArsUpdateInfo info;
  const LinearPolicy next = ars_update(p, f, cfg, rng, &info);
  // Replay the perturbation draws.
  Rng replay(5);
  std::normal_distribution<double> nd(0.0, 1.0);
  Eigen::MatrixXd one_sided = Eigen::MatrixXd::Zero(2, 3);
  for (int j = 0; j < cfg.num_directions; ++j) {
    Eigen::MatrixXd d(2, 3);
    for (Eigen::Index k = 0; k < d.size(); ++k) d.data()[k] = nd(replay);
    EXPECT_DOUBLE_EQ(info.cost_plus[j], -info.cost_minus[j]);
    one_sided += -info.cost_plus[j] * d;
  }
  const Eigen::MatrixXd expected = 2.0 * cfg.step_size / (cfg.top_b * info.reward_std) * one_sided;
  EXPECT_LT((next.M - expected).norm(), 1e-12 * expected.norm());
  // and it points downhill
  EXPECT_LT((g.array() * next.M.array()).sum(), 0.0);
}

TEST(Ars, InvariantToConstantCostShift) {
  ArsConfig cfg;
  const LinearPolicy p{Eigen::MatrixXd::Constant(2, 3, 0.1)};
  const RolloutFn f = [](const LinearPolicy& q) { return (q.M.array() - 1.0).square().sum(); };
  const RolloutFn g = [&](const LinearPolicy& q) { return f(q) + 1234.5; };
  Rng r1(9), r2(9);
  const auto a = ars_update(p, f, cfg, r1);
  const auto b = ars_update(p, g, cfg, r2);
  EXPECT_LT((a.M - b.M).norm(), 1e-9);
}

TEST(Ars, DeterministicGivenSeed) {
  ArsConfig cfg;
  const LinearPolicy p{Eigen::MatrixXd::Zero(2, 3)};
  const RolloutFn f = [](const LinearPolicy& q) { return (q.M.array() - 0.5).square().sum(); };
  Rng r1(3), r2(3);
  EXPECT_EQ(ars_update(p, f, cfg, r1).M, ars_update(p, f, cfg, r2).M);
}

TEST(Ars, RejectsBadConfig) {
  ArsConfig cfg;
  cfg.top_b = 20;
  Rng rng(0);
  EXPECT_THROW(ars_update(LinearPolicy::zeros(1, 1), [](const LinearPolicy&) { return 0.0; }, cfg, rng),
               InvalidArgument);
}

}  // namespace
}  // namespace pmpsc
