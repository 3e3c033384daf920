#include "pmpsc/ars.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "pmpsc/errors.hpp"

namespace pmpsc {

Eigen::VectorXd LinearPolicy::features(const Eigen::VectorXd& x, const Eigen::VectorXd& x_ref) const {
  PMPSC_THROW_UNLESS(x.size() == state_dim() && x_ref.size() == state_dim(), DimensionMismatch,
                     "policy: state has wrong size");
  Eigen::VectorXd phi(state_dim() + 1);
  phi << x_ref - x, 1.0;
  return phi;
}

Eigen::VectorXd LinearPolicy::act(const Eigen::VectorXd& x, const Eigen::VectorXd& x_ref) const {
  return M * features(x, x_ref);
}

void ArsConfig::validate() const {
  PMPSC_THROW_UNLESS(step_size > 0 && perturbation_std > 0, InvalidArgument,
                     "ars: step size and perturbation std must be positive");
  PMPSC_THROW_UNLESS(num_directions >= 1 && top_b >= 1 && top_b <= num_directions, InvalidArgument,
                     "ars: need 1 <= top_b <= num_directions");
  PMPSC_THROW_UNLESS(episode_length >= 1, InvalidArgument, "ars: episode length must be >= 1");
}

CostWeights CostWeights::car_defaults() {
  CostWeights w;
  Eigen::VectorXd q(6);
  q << 1, 1.5, 1, 1, 100, 100;
  w.Q = q.asDiagonal();
  w.R = Eigen::MatrixXd::Identity(2, 2);
  w.R_S = Eigen::MatrixXd::Identity(2, 2);
  return w;
}

EpisodeCost episode_cost(const std::vector<Eigen::VectorXd>& x, const std::vector<Eigen::VectorXd>& x_ref,
                         const std::vector<Eigen::VectorXd>& u_learn,
                         const std::vector<Eigen::VectorXd>& u_applied, const CostWeights& w) {
  const std::size_t n = x.size();
  PMPSC_THROW_UNLESS(x_ref.size() == n && u_learn.size() == n && u_applied.size() == n, LengthMismatch,
                     "episode_cost: sequences must have equal length");
  EpisodeCost c;
  for (std::size_t i = 0; i < n; ++i) {
    const Eigen::VectorXd e = x_ref[i] - x[i];
    const Eigen::VectorXd d = u_applied[i] - u_learn[i];
    c.tracking += e.dot(w.Q * e) + u_learn[i].dot(w.R * u_learn[i]);
    c.certification_penalty += d.dot(w.R_S * d);
  }
  c.total = c.tracking + c.certification_penalty;
  return c;
}

LinearPolicy ars_update(const LinearPolicy& policy, const RolloutFn& rollout, const ArsConfig& cfg, Rng& rng,
                        ArsUpdateInfo* info) {
  cfg.validate();
  const int N = cfg.num_directions;
  const auto rows = policy.M.rows(), cols = policy.M.cols();
  std::normal_distribution<double> nd(0.0, 1.0);
  std::vector<Eigen::MatrixXd> delta(N);
  for (auto& d : delta) {
    d.resize(rows, cols);
    for (Eigen::Index j = 0; j < d.size(); ++j) d.data()[j] = nd(rng);
  }
  std::vector<double> cp(N), cm(N);
  for (int j = 0; j < N; ++j) {
    cp[j] = rollout({policy.M + cfg.perturbation_std * delta[j]});
    cm[j] = rollout({policy.M - cfg.perturbation_std * delta[j]});
  }
  // rewards are negated costs
  std::vector<int> order(N);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    return std::max(-cp[a], -cm[a]) > std::max(-cp[b], -cm[b]);
  });
  order.resize(cfg.top_b);

  std::vector<double> r;
  for (int j : order) {
    r.push_back(-cp[j]);
    r.push_back(-cm[j]);
  }
  const double mean = std::accumulate(r.begin(), r.end(), 0.0) / r.size();
  double var = 0;
  for (double v : r) var += (v - mean) * (v - mean);
  const double sd = std::sqrt(var / r.size());
  if (info) *info = {cp, cm, order, sd};
  PMPSC_THROW_UNLESS(sd >= 1e-12 && std::isfinite(sd), DegenerateRewards,
                     "ars: reward spread below 1e-12, update skipped");

  Eigen::MatrixXd step = Eigen::MatrixXd::Zero(rows, cols);
  for (int j : order) step += (cm[j] - cp[j]) * delta[j];  // r+ - r-
  return {policy.M + cfg.step_size / (cfg.top_b * sd) * step};
}

}  // namespace pmpsc
