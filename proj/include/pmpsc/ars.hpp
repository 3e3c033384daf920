#pragma once

#include <functional>
#include <vector>

#include <Eigen/Dense>

#include "pmpsc/stats.hpp"

namespace pmpsc {

// u = M [x_ref - x; 1]
struct LinearPolicy {
  Eigen::MatrixXd M;  // m x (n + 1)

  static LinearPolicy zeros(int n, int m) { return {Eigen::MatrixXd::Zero(m, n + 1)}; }
  int state_dim() const { return static_cast<int>(M.cols()) - 1; }
  int input_dim() const { return static_cast<int>(M.rows()); }
  Eigen::VectorXd features(const Eigen::VectorXd& x, const Eigen::VectorXd& x_ref) const;
  Eigen::VectorXd act(const Eigen::VectorXd& x, const Eigen::VectorXd& x_ref) const;
};

struct ArsConfig {
  double step_size = 0.02;
  int num_directions = 16;
  int top_b = 8;
  double perturbation_std = 0.05;
  int episode_length = 200;
  std::uint64_t seed = 0;

  void validate() const;
};

struct EpisodeCost {
  double tracking = 0.0;               // sum of state error and input energy
  double certification_penalty = 0.0;  // sum of (u - u_L)' R_S (u - u_L)
  double total = 0.0;
};

struct CostWeights {
  Eigen::MatrixXd Q;
  Eigen::MatrixXd R;
  Eigen::MatrixXd R_S;
  // diag(1, 1.5, 1, 1, 100, 100), I, I
  static CostWeights car_defaults();
};

EpisodeCost episode_cost(const std::vector<Eigen::VectorXd>& x,
                         const std::vector<Eigen::VectorXd>& x_ref,
                         const std::vector<Eigen::VectorXd>& u_learn,
                         const std::vector<Eigen::VectorXd>& u_applied, const CostWeights& w);

// Maps a policy to the scalar cost of one rollout (lower is better).
using RolloutFn = std::function<double(const LinearPolicy&)>;

struct ArsUpdateInfo {
  std::vector<double> cost_plus, cost_minus;
  std::vector<int> elite;  // direction indices, best first
  double reward_std = 0.0;
};

// One basic random search step (top-b elites, reward-std normalization).
// Costs are negated into rewards. Throws DegenerateRewards when every rollout
// returned the same cost; the caller keeps the old policy.
LinearPolicy ars_update(const LinearPolicy& policy, const RolloutFn& rollout, const ArsConfig& cfg,
                        Rng& rng, ArsUpdateInfo* info = nullptr);

}  // namespace pmpsc
