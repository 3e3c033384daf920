#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "pmpsc/ars.hpp"
#include "pmpsc/car.hpp"
#include "pmpsc/filter.hpp"
#include "pmpsc/model.hpp"
#include "pmpsc/terminal.hpp"
#include "pmpsc/tubes.hpp"

namespace pmpsc {

struct ExcitationConfig {
  int samples = 400;
  double smoothing = 0.3;                      // f+ = s f + (1 - s) U(-1, 1) .* amplitude
  Eigen::Vector2d amplitude{0.7, 4.0};
  Eigen::MatrixXd gain = default_gain();       // u = gain * e + f, clipped to U
  double measurement_noise = 0.01;             // added to recorded successors
  int retries = 5;
  double shrink = 0.7;                         // amplitude factor per retry
  double inflate = 1.2;                        // X_o, U_o half-width factor

  static Eigen::MatrixXd default_gain();
};

struct DesignConfig {
  double prior_variance = 10.0;
  double sigma_s = 0.01;
  double p_x = 0.98, p_u = 0.98;
  VertexScale vertex_scale = VertexScale::Sqrt2;
  RisShape shape = RisShape::Invariant;
  bool gaussian = true;
  Eigen::VectorXd q_lqr;  // diagonal; empty -> identity
  Eigen::VectorXd r_lqr;
  double max_condition = 1e12;
  int max_vertices = 200;
};

// LQR weights that keep the car's invariant tube narrow in y and delta.
DesignConfig car_design_defaults();

struct TrainConfig {
  ArsConfig ars;
  int episodes = 300;
  int baseline_episodes = 300;  // 0 disables the baseline arm
  double init_std = 0.05;       // initial policy ~ N(0, init_std^2)
  int trajectory_every = 50;    // write the full trajectory of every k-th episode
};

struct ValidateConfig {
  int seeds = 2000;
  int steps = 200;
  int threads = 0;  // 0 -> hardware concurrency
};

struct RunConfig {
  std::uint64_t seed = 1;
  std::string output_dir = "run";
  car::Params plant;
  car::Reference reference;
  car::Limits limits;
  ExcitationConfig excitation;
  DesignConfig design = car_design_defaults();
  FilterConfig filter;
  TrainConfig train;
  ValidateConfig validate;

  void validate_fields() const;
  static RunConfig from_toml_file(const std::string& path);
  static RunConfig from_toml_string(const std::string& text);
  // Canonical TOML text (stable key order); its hash identifies the run.
  std::string to_toml() const;
};

// Excitation rollout of the car in deviation coordinates. Throws
// ExcitationUnsafe when every retry leaves X_o.
Dataset collect_data(const RunConfig& cfg);

struct DesignResult {
  BLRPosterior posterior;
  Eigen::MatrixXd A, B;
  ModelErrorBound bound_x, bound_u;
  Eigen::MatrixXd noise_cov;
  TubeSpec tube;
  HPolytope X, U;
  TightenedSets tight;
  TerminalSet terminal;
  double regressor_condition = 0.0;
};

// Model fit -> model-error bound -> tubes -> tightened sets -> initial Z_f for
// a generic box-constrained problem. Throws IllConditioned on rank-deficient data.
DesignResult design_from_data(const Dataset& data, const HPolytope& X, const HPolytope& U,
                              const HPolytope& X_o, const HPolytope& U_o, const DesignConfig& cfg,
                              int horizon);
DesignResult design_pipeline(const RunConfig& cfg, const Dataset& data);

// What a closed-loop run needs; persisted between CLI stages.
struct Controller {
  Eigen::MatrixXd A, B, K;
  HPolytope X, U;              // original constraints
  HPolytope X_tight, U_tight;
};
Controller controller_of(const DesignResult& d);

struct EpisodeLog {
  std::vector<Eigen::VectorXd> x, x_ref, u_learn, u;  // deviation coordinates
  std::vector<char> certified, fallback;
  std::vector<double> step_seconds;
  EpisodeCost cost;
  int y_violations = 0;      // steps with |y| > y_max
  int state_violations = 0;  // steps outside X
  int input_violations = 0;
  bool aborted = false;
  std::string abort_reason;
  double certified_fraction() const;
};

// One car episode from the reference start. With `terminal` set the filter
// is in the loop and the episode's optimal nominal states enlarge Z_f at the
// end (if `enlarge`); otherwise u_L is clipped to U.
EpisodeLog run_car_episode(const RunConfig& cfg, const Controller& ctl,
                           const std::shared_ptr<TerminalSet>& terminal, const LinearPolicy& policy,
                           std::uint64_t seed, bool enlarge = true);

struct TrainingRecord {
  int episode = 0;
  EpisodeCost cost;
  int violations = 0;
  double certified_fraction = 0.0;
  bool aborted = false;
};

struct TrainingResult {
  LinearPolicy policy;
  std::vector<TrainingRecord> records;
  std::vector<int> terminal_generation;  // after every episode
  std::vector<std::pair<int, EpisodeLog>> trajectories;
  std::vector<double> step_seconds;  // every filter_step call, in order
};

// ARS with every rollout as one episode. filtered = false gives the clipped
// baseline arm.
TrainingResult run_training(const RunConfig& cfg, const Controller& ctl,
                            const std::shared_ptr<TerminalSet>& terminal, bool filtered, int episodes,
                            std::uint64_t seed);

LinearPolicy initial_policy(const RunConfig& cfg);

// Monte Carlo estimate of Pr(x(k) in X), Pr(u(k) in U) per time index.
struct ChanceReport {
  std::vector<double> px, pu;        // empirical
  std::vector<double> px_lo, pu_lo;  // Wilson 95% lower bounds
  double p_x = 0.0, p_u = 0.0;
  int seeds = 0;
  long fallbacks = 0;
  long non_optimal = 0;
  bool pass = false;
};

using PlantStep = std::function<Eigen::VectorXd(const Eigen::VectorXd& x, const Eigen::VectorXd& u,
                                                int k, Rng& rng)>;
using PolicyFn = std::function<Eigen::VectorXd(const Eigen::VectorXd& x, int k)>;

// seeds independent runs of `steps` steps from x0; state index k = 1..steps,
// input index k = 0..steps-1. The terminal set is only read. Seeds fan out over threads; the result only
// depends on the seeds. pass iff every lower bound >= p - slack.
ChanceReport validate_chance(const Controller& ctl, const std::shared_ptr<TerminalSet>& terminal,
                             const FilterConfig& fcfg, const Eigen::VectorXd& x0, const PlantStep& plant,
                             const PolicyFn& policy, double p_x, double p_u, int seeds, int steps,
                             std::uint64_t seed, int threads = 0, double slack = 0.01);

// validate_chance on the car in deviation coordinates from the reference
// start, with the settings of cfg.validate and levels of cfg.design.
ChanceReport validate_car_chance(const RunConfig& cfg, const Controller& ctl,
                                 const std::shared_ptr<TerminalSet>& terminal, const LinearPolicy& policy);

}  // namespace pmpsc
