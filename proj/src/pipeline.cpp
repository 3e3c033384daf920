#include "pmpsc/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <thread>

#include "pmpsc/errors.hpp"
#include "pmpsc/linalg.hpp"

namespace pmpsc {

namespace {

// splitmix64 finalizer; decorrelates per-episode and per-seed streams.
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t i) {
  std::uint64_t z = base + 0x9e3779b97f4a7c15ULL * (i + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

Eigen::VectorXd clip_to_box(const Eigen::VectorXd& u, const HPolytope& U) {
  const auto [lo, hi] = U.box_bounds();
  return u.cwiseMax(lo).cwiseMin(hi);
}

Eigen::MatrixXd diag_or_identity(const Eigen::VectorXd& d, int n) {
  if (d.size() == 0) return Eigen::MatrixXd::Identity(n, n);
  PMPSC_THROW_UNLESS(d.size() == n, DimensionMismatch, "LQR weight diagonal has wrong size");
  return d.asDiagonal();
}

}  // namespace

Eigen::MatrixXd ExcitationConfig::default_gain() {
  Eigen::MatrixXd G = Eigen::MatrixXd::Zero(2, 6);
  G(0, 1) = -0.5;
  G(0, 2) = -2.0;
  G(1, 3) = -1.0;
  G(1, 0) = -0.3;
  return G;
}

DesignConfig car_design_defaults() {
  DesignConfig d;
  d.q_lqr = (Eigen::VectorXd(6) << 10, 100, 1, 1, 100, 1).finished();
  d.r_lqr = Eigen::Vector2d(0.1, 0.1);
  return d;
}

void RunConfig::validate_fields() const {
  plant.validate();
  PMPSC_THROW_UNLESS(design.p_x > 0 && design.p_x < 1 && design.p_u > 0 && design.p_u < 1, ConfigError,
                     "probability levels must lie in (0, 1)");
  PMPSC_THROW_UNLESS(design.sigma_s > 0 && design.prior_variance > 0, ConfigError,
                     "sigma_s and the prior variance must be positive");
  PMPSC_THROW_UNLESS(excitation.samples >= 1 && excitation.retries >= 1, ConfigError,
                     "excitation needs samples >= 1 and retries >= 1");
  PMPSC_THROW_UNLESS(excitation.smoothing >= 0 && excitation.smoothing < 1, ConfigError,
                     "excitation smoothing must lie in [0, 1)");
  PMPSC_THROW_UNLESS(excitation.gain.rows() == 2 && excitation.gain.cols() == 6, ConfigError,
                     "excitation gain must be 2 x 6");
  PMPSC_THROW_UNLESS(excitation.inflate >= 1.0, ConfigError, "X_o inflation must be >= 1");
  PMPSC_THROW_UNLESS(filter.horizon >= 1, ConfigError, "horizon must be >= 1");
  train.ars.validate();
  PMPSC_THROW_UNLESS(train.episodes >= 0 && train.baseline_episodes >= 0, ConfigError,
                     "episode counts must be >= 0");
  PMPSC_THROW_UNLESS(validate.seeds >= 1 && validate.steps >= 1, ConfigError,
                     "validation needs seeds >= 1 and steps >= 1");
}

Dataset collect_data(const RunConfig& cfg) {
  const auto& ex = cfg.excitation;
  const HPolytope U = car::input_box(cfg.limits);
  const HPolytope X_o = car::state_box(cfg.limits, ex.inflate, cfg.reference.speed);
  const double v0 = cfg.reference.speed, dt = cfg.plant.dt;
  Eigen::Vector2d amp = ex.amplitude;
  for (int attempt = 0; attempt < ex.retries; ++attempt, amp *= ex.shrink) {
    Rng rng(derive_seed(cfg.seed, 1000 + attempt));
    std::uniform_real_distribution<double> unif(-1.0, 1.0);
    std::normal_distribution<double> nd(0.0, 1.0);
    Dataset data(6, 2);
    car::State s = car::from_deviation(Eigen::VectorXd::Zero(6), 0.0, v0);
    Eigen::Vector2d f = Eigen::Vector2d::Zero();
    bool safe = true;
    for (int k = 0; k < ex.samples && safe; ++k) {
      const Eigen::VectorXd e = car::to_deviation(s, k * dt, v0);
      f = ex.smoothing * f + (1.0 - ex.smoothing) * Eigen::Vector2d(unif(rng), unif(rng)).cwiseProduct(amp);
      const Eigen::VectorXd u = clip_to_box(ex.gain * e + f, U);
      s = car::step(s, u, cfg.plant, rng);
      const Eigen::VectorXd e_next = car::to_deviation(s, (k + 1) * dt, v0);
      Eigen::VectorXd y = e_next;
      for (int i = 0; i < 6; ++i) y[i] += ex.measurement_noise * nd(rng);
      data.add(e, u, y);
      safe = X_o.contains(e_next, 0.0);
    }
    if (safe) return data;
  }
  throw ExcitationUnsafe("excitation left X_o after " + std::to_string(ex.retries) + " attempts");
}

DesignResult design_from_data(const Dataset& data, const HPolytope& X, const HPolytope& U,
                              const HPolytope& X_o, const HPolytope& U_o, const DesignConfig& cfg,
                              int horizon) {
  PMPSC_THROW_UNLESS(!data.empty(), InvalidArgument, "design: empty dataset");
  const int n = data.n(), m = data.m();
  const double cond = regressor_condition(data);
  PMPSC_THROW_UNLESS(std::isfinite(cond) && cond <= cfg.max_condition, IllConditioned,
                     "design: regressor condition number " + std::to_string(cond) +
                         " (excitation too weak)");
  BLRPosterior post = fit_blr(data, cfg.prior_variance, cfg.sigma_s);
  auto [A, B] = nominal_matrices(post);
  const auto budget = ProbabilityBudget::even(cfg.p_x, cfg.p_u);
  auto bx = model_error_bound(post, budget.p_m_x, X_o, U_o, A, B, cfg.vertex_scale);
  auto bu = budget.p_m_u == budget.p_m_x ? bx
                                         : model_error_bound(post, budget.p_m_u, X_o, U_o, A, B, cfg.vertex_scale);
  const Eigen::MatrixXd noise_cov = cfg.sigma_s * cfg.sigma_s * Eigen::MatrixXd::Identity(n, n);
  TubeOptions opt;
  opt.Q_lqr = diag_or_identity(cfg.q_lqr, n);
  opt.R_lqr = diag_or_identity(cfg.r_lqr, m);
  opt.gaussian = cfg.gaussian;
  opt.shape = cfg.shape;
  opt.X = X;
  opt.U = U;
  TubeSpec tube = build_tube_spec(A, B, noise_cov, bx.w_max, bu.w_max, budget, opt);
  TightenedSets tight = tighten_constraints(X, U, tube);
  TerminalSet terminal = init_terminal(tight.X, tight.U, horizon, cfg.max_vertices);
  return DesignResult{std::move(post), A, B, std::move(bx), std::move(bu), noise_cov, std::move(tube),
                      X, U, std::move(tight), std::move(terminal), cond};
}

DesignResult design_pipeline(const RunConfig& cfg, const Dataset& data) {
  const double v0 = cfg.reference.speed, inf = cfg.excitation.inflate;
  return design_from_data(data, car::state_box(cfg.limits, 1.0, v0), car::input_box(cfg.limits),
                          car::state_box(cfg.limits, inf, v0), car::input_box(cfg.limits, inf), cfg.design,
                          cfg.filter.horizon);
}

Controller controller_of(const DesignResult& d) {
  return {d.A, d.B, d.tube.K, d.X, d.U, d.tight.X, d.tight.U};
}

double EpisodeLog::certified_fraction() const {
  if (certified.empty()) return 0.0;
  return static_cast<double>(std::count(certified.begin(), certified.end(), 1)) / certified.size();
}

EpisodeLog run_car_episode(const RunConfig& cfg, const Controller& ctl,
                           const std::shared_ptr<TerminalSet>& terminal, const LinearPolicy& policy,
                           std::uint64_t seed, bool enlarge) {
  using clock = std::chrono::steady_clock;
  const double v0 = cfg.reference.speed, dt = cfg.plant.dt;
  const int L = cfg.train.ars.episode_length;
  Rng rng(seed);
  EpisodeLog log;
  car::State s = car::from_deviation(Eigen::VectorXd::Zero(6), 0.0, v0);
  std::optional<FilterState> fs;
  if (terminal) {
    try {
      fs.emplace(init_filter(car::to_deviation(s, 0.0, v0), ctl.A, ctl.B, ctl.K, ctl.X_tight, ctl.U_tight,
                             terminal, cfg.filter));
    } catch (const Error& e) {
      log.aborted = true;
      log.abort_reason = e.what();
      return log;
    }
  }
  for (int k = 0; k < L; ++k) {
    const double t = k * dt;
    const Eigen::VectorXd e = car::to_deviation(s, t, v0);
    const Eigen::VectorXd e_ref = car::to_deviation(cfg.reference.at(t), t, v0);
    const Eigen::VectorXd uL = policy.act(e, e_ref);
    Eigen::VectorXd u;
    if (fs) {
      const auto t0 = clock::now();
      FilterResult r;
      try {
        r = filter_step(*fs, e, uL);
      } catch (const Error& err) {
        log.aborted = true;
        log.abort_reason = err.what();
        break;
      }
      log.step_seconds.push_back(std::chrono::duration<double>(clock::now() - t0).count());
      u = r.u_applied;
      log.certified.push_back(r.certified);
      log.fallback.push_back(r.fallback);
    } else {
      u = clip_to_box(uL, ctl.U);
      log.certified.push_back(0);
      log.fallback.push_back(0);
    }
    log.x.push_back(e);
    log.x_ref.push_back(e_ref);
    log.u_learn.push_back(uL);
    log.u.push_back(u);
    log.y_violations += std::abs(e[1]) > cfg.limits.y_max;
    log.state_violations += !ctl.X.contains(e, 0.0);
    log.input_violations += !ctl.U.contains(u, 0.0);
    s = car::step(s, u, cfg.plant, rng);
  }
  log.cost = episode_cost(log.x, log.x_ref, log.u_learn, log.u, CostWeights::car_defaults());
  if (fs && enlarge && !log.aborted) end_episode(*fs);
  return log;
}

LinearPolicy initial_policy(const RunConfig& cfg) {
  Rng rng(derive_seed(cfg.seed, 7));
  std::normal_distribution<double> nd(0.0, cfg.train.init_std);
  LinearPolicy p = LinearPolicy::zeros(6, 2);
  for (Eigen::Index i = 0; i < p.M.size(); ++i) p.M.data()[i] = nd(rng);
  return p;
}

TrainingResult run_training(const RunConfig& cfg, const Controller& ctl,
                            const std::shared_ptr<TerminalSet>& terminal, bool filtered, int episodes,
                            std::uint64_t seed) {
  TrainingResult out;
  out.policy = initial_policy(cfg);
  Rng rng(derive_seed(seed, 11));
  int ep = 0;
  const std::shared_ptr<TerminalSet> ts = filtered ? terminal : nullptr;
  auto rollout = [&](const LinearPolicy& p) {
    const EpisodeLog log = run_car_episode(cfg, ctl, ts, p, derive_seed(seed, 100000 + ep));
    TrainingRecord rec{ep, log.cost, log.y_violations, log.certified_fraction(), log.aborted};
    out.records.push_back(rec);
    out.terminal_generation.push_back(ts ? ts->generation() : 0);
    out.step_seconds.insert(out.step_seconds.end(), log.step_seconds.begin(), log.step_seconds.end());
    if (cfg.train.trajectory_every > 0 && (ep % cfg.train.trajectory_every == 0 || ep == episodes - 1))
      out.trajectories.emplace_back(ep, log);
    ++ep;
    // an aborted episode is never preferred
    return log.aborted ? std::numeric_limits<double>::max() / 4 : log.cost.total;
  };
  const int per_update = 2 * cfg.train.ars.num_directions;
  while (ep + per_update <= episodes) {
    try {
      out.policy = ars_update(out.policy, rollout, cfg.train.ars, rng);
    } catch (const DegenerateRewards&) {
    }
  }
  while (ep < episodes) rollout(out.policy);
  return out;
}

ChanceReport validate_chance(const Controller& ctl, const std::shared_ptr<TerminalSet>& terminal,
                             const FilterConfig& fcfg, const Eigen::VectorXd& x0, const PlantStep& plant,
                             const PolicyFn& policy, double p_x, double p_u, int seeds, int steps,
                             std::uint64_t seed, int threads, double slack) {
  PMPSC_THROW_UNLESS(seeds >= 1 && steps >= 1, InvalidArgument, "validate_chance: seeds, steps >= 1");
  struct Run {
    std::vector<char> xin, uin;
    long fallbacks = 0, non_optimal = 0;
  };
  std::vector<Run> runs(seeds);
  auto one = [&](int i) {
    Run& r = runs[i];
    r.xin.assign(steps, 0);
    r.uin.assign(steps, 0);
    Rng rng(derive_seed(seed, i));
    FilterState fs = init_filter(x0, ctl.A, ctl.B, ctl.K, ctl.X_tight, ctl.U_tight, terminal, fcfg);
    Eigen::VectorXd x = x0;
    for (int k = 0; k < steps; ++k) {
      const FilterResult fr = filter_step(fs, x, policy(x, k));
      r.fallbacks += fr.fallback;
      r.non_optimal += fr.solver.status != QpStatus::Optimal;
      r.uin[k] = ctl.U.contains(fr.u_applied, 0.0);
      x = plant(x, fr.u_applied, k, rng);
      r.xin[k] = ctl.X.contains(x, 0.0);
    }
  };
  int T = threads > 0 ? threads : static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
  T = std::min(T, seeds);
  std::vector<std::exception_ptr> errors(T);
  std::vector<std::thread> pool;
  for (int w = 0; w < T; ++w)
    pool.emplace_back([&, w] {
      try {
        for (int i = w; i < seeds; i += T) one(i);
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  for (auto& t : pool) t.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);

  ChanceReport rep;
  rep.p_x = p_x;
  rep.p_u = p_u;
  rep.seeds = seeds;
  rep.pass = true;
  for (int k = 0; k < steps; ++k) {
    std::int64_t sx = 0, su = 0;
    for (const Run& r : runs) {
      sx += r.xin[k];
      su += r.uin[k];
    }
    rep.px.push_back(static_cast<double>(sx) / seeds);
    rep.pu.push_back(static_cast<double>(su) / seeds);
    rep.px_lo.push_back(wilson_interval(sx, seeds).first);
    rep.pu_lo.push_back(wilson_interval(su, seeds).first);
    rep.pass = rep.pass && rep.px_lo.back() >= p_x - slack && rep.pu_lo.back() >= p_u - slack;
  }
  for (const Run& r : runs) {
    rep.fallbacks += r.fallbacks;
    rep.non_optimal += r.non_optimal;
  }
  return rep;
}

ChanceReport validate_car_chance(const RunConfig& cfg, const Controller& ctl,
                                 const std::shared_ptr<TerminalSet>& terminal, const LinearPolicy& policy) {
  const double v0 = cfg.reference.speed, dt = cfg.plant.dt;
  const car::Params plant_params = cfg.plant;
  const car::Reference ref = cfg.reference;
  PlantStep plant = [=](const Eigen::VectorXd& e, const Eigen::VectorXd& u, int k, Rng& rng) {
    const car::State s = car::from_deviation(e, k * dt, v0);
    return Eigen::VectorXd(car::to_deviation(car::step(s, u, plant_params, rng), (k + 1) * dt, v0));
  };
  PolicyFn act = [=](const Eigen::VectorXd& e, int k) {
    return policy.act(e, car::to_deviation(ref.at(k * dt), k * dt, v0));
  };
  return validate_chance(ctl, terminal, cfg.filter, Eigen::VectorXd::Zero(6), plant, act, cfg.design.p_x,
                         cfg.design.p_u, cfg.validate.seeds, cfg.validate.steps,
                         derive_seed(cfg.seed, 23), cfg.validate.threads);
}

}  // namespace pmpsc
