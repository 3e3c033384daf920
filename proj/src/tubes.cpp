#include "pmpsc/tubes.hpp"

#include <cmath>
#include <limits>

#include "pmpsc/errors.hpp"
#include "pmpsc/linalg.hpp"
#include "pmpsc/stats.hpp"

namespace pmpsc {

ProbabilityBudget ProbabilityBudget::even(double p_x, double p_u) {
  return split(p_x, p_u, std::sqrt(p_x), std::sqrt(p_u));
}

ProbabilityBudget ProbabilityBudget::split(double p_x, double p_u, double p_m_x, double p_m_u) {
  ProbabilityBudget b;
  b.p_x = p_x;
  b.p_u = p_u;
  b.p_m_x = p_m_x;
  b.p_m_u = p_m_u;
  b.p_s_x = p_x / p_m_x;
  b.p_s_u = p_u / p_m_u;
  b.validate();
  return b;
}

void ProbabilityBudget::validate() const {
  for (double p : {p_x, p_u, p_m_x, p_s_x, p_m_u, p_s_u})
    PMPSC_THROW_UNLESS(p > 0 && p < 1, InvalidArgument, "probability levels must lie in (0,1)");
  PMPSC_THROW_UNLESS(std::abs(p_s_x * p_m_x - p_x) <= 1e-12 && std::abs(p_s_u * p_m_u - p_u) <= 1e-12,
                     InvalidArgument, "probability split does not multiply to the target");
}

double prs_level(int n, double p_s, bool gaussian) {
  PMPSC_THROW_UNLESS(p_s > 0 && p_s < 1, InvalidArgument, "p_s must lie in (0,1)");
  return gaussian ? chi2_quantile(p_s, n) : n / (1.0 - p_s);
}

std::optional<Ellipsoid> prs_stochastic(const Eigen::MatrixXd& A_cl,
                                        const Eigen::MatrixXd& noise_cov, double p_s,
                                        bool gaussian) {
  const int n = static_cast<int>(A_cl.rows());
  PMPSC_THROW_UNLESS(noise_cov.rows() == n && noise_cov.cols() == n, DimensionMismatch,
                     "prs: noise covariance shape");
  PMPSC_THROW_UNLESS(is_symmetric(noise_cov, 1e-10) && min_eigenvalue(noise_cov) >= -1e-12,
                     InvalidArgument, "prs: noise covariance must be PSD");
  const double level = prs_level(n, p_s, gaussian);
  if (noise_cov.cwiseAbs().maxCoeff() == 0.0) {
    solve_discrete_lyapunov(A_cl.transpose(), noise_cov);  // stability check
    return std::nullopt;
  }
  // Stationary covariance of e+ = A e + w solves S = A S A' + W.
  Eigen::MatrixXd S = solve_discrete_lyapunov(A_cl.transpose(), noise_cov);
  if (min_eigenvalue(S) <= 1e-12 * std::max(1.0, S.cwiseAbs().maxCoeff()))
    S += 1e-12 * Eigen::MatrixXd::Identity(n, n);
  const Eigen::MatrixXd Sinv = symmetrize(S.llt().solve(Eigen::MatrixXd::Identity(n, n)));
  return Ellipsoid(Eigen::VectorXd::Zero(n), Sinv, level);
}

double ris_lmi_max_eigenvalue(const Eigen::MatrixXd& A_cl, const Eigen::MatrixXd& P,
                              const Eigen::MatrixXd& Qinv, double tau0, double tau1) {
  const auto n = A_cl.rows();
  Eigen::MatrixXd M(2 * n, 2 * n);
  const Eigen::MatrixXd PA = P * A_cl;
  M.topLeftCorner(n, n) = A_cl.transpose() * PA - tau0 * P;
  M.topRightCorner(n, n) = PA.transpose();
  M.bottomLeftCorner(n, n) = PA;
  M.bottomRightCorner(n, n) = P - tau1 * Qinv;
  return max_eigenvalue(symmetrize(M));
}

namespace {

// min over tau0 in (0,1) of lambda_max(M(tau0, (1 - tau0) / (p_bar beta))).
// lambda_max of an affine matrix function is convex, so a coarse grid followed
// by golden-section search finds the global minimum.
double best_lmi_value(const Eigen::MatrixXd& A, const Eigen::MatrixXd& P,
                      const Eigen::MatrixXd& Qinv, double beta, double p_bar) {
  auto f = [&](double t0) {
    return ris_lmi_max_eigenvalue(A, P, Qinv, t0, (1.0 - t0) / (p_bar * beta));
  };
  constexpr int kGrid = 64;
  int best = 1;
  double fbest = std::numeric_limits<double>::infinity();
  for (int i = 1; i < kGrid; ++i) {
    const double v = f(static_cast<double>(i) / kGrid);
    if (v < fbest) {
      fbest = v;
      best = i;
    }
  }
  double lo = static_cast<double>(best - 1) / kGrid, hi = static_cast<double>(best + 1) / kGrid;
  const double g = 0.5 * (std::sqrt(5.0) - 1.0);
  double x1 = hi - g * (hi - lo), x2 = lo + g * (hi - lo);
  double f1 = f(x1), f2 = f(x2);
  for (int it = 0; it < 80 && hi - lo > 1e-13; ++it) {
    if (f1 < f2) {
      hi = x2;
      x2 = x1;
      f2 = f1;
      x1 = hi - g * (hi - lo);
      f1 = f(x1);
    } else {
      lo = x1;
      x1 = x2;
      f1 = f2;
      x2 = lo + g * (hi - lo);
      f2 = f(x2);
    }
  }
  return std::min({fbest, f1, f2});
}

}  // namespace

double ris_model_error(const Eigen::MatrixXd& A_cl, const Eigen::MatrixXd& P_shape,
                       const std::optional<Ellipsoid>& W_m, double p_bar, double alpha_cap) {
  const int n = static_cast<int>(A_cl.rows());
  PMPSC_THROW_UNLESS(P_shape.rows() == n && P_shape.cols() == n, DimensionMismatch,
                     "ris: shape dimension");
  PMPSC_THROW_UNLESS(spectral_radius(A_cl) < 1.0, Unstable, "ris: closed loop not stable");
  PMPSC_THROW_UNLESS(min_eigenvalue(P_shape) > 0, InvalidArgument, "ris: P must be positive definite");
  PMPSC_THROW_UNLESS(p_bar > 0, InvalidArgument, "ris: p_bar must be positive");
  constexpr double kFloor = 1e-12;
  if (!W_m) return kFloor;
  PMPSC_THROW_UNLESS(W_m->dim() == n, DimensionMismatch, "ris: disturbance dimension");
  PMPSC_THROW_UNLESS(W_m->c.cwiseAbs().maxCoeff() <= 1e-12, InvalidArgument,
                     "ris: disturbance set must be origin-centred");
  const Eigen::MatrixXd Qinv = W_m->S / W_m->rho;
  auto feasible = [&](double alpha) {
    return best_lmi_value(A_cl, P_shape, Qinv, 1.0 / alpha, p_bar) <= 0.0;
  };
  PMPSC_THROW_UNLESS(feasible(alpha_cap), InfeasibleAtCap,
                     "ris: no invariant level below the cap");
  // Geometric bisection on alpha (equivalently on beta = 1/alpha).
  double hi = alpha_cap, lo = kFloor;
  if (feasible(lo)) return lo;
  while (hi / lo - 1.0 > 1e-7) {
    const double mid = std::sqrt(hi * lo);
    (feasible(mid) ? hi : lo) = mid;
  }
  return hi;
}

SupportSet compose_tube(const std::optional<Ellipsoid>& E_alpha,
                        const std::optional<Ellipsoid>& R_s, int dim) {
  SupportSet s(dim);
  if (E_alpha) s.add(*E_alpha);
  if (R_s) s.add(*R_s);
  return s;
}

void TubeSpec::validate(const Eigen::MatrixXd& A, const Eigen::MatrixXd& B) const {
  PMPSC_THROW_UNLESS(spectral_radius(A + B * K) < 1.0, Unstable, "tube spec: A + B K not stable");
  levels.validate();
  PMPSC_THROW_UNLESS(alpha_x > 0 && alpha_u > 0, InvalidArgument, "tube spec: alpha must be positive");
}

namespace {

double tightening_score(const SupportSet& Rx, const SupportSet& Ru_in, const HPolytope& X,
                        const HPolytope& U) {
  double score = 0.0;
  for (int j = 0; j < X.num_facets(); ++j)
    score = std::max(score, Rx.support(X.H().row(j).transpose()) / std::max(X.h()[j], 1e-12));
  for (int j = 0; j < U.num_facets(); ++j)
    score = std::max(score, Ru_in.support(U.H().row(j).transpose()) / std::max(U.h()[j], 1e-12));
  return score;
}

}  // namespace

TubeSpec build_tube_spec(const Eigen::MatrixXd& A, const Eigen::MatrixXd& B,
                         const Eigen::MatrixXd& noise_cov, double w_max_x, double w_max_u,
                         const ProbabilityBudget& budget, const TubeOptions& options) {
  budget.validate();
  const int n = static_cast<int>(A.rows()), m = static_cast<int>(B.cols());
  PMPSC_THROW_UNLESS(w_max_x >= 0 && w_max_u >= 0, InvalidArgument, "tube: w_max must be >= 0");
  const Eigen::MatrixXd Q = options.Q_lqr.size() ? options.Q_lqr : Eigen::MatrixXd::Identity(n, n);
  const Eigen::MatrixXd R = options.R_lqr.size() ? options.R_lqr : Eigen::MatrixXd::Identity(m, m);
  const auto lqr = lqr_gain(A, B, Q, R);

  TubeSpec spec;
  spec.K = lqr.K;
  spec.levels = budget;
  spec.w_max_x = w_max_x;
  spec.w_max_u = w_max_u;
  const Eigen::MatrixXd Acl = A + B * lqr.K;
  spec.Sigma_inf = solve_discrete_lyapunov(Acl.transpose(), noise_cov);
  spec.Rs_x = prs_stochastic(Acl, noise_cov, budget.p_s_x, options.gaussian);
  spec.Rs_u = prs_stochastic(Acl, noise_cov, budget.p_s_u, options.gaussian);

  const Ellipsoid unit_ball(Eigen::VectorXd::Zero(n), Eigen::MatrixXd::Identity(n, n), 1.0);
  // alpha scales with w^2 for a ball (the LMI is homogeneous), so one
  // bisection per shape serves both tubes.
  auto assemble = [&](const Eigen::MatrixXd& P, double alpha1) {
    spec.P_shape = P;
    spec.alpha_x = w_max_x > 0 ? alpha1 * w_max_x * w_max_x : 1e-12;
    spec.alpha_u = w_max_u > 0 ? alpha1 * w_max_u * w_max_u : 1e-12;
    spec.E_x.reset();
    spec.E_u.reset();
    if (w_max_x > 0) spec.E_x = Ellipsoid(Eigen::VectorXd::Zero(n), P, spec.alpha_x);
    if (w_max_u > 0) spec.E_u = Ellipsoid(Eigen::VectorXd::Zero(n), P, spec.alpha_u);
    spec.R_x = compose_tube(spec.E_x, spec.Rs_x, n);
    spec.R_u = compose_tube(spec.E_u, spec.Rs_u, n);
  };

  const bool search = options.shape == RisShape::Invariant && options.X && options.U &&
                      (w_max_x > 0 || w_max_u > 0);
  if (!search) {
    const Eigen::MatrixXd P = symmetrize(lqr.P);
    assemble(P, ris_model_error(Acl, P, unit_ball, options.p_bar, options.alpha_cap));
  } else {
    // Shapes Sigma_c^{-1}, Sigma_c = (1 + 1/c) A Sigma_c A' + (1 + c) I: the
    // outer-ellipsoid recursion for A E (+) ball, one member per c.
    const double r = spectral_radius(Acl);
    const double c_min = r * r / (1.0 - r * r) * 1.0001 + 1e-9;
    double best = std::numeric_limits<double>::infinity();
    Eigen::MatrixXd best_P;
    double best_alpha = 0;
    constexpr int kShapes = 25;
    for (int i = 0; i < kShapes; ++i) {
      const double c = c_min * std::pow(1e4, static_cast<double>(i) / (kShapes - 1));
      const Eigen::MatrixXd Sig = solve_discrete_lyapunov(std::sqrt(1.0 + 1.0 / c) * Acl.transpose(),
                                                          (1.0 + c) * Eigen::MatrixXd::Identity(n, n));
      Eigen::MatrixXd P = symmetrize(Sig.llt().solve(Eigen::MatrixXd::Identity(n, n)));
      P /= P.norm();
      double alpha1;
      try {
        alpha1 = ris_model_error(Acl, P, unit_ball, options.p_bar, options.alpha_cap);
      } catch (const InfeasibleAtCap&) {
        continue;
      }
      assemble(P, alpha1);
      const double score = tightening_score(spec.R_x, spec.input_tube(), *options.X, *options.U);
      if (score < best) {
        best = score;
        best_P = P;
        best_alpha = alpha1;
      }
    }
    PMPSC_THROW_UNLESS(best_P.size() > 0, InfeasibleAtCap, "tube: no shape admits an invariant level");
    assemble(best_P, best_alpha);
  }
  spec.validate(A, B);
  return spec;
}

TightenedSets tighten_constraints(const HPolytope& X, const HPolytope& U, const TubeSpec& spec) {
  return {pontryagin_tighten(X, spec.R_x), pontryagin_tighten(U, spec.input_tube())};
}

}  // namespace pmpsc
