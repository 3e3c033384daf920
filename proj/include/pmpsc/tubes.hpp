#pragma once

#include <optional>
#include <utility>

#include <Eigen/Dense>

#include "pmpsc/sets.hpp"

namespace pmpsc {

// Per-tube split p = p_s * p_m for the state tube (x) and the input tube (u).
struct ProbabilityBudget {
  double p_x = 0.98, p_u = 0.98;
  double p_m_x = 0.0, p_s_x = 0.0, p_m_u = 0.0, p_s_u = 0.0;

  // p_m = p_s = sqrt(p) for both tubes.
  static ProbabilityBudget even(double p_x, double p_u);
  // p_m given explicitly, p_s = p / p_m.
  static ProbabilityBudget split(double p_x, double p_u, double p_m_x, double p_m_u);
  void validate() const;
};

// {e : e' Sigma^-1 e <= p~} with Sigma the stationary covariance of
// e+ = A_cl e + w, Cov(w) = noise_cov; p~ = chi2_n(p_s) (gaussian) or
// n / (1 - p_s) (Chebyshev). nullopt when noise_cov is exactly zero.
std::optional<Ellipsoid> prs_stochastic(const Eigen::MatrixXd& A_cl,
                                        const Eigen::MatrixXd& noise_cov, double p_s,
                                        bool gaussian);
double prs_level(int n, double p_s, bool gaussian);

// Smallest alpha (relative bisection tolerance 1e-6) such that
// {e : e'P e <= alpha} is certified invariant for e+ = A_cl e + w, w in W_m,
// through the S-procedure LMI with multipliers tau0, tau1 and
// 1 - tau0 - p_bar tau1 / alpha >= 0. W_m = nullopt is the point {0}.
double ris_model_error(const Eigen::MatrixXd& A_cl, const Eigen::MatrixXd& P_shape,
                       const std::optional<Ellipsoid>& W_m, double p_bar = 1.0,
                       double alpha_cap = 1e12);

// Largest eigenvalue of the S-procedure block matrix at (tau0, tau1); the
// LMI holds iff this is <= 0.
double ris_lmi_max_eigenvalue(const Eigen::MatrixXd& A_cl, const Eigen::MatrixXd& P,
                              const Eigen::MatrixXd& Qinv, double tau0, double tau1);

// E (+) R_s; missing parts are the point {0}.
SupportSet compose_tube(const std::optional<Ellipsoid>& E_alpha,
                        const std::optional<Ellipsoid>& R_s, int dim);

enum class RisShape {
  Lqr,        // LQR value matrix
  Invariant,  // best of a one-parameter family of invariant-ellipsoid shapes
};

struct TubeOptions {
  Eigen::MatrixXd Q_lqr;  // empty -> identity
  Eigen::MatrixXd R_lqr;  // empty -> identity
  bool gaussian = true;
  double p_bar = 1.0;
  double alpha_cap = 1e12;
  RisShape shape = RisShape::Lqr;
  // Constraint sets scored by the Invariant shape search (ignored for Lqr).
  std::optional<HPolytope> X, U;
};

struct TubeSpec {
  Eigen::MatrixXd K;  // u = v + K (x - z)
  SupportSet R_x{0};
  SupportSet R_u{0};  // state-space tube at the input level; the input tube is K R_u
  ProbabilityBudget levels;
  Eigen::MatrixXd P_shape;
  double alpha_x = 0.0, alpha_u = 0.0;
  double w_max_x = 0.0, w_max_u = 0.0;
  Eigen::MatrixXd Sigma_inf;
  std::optional<Ellipsoid> E_x, E_u, Rs_x, Rs_u;

  int n() const { return static_cast<int>(K.cols()); }
  int m() const { return static_cast<int>(K.rows()); }
  SupportSet input_tube() const { return map_tube(K, R_u); }
  void validate(const Eigen::MatrixXd& A, const Eigen::MatrixXd& B) const;
};

TubeSpec build_tube_spec(const Eigen::MatrixXd& A, const Eigen::MatrixXd& B,
                         const Eigen::MatrixXd& noise_cov, double w_max_x, double w_max_u,
                         const ProbabilityBudget& budget, const TubeOptions& options = {});

struct TightenedSets {
  HPolytope X;
  HPolytope U;
};
TightenedSets tighten_constraints(const HPolytope& X, const HPolytope& U, const TubeSpec& spec);

}  // namespace pmpsc
