#pragma once

#include <optional>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "pmpsc/sets.hpp"

namespace pmpsc {

struct Record {
  Eigen::VectorXd x, u, y;  // state, input, measured successor
};

class Dataset {
 public:
  Dataset(int n, int m) : n_(n), m_(m) {}
  void add(Eigen::VectorXd x, Eigen::VectorXd u, Eigen::VectorXd y);
  int n() const { return n_; }
  int m() const { return m_; }
  std::size_t size() const { return records_.size(); }
  bool empty() const { return records_.empty(); }
  const std::vector<Record>& records() const { return records_; }
  // Stacked regressors, one row (x', u') per record.
  Eigen::MatrixXd regressors() const;
  Eigen::MatrixXd successors() const;

 private:
  int n_, m_;
  std::vector<Record> records_;
};

// Per output column i: theta_i ~ N(mean_i, C_i^{-1}) with
// C_i = sigma^-2 Phi'Phi + Sigma_i^{-1}, mean_i = sigma^-2 C_i^{-1} Phi' y_i.
struct BLRPosterior {
  int n = 0, m = 0;
  Eigen::MatrixXd mean;                   // (n+m) x n
  std::vector<Eigen::MatrixXd> precisions;  // n blocks, (n+m) x (n+m)
  double sigma_s = 0.0;
  std::vector<Eigen::MatrixXd> prior_covs;
};

// Throws IllConditioned if some C_i has condition number above 1e12.
BLRPosterior fit_blr(const Dataset& data, const std::vector<Eigen::MatrixXd>& prior_covs,
                     double sigma_s);
BLRPosterior fit_blr(const Dataset& data, double prior_variance, double sigma_s);

// Condition number of Phi'Phi (infinite when rank deficient).
double regressor_condition(const Dataset& data);

std::pair<Eigen::MatrixXd, Eigen::MatrixXd> nominal_matrices(const BLRPosterior& post);

// Factor applied to the confidence-ellipsoid axis endpoints. sqrt(d) makes the
// cross-polytope hull contain the ellipsoid; sqrt(2) is exact only for d = 2.
enum class VertexScale { SqrtD, Sqrt2 };

// 2d parameter matrices, d = n(n+m): mean +- scale * r / sqrt(lambda_k) u_k
// over the eigenpairs of the block-diagonal precision, r^2 = chi2_d(p_m).
std::vector<Eigen::MatrixXd> confidence_vertices(const BLRPosterior& post, double p_m,
                                                 VertexScale scale = VertexScale::SqrtD);

struct ModelErrorBound {
  double w_max = 0.0;
  double p_m = 0.0;
  HPolytope X_o;
  HPolytope U_o;
  // {w : w'w <= w_max^2}, or nullopt for the point set when w_max = 0.
  std::optional<Ellipsoid> ball() const;
};

// w_max = max_j max over corners of X_o x U_o of |(theta_j' - [A B]) (x; u)|_2.
ModelErrorBound model_error_bound(const BLRPosterior& post, double p_m, const HPolytope& X_o,
                                  const HPolytope& U_o, const Eigen::MatrixXd& A,
                                  const Eigen::MatrixXd& B,
                                  VertexScale scale = VertexScale::SqrtD);
ModelErrorBound model_error_bound(const std::vector<Eigen::MatrixXd>& vertices, double p_m,
                                  const HPolytope& X_o, const HPolytope& U_o,
                                  const Eigen::MatrixXd& A, const Eigen::MatrixXd& B);

// Is the box `inner` inside the box `outer`?
bool box_contains(const HPolytope& outer, const HPolytope& inner, double tol = 1e-12);

}  // namespace pmpsc
