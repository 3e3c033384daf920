#include "pmpsc/model.hpp"

#include <cmath>

#include "pmpsc/errors.hpp"
#include "pmpsc/linalg.hpp"
#include "pmpsc/stats.hpp"

namespace pmpsc {

void Dataset::add(Eigen::VectorXd x, Eigen::VectorXd u, Eigen::VectorXd y) {
  PMPSC_THROW_UNLESS(x.size() == n_ && u.size() == m_ && y.size() == n_, DimensionMismatch,
                     "dataset: record dimensions");
  PMPSC_THROW_UNLESS(x.allFinite() && u.allFinite() && y.allFinite(), InvalidArgument,
                     "dataset: non-finite record");
  records_.push_back({std::move(x), std::move(u), std::move(y)});
}

Eigen::MatrixXd Dataset::regressors() const {
  Eigen::MatrixXd Phi(records_.size(), n_ + m_);
  for (std::size_t k = 0; k < records_.size(); ++k) {
    Phi.row(k).head(n_) = records_[k].x.transpose();
    Phi.row(k).tail(m_) = records_[k].u.transpose();
  }
  return Phi;
}

Eigen::MatrixXd Dataset::successors() const {
  Eigen::MatrixXd Y(records_.size(), n_);
  for (std::size_t k = 0; k < records_.size(); ++k) Y.row(k) = records_[k].y.transpose();
  return Y;
}

BLRPosterior fit_blr(const Dataset& data, const std::vector<Eigen::MatrixXd>& prior_covs,
                     double sigma_s) {
  const int n = data.n(), m = data.m(), p = n + m;
  PMPSC_THROW_UNLESS(sigma_s > 0, InvalidArgument, "blr: sigma_s must be positive");
  PMPSC_THROW_UNLESS(static_cast<int>(prior_covs.size()) == n, DimensionMismatch,
                     "blr: one prior covariance per output");
  BLRPosterior post;
  post.n = n;
  post.m = m;
  post.sigma_s = sigma_s;
  post.prior_covs = prior_covs;
  post.mean = Eigen::MatrixXd::Zero(p, n);
  const Eigen::MatrixXd Phi = data.regressors();
  const Eigen::MatrixXd Y = data.successors();
  const double is2 = 1.0 / (sigma_s * sigma_s);
  const Eigen::MatrixXd G = Phi.transpose() * Phi;
  for (int i = 0; i < n; ++i) {
    const auto& S = prior_covs[i];
    PMPSC_THROW_UNLESS(S.rows() == p && S.cols() == p, DimensionMismatch,
                       "blr: prior covariance shape");
    PMPSC_THROW_UNLESS(is_symmetric(S, 1e-10) && min_eigenvalue(S) > 0, InvalidArgument,
                       "blr: prior covariance must be positive definite");
    const Eigen::MatrixXd prior_prec = symmetrize(S.inverse());
    const Eigen::MatrixXd C = symmetrize(is2 * G + prior_prec);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(C, Eigen::EigenvaluesOnly);
    const double cond = es.eigenvalues().maxCoeff() / es.eigenvalues().minCoeff();
    PMPSC_THROW_UNLESS(es.eigenvalues().minCoeff() > 0 && cond <= 1e12, IllConditioned,
                       "blr: posterior precision condition number " + std::to_string(cond));
    if (!data.empty()) post.mean.col(i) = is2 * C.ldlt().solve(Phi.transpose() * Y.col(i));
    post.precisions.push_back(C);
  }
  return post;
}

BLRPosterior fit_blr(const Dataset& data, double prior_variance, double sigma_s) {
  const int p = data.n() + data.m();
  return fit_blr(data,
                 std::vector<Eigen::MatrixXd>(data.n(), prior_variance * Eigen::MatrixXd::Identity(p, p)),
                 sigma_s);
}

double regressor_condition(const Dataset& data) {
  if (data.empty()) return std::numeric_limits<double>::infinity();
  const Eigen::MatrixXd Phi = data.regressors();
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(Phi.transpose() * Phi, Eigen::EigenvaluesOnly);
  const double lo = es.eigenvalues().minCoeff();
  if (lo <= 0) return std::numeric_limits<double>::infinity();
  return es.eigenvalues().maxCoeff() / lo;
}

std::pair<Eigen::MatrixXd, Eigen::MatrixXd> nominal_matrices(const BLRPosterior& post) {
  const Eigen::MatrixXd AB = post.mean.transpose();
  return {AB.leftCols(post.n), AB.rightCols(post.m)};
}

std::vector<Eigen::MatrixXd> confidence_vertices(const BLRPosterior& post, double p_m,
                                                 VertexScale scale) {
  PMPSC_THROW_UNLESS(p_m > 0 && p_m < 1, InvalidArgument, "p_m must lie in (0,1)");
  const int n = post.n, p = post.n + post.m;
  const double d = static_cast<double>(n) * p;
  const double r = std::sqrt(chi2_quantile(p_m, d));
  const double s = scale == VertexScale::SqrtD ? std::sqrt(d) : std::sqrt(2.0);
  std::vector<Eigen::MatrixXd> out;
  out.reserve(2 * n * p);
  for (int i = 0; i < n; ++i) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(post.precisions[i]);
    for (int k = 0; k < p; ++k) {
      const Eigen::VectorXd delta =
          s * r / std::sqrt(es.eigenvalues()[k]) * es.eigenvectors().col(k);
      for (double sign : {1.0, -1.0}) {
        Eigen::MatrixXd th = post.mean;
        th.col(i) += sign * delta;
        out.push_back(std::move(th));
      }
    }
  }
  return out;
}

std::optional<Ellipsoid> ModelErrorBound::ball() const {
  if (w_max <= 0) return std::nullopt;
  const int n = X_o.dim();
  return Ellipsoid(Eigen::VectorXd::Zero(n), Eigen::MatrixXd::Identity(n, n) / (w_max * w_max), 1.0);
}

ModelErrorBound model_error_bound(const std::vector<Eigen::MatrixXd>& vertices, double p_m,
                                  const HPolytope& X_o, const HPolytope& U_o,
                                  const Eigen::MatrixXd& A, const Eigen::MatrixXd& B) {
  const int n = static_cast<int>(A.rows());
  PMPSC_THROW_UNLESS(X_o.dim() == n && U_o.dim() == B.cols() && B.rows() == n,
                     DimensionMismatch, "model error: dimensions");
  const auto corners = box_vertices(cartesian_product(X_o, U_o));
  Eigen::MatrixXd AB(n, A.cols() + B.cols());
  AB << A, B;
  double w = 0.0;
  for (const auto& th : vertices) {
    PMPSC_THROW_UNLESS(th.rows() == AB.cols() && th.cols() == n, DimensionMismatch,
                       "model error: vertex shape");
    const Eigen::MatrixXd D = th.transpose() - AB;
    for (const auto& phi : corners) w = std::max(w, (D * phi).norm());
  }
  return ModelErrorBound{w, p_m, X_o, U_o};
}

ModelErrorBound model_error_bound(const BLRPosterior& post, double p_m, const HPolytope& X_o,
                                  const HPolytope& U_o, const Eigen::MatrixXd& A,
                                  const Eigen::MatrixXd& B, VertexScale scale) {
  return model_error_bound(confidence_vertices(post, p_m, scale), p_m, X_o, U_o, A, B);
}

bool box_contains(const HPolytope& outer, const HPolytope& inner, double tol) {
  const auto [olo, ohi] = outer.box_bounds();
  const auto [ilo, ihi] = inner.box_bounds();
  return (ilo.array() >= olo.array() - tol).all() && (ihi.array() <= ohi.array() + tol).all();
}

}  // namespace pmpsc
