#include "pmpsc/linalg.hpp"

#include <cmath>

#include <Eigen/Eigenvalues>

#include "pmpsc/errors.hpp"

namespace pmpsc {

bool is_symmetric(const Eigen::MatrixXd& M, double tol) {
  if (M.rows() != M.cols()) return false;
  const double scale = std::max(1.0, M.cwiseAbs().maxCoeff());
  return (M - M.transpose()).cwiseAbs().maxCoeff() <= tol * scale;
}

namespace {
Eigen::VectorXd sym_eigenvalues(const Eigen::MatrixXd& M) {
  PMPSC_THROW_UNLESS(M.rows() == M.cols() && M.rows() > 0, DimensionMismatch,
                     "eigenvalues need a nonempty square matrix");
  PMPSC_THROW_UNLESS(is_symmetric(M), InvalidArgument,
                     "matrix is not symmetric");
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(symmetrize(M),
                                                    Eigen::EigenvaluesOnly);
  return es.eigenvalues();
}
}  // namespace

double min_eigenvalue(const Eigen::MatrixXd& M) {
  return sym_eigenvalues(M).minCoeff();
}

double max_eigenvalue(const Eigen::MatrixXd& M) {
  return sym_eigenvalues(M).maxCoeff();
}

double spectral_radius(const Eigen::MatrixXd& A) {
  PMPSC_THROW_UNLESS(A.rows() == A.cols(), DimensionMismatch,
                     "spectral radius of non-square matrix");
  if (A.size() == 0) return 0.0;
  Eigen::EigenSolver<Eigen::MatrixXd> es(A, false);
  return es.eigenvalues().cwiseAbs().maxCoeff();
}

Eigen::MatrixXd solve_discrete_lyapunov(const Eigen::MatrixXd& A_cl,
                                        const Eigen::MatrixXd& W) {
  const auto n = A_cl.rows();
  PMPSC_THROW_UNLESS(A_cl.cols() == n && W.rows() == n && W.cols() == n,
                     DimensionMismatch, "lyapunov: shapes disagree");
  PMPSC_THROW_UNLESS(spectral_radius(A_cl) < 1.0 - 1e-9, Unstable,
                     "lyapunov: spectral radius >= 1");

  // Squared Smith iteration; after k rounds S holds 2^k series terms.
  Eigen::MatrixXd S = symmetrize(W);
  Eigen::MatrixXd Ak = A_cl;
  for (int it = 0; it < 64; ++it) {
    const Eigen::MatrixXd inc = Ak.transpose() * S * Ak;
    S += inc;
    Ak = Ak * Ak;
    if (inc.cwiseAbs().maxCoeff() <= 1e-17 * std::max(1.0, S.cwiseAbs().maxCoeff()) ||
        Ak.cwiseAbs().maxCoeff() < 1e-300)
      break;
  }
  S = symmetrize(S);
  // A few fixed-point sweeps polish the last bits.
  for (int it = 0; it < 2; ++it)
    S = symmetrize(A_cl.transpose() * S * A_cl + W);
  return S;
}

LqrResult lqr_gain(const Eigen::MatrixXd& A, const Eigen::MatrixXd& B,
                   const Eigen::MatrixXd& Q, const Eigen::MatrixXd& R) {
  const auto n = A.rows();
  const auto m = B.cols();
  PMPSC_THROW_UNLESS(A.cols() == n && B.rows() == n && Q.rows() == n &&
                         Q.cols() == n && R.rows() == m && R.cols() == m,
                     DimensionMismatch, "lqr: shapes disagree");
  PMPSC_THROW_UNLESS(is_symmetric(Q, 1e-9) && is_symmetric(R, 1e-9),
                     InvalidArgument, "lqr: Q and R must be symmetric");
  PMPSC_THROW_UNLESS(min_eigenvalue(R) > 0, InvalidArgument,
                     "lqr: R must be positive definite");

  const Eigen::MatrixXd I = Eigen::MatrixXd::Identity(n, n);
  Eigen::MatrixXd Ak = A;
  Eigen::MatrixXd Gk = B * R.llt().solve(B.transpose());
  Eigen::MatrixXd Hk = symmetrize(Q);
  bool converged = false;
  for (int it = 0; it < 100; ++it) {
    const Eigen::PartialPivLU<Eigen::MatrixXd> lu(I + Gk * Hk);
    const Eigen::MatrixXd WinvA = lu.solve(Ak);
    const Eigen::MatrixXd WinvG = lu.solve(Gk);
    const Eigen::MatrixXd Hnext = symmetrize(Hk + Ak.transpose() * Hk * WinvA);
    Gk = symmetrize(Gk + Ak * WinvG * Ak.transpose());
    Ak = Ak * WinvA;
    const double change = (Hnext - Hk).cwiseAbs().maxCoeff();
    Hk = Hnext;
    if (!Hk.allFinite()) break;
    if (change <= 1e-14 * std::max(1.0, Hk.cwiseAbs().maxCoeff())) {
      converged = true;
      break;
    }
  }
  PMPSC_THROW_UNLESS(converged, NoConvergence, "lqr: doubling did not settle");

  LqrResult out;
  out.P = Hk;
  const Eigen::MatrixXd S = R + B.transpose() * out.P * B;
  out.K = -S.ldlt().solve(B.transpose() * out.P * A);
  const Eigen::MatrixXd residual =
      A.transpose() * out.P * A - out.P + Q -
      A.transpose() * out.P * B * S.ldlt().solve(B.transpose() * out.P * A);
  const double scale = std::max(1.0, out.P.cwiseAbs().maxCoeff());
  PMPSC_THROW_UNLESS(residual.cwiseAbs().maxCoeff() <= 1e-9 * scale,
                     NoConvergence, "lqr: riccati residual too large");
  PMPSC_THROW_UNLESS(spectral_radius(A + B * out.K) < 1.0, NoConvergence,
                     "lqr: closed loop not stable (pair not stabilizable?)");
  return out;
}

}  // namespace pmpsc
