#pragma once

#include <Eigen/Dense>

namespace pmpsc {

// Extreme eigenvalues of a symmetric matrix. Throws InvalidArgument when M is
// not symmetric to 1e-10 (relative to its norm).
double min_eigenvalue(const Eigen::MatrixXd& M);
double max_eigenvalue(const Eigen::MatrixXd& M);

// Largest eigenvalue modulus.
double spectral_radius(const Eigen::MatrixXd& A);

// Solves A_cl' * S * A_cl - S + W = 0 by squared Smith iteration.
// Note the transpose: S = sum_j (A_cl')^j W A_cl^j. The stationary covariance
// of e+ = A e + w is therefore solve_discrete_lyapunov(A.transpose(), W).
// Throws Unstable if spectral_radius(A_cl) >= 1 - 1e-9.
Eigen::MatrixXd solve_discrete_lyapunov(const Eigen::MatrixXd& A_cl,
                                        const Eigen::MatrixXd& W);

struct LqrResult {
  Eigen::MatrixXd K;  // u = K x, closed loop A + B K
  Eigen::MatrixXd P;  // DARE solution (value matrix)
};

// Infinite-horizon discrete LQR through the structure-preserving doubling
// algorithm. Throws NoConvergence if the DARE residual does not reach 1e-9
// (relative) or the closed loop is not stable.
LqrResult lqr_gain(const Eigen::MatrixXd& A, const Eigen::MatrixXd& B,
                   const Eigen::MatrixXd& Q, const Eigen::MatrixXd& R);

// 0.5 * (M + M').
inline Eigen::MatrixXd symmetrize(const Eigen::MatrixXd& M) {
  return 0.5 * (M + M.transpose());
}

bool is_symmetric(const Eigen::MatrixXd& M, double tol = 1e-10);

}  // namespace pmpsc
