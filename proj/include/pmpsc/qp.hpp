#pragma once

#include <memory>
#include <string>

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>

namespace pmpsc {

using SpMat = Eigen::SparseMatrix<double, Eigen::ColMajor, int>;

// minimize 0.5 x'Px + q'x + constant
// s.t.     A_eq x  = b_eq
//          A_in x <= b_in        (entries of b_in may be +inf)
// P is stored in full (both triangles).
struct QuadraticProgram {
  SpMat P;
  Eigen::VectorXd q;
  SpMat A_eq;
  Eigen::VectorXd b_eq;
  SpMat A_in;
  Eigen::VectorXd b_in;
  double constant = 0.0;

  int num_vars() const { return static_cast<int>(q.size()); }
  double objective(const Eigen::VectorXd& x) const;
  // Throws DimensionMismatch / InvalidArgument. The PSD test is a dense
  // eigenvalue computation and can be skipped by hot callers whose P is PSD
  // by construction.
  void validate(bool check_psd = true) const;
};

// Convenience builder from dense blocks; empty matrices mean "no rows".
QuadraticProgram make_qp(const Eigen::MatrixXd& P, const Eigen::VectorXd& q,
                         const Eigen::MatrixXd& A_eq,
                         const Eigen::VectorXd& b_eq,
                         const Eigen::MatrixXd& A_in,
                         const Eigen::VectorXd& b_in, double constant = 0.0);

enum class QpStatus { Optimal, Infeasible, MaxIter, NumericalFailure };
std::string to_string(QpStatus s);

// Residuals are relative: |r|_inf / (1 + scale), where scale is the largest
// term entering the residual. Optimal implies both are <= tol.
struct SolveReport {
  QpStatus status = QpStatus::NumericalFailure;
  Eigen::VectorXd x_opt;
  Eigen::VectorXd y_eq;  // multipliers, sign convention of L = f + y'(Ax - b)
  Eigen::VectorXd y_in;
  double objective = 0.0;
  double primal_residual = 0.0;
  double dual_residual = 0.0;
  int iterations = 0;
  bool polished = false;
};

enum class QpMethod {
  Admm,          // operator splitting; cheap iterations, warm-startable
  InteriorPoint  // primal-dual; few iterations, robust on degenerate problems
};

struct QpSettings {
  QpMethod method = QpMethod::Admm;
  double tol = 1e-8;
  int max_iter = 20000;
  double rho = 0.1;
  double sigma = 1e-6;
  double alpha = 1.6;
  bool adaptive_rho = true;
  int adaptive_rho_interval = 50;  // iterations between rho updates
  int check_every = 10;
  bool polish = true;
  int scaling_iters = 10;
  double eps_infeasible = 1e-7;
  bool warm_start = true;
};

// Operator-splitting (ADMM) QP solver. The scaled KKT factorization is cached
// and reused across solve() calls while P and the constraint matrices stay
// bitwise identical; only q and the right-hand sides may change cheaply.
class QpSolver {
 public:
  explicit QpSolver(QpSettings settings = {});
  ~QpSolver();
  QpSolver(QpSolver&&) noexcept;
  QpSolver& operator=(QpSolver&&) noexcept;
  // Copies keep the settings but start with an empty cache.
  QpSolver(const QpSolver&);
  QpSolver& operator=(const QpSolver&);

  SolveReport solve(const QuadraticProgram& qp);

  // Initial iterate for the next solve (unscaled primal, stacked duals
  // [y_eq; y_in]). Ignored if dimensions do not match.
  void warm_start(const Eigen::VectorXd& x, const Eigen::VectorXd& y);
  void reset();

  const QpSettings& settings() const { return settings_; }
  QpSettings& mutable_settings() { return settings_; }
  int factorizations() const;

 private:
  struct Impl;
  QpSettings settings_;
  std::unique_ptr<Impl> impl_;
};

SolveReport solve_qp(const QuadraticProgram& qp, double tol = 1e-8,
                     int max_iter = 20000);

}  // namespace pmpsc
