#pragma once

#include <vector>

#include "pmpsc/qp.hpp"

namespace pmpsc::detail {

// Mehrotra predictor-corrector interior-point method on the sparse
// quasi-definite KKT system. The symbolic factorization is cached while the
// constraint and cost matrices stay bitwise identical.
class IpmEngine {
 public:
  SolveReport solve(const QuadraticProgram& qp, const QpSettings& cfg);
  int factorizations() const { return nfact_; }

 private:
  using Ldlt = Eigen::SimplicialLDLT<SpMat, Eigen::Lower, Eigen::AMDOrdering<int>>;
  struct Contribution {
    int slot;
    int row;  // inequality row whose barrier weight scales coef
    double coef;
  };

  void setup(const QuadraticProgram& qp);

  bool have_cache_ = false;
  SpMat P_key_, Aeq_key_, Ain_key_;
  std::vector<int> rows_;  // finite inequality rows
  SpMat Ai_, AiT_;         // finite inequality rows only
  SpMat AeqT_;
  SpMat kkt_;              // lower triangle, values rewritten every iteration
  Eigen::VectorXd base_values_;
  std::vector<Contribution> contrib_;
  std::vector<int> diag_x_slot_, diag_y_slot_;
  Ldlt ldlt_;
  int nfact_ = 0;
};

}  // namespace pmpsc::detail
