#include "qp_ipm.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>

namespace pmpsc::detail {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kReg = 1e-8;
constexpr double kRegMax = 1e-4;

bool same_matrix(const SpMat& a, const SpMat& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols() || a.nonZeros() != b.nonZeros())
    return false;
  if (!a.isCompressed() || !b.isCompressed()) return false;
  const auto nnz = static_cast<std::size_t>(a.nonZeros());
  return std::memcmp(a.outerIndexPtr(), b.outerIndexPtr(), sizeof(int) * (a.cols() + 1)) == 0 &&
         std::memcmp(a.innerIndexPtr(), b.innerIndexPtr(), sizeof(int) * nnz) == 0 &&
         std::memcmp(a.valuePtr(), b.valuePtr(), sizeof(double) * nnz) == 0;
}

double inf_norm(const Eigen::VectorXd& v) { return v.size() ? v.cwiseAbs().maxCoeff() : 0.0; }

// Largest step in (0, 1] keeping v + a dv >= 0, damped by 0.99 when limiting.
double max_step(const Eigen::VectorXd& v, const Eigen::VectorXd& dv) {
  double a = 1.0;
  for (Eigen::Index i = 0; i < v.size(); ++i)
    if (dv[i] < 0) a = std::min(a, -v[i] / dv[i]);
  return a;
}

int slot_of(const SpMat& M, int row, int col) {
  const int* begin = M.innerIndexPtr() + M.outerIndexPtr()[col];
  const int* end = M.innerIndexPtr() + M.outerIndexPtr()[col + 1];
  const int* it = std::lower_bound(begin, end, row);
  return static_cast<int>(it - M.innerIndexPtr());
}

}  // namespace

void IpmEngine::setup(const QuadraticProgram& qp) {
  const int n = qp.num_vars();
  const int me = static_cast<int>(qp.b_eq.size());
  rows_.clear();
  for (int i = 0; i < qp.b_in.size(); ++i)
    if (qp.b_in[i] < kInf) rows_.push_back(i);
  const int mi = static_cast<int>(rows_.size());
  {
    std::vector<Eigen::Triplet<double>> t;
    Eigen::SparseMatrix<double, Eigen::RowMajor, int> R = qp.A_in;
    for (int k = 0; k < mi; ++k)
      for (decltype(R)::InnerIterator it(R, rows_[k]); it; ++it) t.emplace_back(k, it.col(), it.value());
    Ai_.resize(mi, n);
    Ai_.setFromTriplets(t.begin(), t.end());
    Ai_.makeCompressed();
    AiT_ = Ai_.transpose();
    AiT_.makeCompressed();
  }
  AeqT_ = qp.A_eq.transpose();
  AeqT_.makeCompressed();

  // Pattern: P (lower) + diag + Ai' D Ai (lower) on the x block, A_eq below,
  // -reg on the y block.
  std::vector<Eigen::Triplet<double>> t;
  for (int k = 0; k < qp.P.outerSize(); ++k)
    for (SpMat::InnerIterator it(qp.P, k); it; ++it)
      if (it.row() >= it.col()) t.emplace_back(it.row(), it.col(), 0.0);
  for (int j = 0; j < n; ++j) t.emplace_back(j, j, 0.0);
  Eigen::SparseMatrix<double, Eigen::RowMajor, int> AiR = Ai_;
  for (int r = 0; r < mi; ++r)
    for (decltype(AiR)::InnerIterator a(AiR, r); a; ++a)
      for (decltype(AiR)::InnerIterator b(AiR, r); b; ++b)
        if (a.col() >= b.col()) t.emplace_back(static_cast<int>(a.col()), static_cast<int>(b.col()), 0.0);
  for (int k = 0; k < qp.A_eq.outerSize(); ++k)
    for (SpMat::InnerIterator it(qp.A_eq, k); it; ++it) t.emplace_back(n + it.row(), it.col(), 0.0);
  for (int i = 0; i < me; ++i) t.emplace_back(n + i, n + i, 0.0);
  kkt_.resize(n + me, n + me);
  kkt_.setFromTriplets(t.begin(), t.end());
  kkt_.makeCompressed();

  base_values_ = Eigen::VectorXd::Zero(kkt_.nonZeros());
  for (int k = 0; k < qp.P.outerSize(); ++k)
    for (SpMat::InnerIterator it(qp.P, k); it; ++it)
      if (it.row() >= it.col()) base_values_[slot_of(kkt_, it.row(), it.col())] += it.value();
  diag_x_slot_.resize(n);
  for (int j = 0; j < n; ++j) diag_x_slot_[j] = slot_of(kkt_, j, j);
  for (int k = 0; k < qp.A_eq.outerSize(); ++k)
    for (SpMat::InnerIterator it(qp.A_eq, k); it; ++it)
      base_values_[slot_of(kkt_, n + it.row(), it.col())] += it.value();
  diag_y_slot_.resize(me);
  for (int i = 0; i < me; ++i) diag_y_slot_[i] = slot_of(kkt_, n + i, n + i);
  contrib_.clear();
  for (int r = 0; r < mi; ++r)
    for (decltype(AiR)::InnerIterator a(AiR, r); a; ++a)
      for (decltype(AiR)::InnerIterator b(AiR, r); b; ++b)
        if (a.col() >= b.col())
          contrib_.push_back({slot_of(kkt_, static_cast<int>(a.col()), static_cast<int>(b.col())), r,
                              a.value() * b.value()});
  ldlt_.analyzePattern(kkt_);

  P_key_ = qp.P;
  Aeq_key_ = qp.A_eq;
  Ain_key_ = qp.A_in;
  P_key_.makeCompressed();
  Aeq_key_.makeCompressed();
  Ain_key_.makeCompressed();
  have_cache_ = true;
}

SolveReport IpmEngine::solve(const QuadraticProgram& qp, const QpSettings& cfg) {
  qp.validate(/*check_psd=*/false);
  if (!(have_cache_ && same_matrix(qp.P, P_key_) && same_matrix(qp.A_eq, Aeq_key_) &&
        same_matrix(qp.A_in, Ain_key_)))
    setup(qp);

  const int n = qp.num_vars();
  const int me = static_cast<int>(qp.b_eq.size());
  const int mi = static_cast<int>(rows_.size());
  Eigen::VectorXd b(mi);
  for (int k = 0; k < mi; ++k) b[k] = qp.b_in[rows_[k]];
  const double bnorm = std::max(inf_norm(b), inf_norm(qp.b_eq));

  Eigen::VectorXd d = Eigen::VectorXd::Ones(mi);  // barrier weights z / s
  // Static regularization, raised when a pivot breaks down; refinement
  // below removes its effect on the solution.
  auto factor = [&]() {
    for (double reg = kReg; reg <= kRegMax; reg *= 100) {
      double* v = kkt_.valuePtr();
      std::memcpy(v, base_values_.data(), sizeof(double) * base_values_.size());
      for (int j = 0; j < n; ++j) v[diag_x_slot_[j]] += reg;
      // Much lighter on the equality block: its Schur complement can be tiny
      // once barrier weights blow up, and refinement then stalls.
      for (int i = 0; i < me; ++i) v[diag_y_slot_[i]] -= 1e-4 * reg;
      for (const auto& c : contrib_) v[c.slot] += d[c.row] * c.coef;
      ldlt_.factorize(kkt_);
      ++nfact_;
      if (ldlt_.info() == Eigen::Success && ldlt_.vectorD().allFinite()) return true;
    }
    return false;
  };
  // Solve the unregularized system by iterative refinement.
  auto kkt_solve = [&](const Eigen::VectorXd& rhs) {
    Eigen::VectorXd sol = ldlt_.solve(rhs);
    for (int it = 0; it < 10; ++it) {
      const Eigen::VectorXd sx = sol.head(n), sy = sol.tail(me);
      Eigen::VectorXd r(n + me);
      r.head(n) = rhs.head(n) - (qp.P * sx + AiT_ * d.cwiseProduct(Ai_ * sx) + AeqT_ * sy);
      r.tail(me) = rhs.tail(me) - qp.A_eq * sx;
      if (inf_norm(r) <= 1e-14 * (1.0 + inf_norm(rhs))) break;
      sol += ldlt_.solve(r);
    }
    return sol;
  };

  SolveReport rep;
  // Initial point: least-squares-ish solve with unit weights, slacks pushed
  // into the interior.
  Eigen::VectorXd x(n), y = Eigen::VectorXd::Zero(me), z = Eigen::VectorXd::Ones(mi), s(mi);
  if (!factor()) {
    rep.status = QpStatus::NumericalFailure;
    return rep;
  }
  {
    Eigen::VectorXd rhs(n + me);
    rhs.head(n) = -qp.q + AiT_ * b;
    rhs.tail(me) = qp.b_eq;
    const Eigen::VectorXd sol = kkt_solve(rhs);
    x = sol.head(n);
    y = sol.tail(me);
    s = b - Ai_ * x;
    const double smin = mi ? s.minCoeff() : 1.0;
    if (smin < 1.0) s.array() += 1.0 - smin;
    z = Eigen::VectorXd::Ones(mi);
  }

  const int max_iter = std::min(cfg.max_iter, 200);
  double prim = kInf, dual = kInf;
  for (int k = 0; k <= max_iter; ++k) {
    const Eigen::VectorXd Px = qp.P * x;
    const Eigen::VectorXd Aix = Ai_ * x;
    const Eigen::VectorXd Aex = qp.A_eq * x;
    const Eigen::VectorXd ATy = AeqT_ * y + AiT_ * z;
    const Eigen::VectorXd rd = Px + qp.q + ATy;
    const Eigen::VectorXd re = Aex - qp.b_eq;
    const Eigen::VectorXd ri = Aix + s - b;
    const Eigen::VectorXd viol = (Aix - b).cwiseMax(0.0);
    const double pscale = std::max({inf_norm(Aix), inf_norm(Aex), bnorm});
    prim = std::max(inf_norm(re), inf_norm(viol)) / (1.0 + pscale);
    dual = inf_norm(rd) / (1.0 + std::max({inf_norm(Px), inf_norm(ATy), inf_norm(qp.q)}));
    const double fobj = 0.5 * x.dot(Px) + qp.q.dot(x);
    const double gap = mi ? s.dot(z) : 0.0;
    const double rinorm = inf_norm(ri) / (1.0 + pscale);
    if (prim <= cfg.tol && dual <= cfg.tol && rinorm <= cfg.tol &&
        gap <= cfg.tol * std::max(1.0, std::abs(fobj))) {
      rep.status = QpStatus::Optimal;
      rep.iterations = k;
      break;
    }
    // Farkas certificate once the duals blow up.
    const double ynorm = std::max(inf_norm(y), inf_norm(z));
    if (ynorm > 1e8) {
      const double certr = inf_norm(ATy) / ynorm;
      const double certb = (qp.b_eq.dot(y) + b.dot(z)) / ynorm;
      if (certr <= cfg.eps_infeasible && certb < -cfg.eps_infeasible) {
        rep.status = QpStatus::Infeasible;
        rep.iterations = k;
        break;
      }
    }
    if (k == max_iter) {
      rep.status = QpStatus::MaxIter;
      rep.iterations = k;
      break;
    }

    d = z.cwiseQuotient(s);
    if (!factor()) {
      rep.status = QpStatus::NumericalFailure;
      rep.iterations = k;
      break;
    }
    // Eliminating ds, dz:  ds = -ri - Ai dx,  dz = (-rc - z o ds) / s.
    auto direction = [&](const Eigen::VectorXd& rc, Eigen::VectorXd& dx, Eigen::VectorXd& dy,
                         Eigen::VectorXd& ds, Eigen::VectorXd& dz) {
      Eigen::VectorXd rhs(n + me);
      const Eigen::VectorXd w = (-rc + z.cwiseProduct(ri)).cwiseQuotient(s);
      rhs.head(n) = -rd - AiT_ * w;
      rhs.tail(me) = -re;
      const Eigen::VectorXd sol = kkt_solve(rhs);
      dx = sol.head(n);
      dy = sol.tail(me);
      ds = -ri - Ai_ * dx;
      dz = (-rc - z.cwiseProduct(ds)).cwiseQuotient(s);
    };
    Eigen::VectorXd dx, dy, ds, dz;
    const double mu = mi ? gap / mi : 0.0;
    Eigen::VectorXd rc = s.cwiseProduct(z);
    direction(rc, dx, dy, ds, dz);
    if (mi) {
      const double a_aff = std::min(max_step(s, ds), max_step(z, dz));
      const double mu_aff = (s + a_aff * ds).dot(z + a_aff * dz) / mi;
      const double sigma = std::pow(mu_aff / std::max(mu, 1e-300), 3);
      rc += ds.cwiseProduct(dz) - Eigen::VectorXd::Constant(mi, sigma * mu);
      direction(rc, dx, dy, ds, dz);
    }
    const double a = mi ? std::min(1.0, 0.99 * std::min(max_step(s, ds), max_step(z, dz))) : 1.0;
    x += a * dx;
    y += a * dy;
    s += a * ds;
    z += a * dz;
    if (mi) {
      s = s.cwiseMax(1e-300);
      z = z.cwiseMax(1e-300);
    }
    if (!x.allFinite() || !y.allFinite() || !z.allFinite()) {
      rep.status = QpStatus::NumericalFailure;
      rep.iterations = k + 1;
      return rep;
    }
  }

  rep.x_opt = x;
  rep.y_eq = y;
  rep.y_in = Eigen::VectorXd::Zero(qp.b_in.size());
  for (int k = 0; k < mi; ++k) rep.y_in[rows_[k]] = z[k];
  rep.objective = qp.objective(x);
  rep.primal_residual = prim;
  rep.dual_residual = dual;
  return rep;
}

}  // namespace pmpsc::detail
