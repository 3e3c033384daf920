#include "pmpsc/qp.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>
#include <vector>

#include "pmpsc/errors.hpp"
#include "pmpsc/linalg.hpp"
#include "qp_ipm.hpp"

namespace pmpsc {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kRhoMin = 1e-6;
constexpr double kRhoMax = 1e6;
constexpr double kRhoEqFactor = 1e3;
constexpr double kPolishDelta = 1e-9;

bool same_matrix(const SpMat& a, const SpMat& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols() || a.nonZeros() != b.nonZeros())
    return false;
  if (!a.isCompressed() || !b.isCompressed()) return false;
  const auto nnz = static_cast<std::size_t>(a.nonZeros());
  return std::memcmp(a.outerIndexPtr(), b.outerIndexPtr(),
                     sizeof(int) * (a.cols() + 1)) == 0 &&
         std::memcmp(a.innerIndexPtr(), b.innerIndexPtr(), sizeof(int) * nnz) == 0 &&
         std::memcmp(a.valuePtr(), b.valuePtr(), sizeof(double) * nnz) == 0;
}

double inf_norm(const Eigen::VectorXd& v) {
  return v.size() ? v.cwiseAbs().maxCoeff() : 0.0;
}

SpMat vstack(const SpMat& top, const SpMat& bottom, int cols) {
  SpMat out(top.rows() + bottom.rows(), cols);
  std::vector<Eigen::Triplet<double>> t;
  t.reserve(top.nonZeros() + bottom.nonZeros());
  for (int k = 0; k < top.outerSize(); ++k)
    for (SpMat::InnerIterator it(top, k); it; ++it)
      t.emplace_back(it.row(), it.col(), it.value());
  for (int k = 0; k < bottom.outerSize(); ++k)
    for (SpMat::InnerIterator it(bottom, k); it; ++it)
      t.emplace_back(top.rows() + it.row(), it.col(), it.value());
  out.setFromTriplets(t.begin(), t.end());
  out.makeCompressed();
  return out;
}

double clamp_norm(double v) {
  if (v < 1e-4) return 1.0;
  return std::min(v, 1e4);
}

using Ldlt = Eigen::SimplicialLDLT<SpMat, Eigen::Lower, Eigen::AMDOrdering<int>>;

}  // namespace

double QuadraticProgram::objective(const Eigen::VectorXd& x) const {
  return 0.5 * x.dot(P * x) + q.dot(x) + constant;
}

void QuadraticProgram::validate(bool check_psd) const {
  const auto n = q.size();
  PMPSC_THROW_UNLESS(P.rows() == n && P.cols() == n, DimensionMismatch,
                     "qp: P must be n x n");
  PMPSC_THROW_UNLESS(A_eq.cols() == n && A_eq.rows() == b_eq.size(),
                     DimensionMismatch, "qp: equality block shape");
  PMPSC_THROW_UNLESS(A_in.cols() == n && A_in.rows() == b_in.size(),
                     DimensionMismatch, "qp: inequality block shape");
  PMPSC_THROW_UNLESS(q.allFinite() && b_eq.allFinite(), InvalidArgument,
                     "qp: non-finite cost or equality data");
  for (int i = 0; i < b_in.size(); ++i)
    PMPSC_THROW_UNLESS(!std::isnan(b_in[i]) && b_in[i] != -kInf, InvalidArgument,
                       "qp: inequality bound is NaN or -inf");
  if (check_psd && n > 0) {
    const Eigen::MatrixXd Pd(P);
    PMPSC_THROW_UNLESS(is_symmetric(Pd, 1e-10), InvalidArgument,
                       "qp: P not symmetric");
    PMPSC_THROW_UNLESS(min_eigenvalue(Pd) >= -1e-9, InvalidArgument,
                       "qp: P not positive semidefinite");
  }
}

QuadraticProgram make_qp(const Eigen::MatrixXd& P, const Eigen::VectorXd& q,
                         const Eigen::MatrixXd& A_eq, const Eigen::VectorXd& b_eq,
                         const Eigen::MatrixXd& A_in, const Eigen::VectorXd& b_in,
                         double constant) {
  const auto n = q.size();
  QuadraticProgram qp;
  qp.P = (P.size() ? P : Eigen::MatrixXd::Zero(n, n)).sparseView();
  qp.q = q;
  qp.A_eq = (A_eq.size() ? A_eq : Eigen::MatrixXd::Zero(b_eq.size(), n)).sparseView();
  qp.b_eq = b_eq;
  qp.A_in = (A_in.size() ? A_in : Eigen::MatrixXd::Zero(b_in.size(), n)).sparseView();
  qp.b_in = b_in;
  qp.constant = constant;
  qp.P.makeCompressed();
  qp.A_eq.makeCompressed();
  qp.A_in.makeCompressed();
  return qp;
}

std::string to_string(QpStatus s) {
  switch (s) {
    case QpStatus::Optimal: return "Optimal";
    case QpStatus::Infeasible: return "Infeasible";
    case QpStatus::MaxIter: return "MaxIter";
    case QpStatus::NumericalFailure: return "NumericalFailure";
  }
  return "Unknown";
}

struct QpSolver::Impl {
  // Cache key.
  SpMat P_key, Aeq_key, Ain_key;
  bool have_cache = false;

  int n = 0, m = 0, m_eq = 0;
  Eigen::VectorXd D, E;  // variable / constraint scaling
  double c = 1.0;        // cost scaling
  SpMat Ps, As, AsT;     // scaled data
  SpMat kkt;
  std::vector<int> rho_slot;  // value index of each constraint's KKT diagonal
  Ldlt ldlt;
  Eigen::VectorXd rho_vec;
  double rho = 0.1;
  int nfact = 0;
  detail::IpmEngine ipm;

  Eigen::VectorXd x, z, y;  // scaled iterate
  bool have_iterate = false;
  std::vector<signed char> last_failed_polish;

  void scale(const QuadraticProgram& qp, int iters);
  void build_kkt(double sigma);
  bool refactor();
  void set_rho(double r, const Eigen::VectorXd& l, const Eigen::VectorXd& u);
};

void QpSolver::Impl::scale(const QuadraticProgram& qp, int iters) {
  n = qp.num_vars();
  m_eq = static_cast<int>(qp.b_eq.size());
  m = m_eq + static_cast<int>(qp.b_in.size());
  Ps = qp.P;
  As = vstack(qp.A_eq, qp.A_in, n);
  D = Eigen::VectorXd::Ones(n);
  E = Eigen::VectorXd::Ones(m);
  c = 1.0;
  for (int it = 0; it < iters; ++it) {
    Eigen::VectorXd dn = Eigen::VectorXd::Zero(n);
    Eigen::VectorXd en = Eigen::VectorXd::Zero(m);
    for (int k = 0; k < Ps.outerSize(); ++k)
      for (SpMat::InnerIterator i(Ps, k); i; ++i)
        dn[k] = std::max(dn[k], std::abs(i.value()));
    for (int k = 0; k < As.outerSize(); ++k)
      for (SpMat::InnerIterator i(As, k); i; ++i) {
        dn[k] = std::max(dn[k], std::abs(i.value()));
        en[i.row()] = std::max(en[i.row()], std::abs(i.value()));
      }
    Eigen::VectorXd d(n), e(m);
    for (int j = 0; j < n; ++j) d[j] = 1.0 / std::sqrt(clamp_norm(dn[j]));
    for (int i = 0; i < m; ++i) e[i] = 1.0 / std::sqrt(clamp_norm(en[i]));
    Ps = d.asDiagonal() * Ps * d.asDiagonal();
    As = e.asDiagonal() * As * d.asDiagonal();
    D.array() *= d.array();
    E.array() *= e.array();
  }
  if (Ps.nonZeros() > 0) {
    Eigen::VectorXd cn = Eigen::VectorXd::Zero(n);
    for (int k = 0; k < Ps.outerSize(); ++k)
      for (SpMat::InnerIterator i(Ps, k); i; ++i)
        cn[k] = std::max(cn[k], std::abs(i.value()));
    const double mean = cn.mean();
    if (mean > 1e-4) c = 1.0 / std::min(mean, 1e4);
    Ps *= c;
  }
  Ps.makeCompressed();
  As.makeCompressed();
  AsT = As.transpose();
  AsT.makeCompressed();
}

void QpSolver::Impl::build_kkt(double sigma) {
  std::vector<Eigen::Triplet<double>> t;
  t.reserve(Ps.nonZeros() + As.nonZeros() + n + m);
  for (int k = 0; k < Ps.outerSize(); ++k)
    for (SpMat::InnerIterator i(Ps, k); i; ++i)
      if (i.row() > i.col()) t.emplace_back(i.row(), i.col(), i.value());
      else if (i.row() == i.col()) t.emplace_back(i.row(), i.col(), i.value());
  for (int j = 0; j < n; ++j) t.emplace_back(j, j, sigma);
  for (int k = 0; k < As.outerSize(); ++k)
    for (SpMat::InnerIterator i(As, k); i; ++i)
      t.emplace_back(n + i.row(), i.col(), i.value());
  for (int i = 0; i < m; ++i) t.emplace_back(n + i, n + i, -1.0);
  kkt.resize(n + m, n + m);
  kkt.setFromTriplets(t.begin(), t.end());
  kkt.makeCompressed();
  rho_slot.assign(m, 0);
  for (int i = 0; i < m; ++i) rho_slot[i] = kkt.outerIndexPtr()[n + i];
  ldlt.analyzePattern(kkt);
}

bool QpSolver::Impl::refactor() {
  for (int i = 0; i < m; ++i) kkt.valuePtr()[rho_slot[i]] = -1.0 / rho_vec[i];
  ldlt.factorize(kkt);
  ++nfact;
  return ldlt.info() == Eigen::Success;
}

void QpSolver::Impl::set_rho(double r, const Eigen::VectorXd& l,
                             const Eigen::VectorXd& u) {
  rho = std::clamp(r, kRhoMin, kRhoMax);
  rho_vec.resize(m);
  for (int i = 0; i < m; ++i) {
    if (l[i] == -kInf && u[i] == kInf) rho_vec[i] = kRhoMin;
    else if (u[i] - l[i] < 1e-12) rho_vec[i] = kRhoEqFactor * rho;
    else rho_vec[i] = rho;
  }
}

QpSolver::QpSolver(QpSettings settings)
    : settings_(settings), impl_(std::make_unique<Impl>()) {}
QpSolver::~QpSolver() = default;
QpSolver::QpSolver(QpSolver&&) noexcept = default;
QpSolver& QpSolver::operator=(QpSolver&&) noexcept = default;
QpSolver::QpSolver(const QpSolver& o)
    : settings_(o.settings_), impl_(std::make_unique<Impl>()) {}
QpSolver& QpSolver::operator=(const QpSolver& o) {
  if (this != &o) {
    settings_ = o.settings_;
    impl_ = std::make_unique<Impl>();
  }
  return *this;
}

void QpSolver::reset() { impl_ = std::make_unique<Impl>(); }

int QpSolver::factorizations() const { return impl_->nfact + impl_->ipm.factorizations(); }

void QpSolver::warm_start(const Eigen::VectorXd& x, const Eigen::VectorXd& y) {
  Impl& s = *impl_;
  if (!s.have_cache || x.size() != s.n || y.size() != s.m) return;
  s.x = x.cwiseQuotient(s.D);
  s.y = s.c * y.cwiseQuotient(s.E);
  s.z = s.As * s.x;
  s.have_iterate = true;
}

SolveReport QpSolver::solve(const QuadraticProgram& qp) {
  if (settings_.method == QpMethod::InteriorPoint) return impl_->ipm.solve(qp, settings_);
  qp.validate(/*check_psd=*/false);
  Impl& s = *impl_;
  const QpSettings& cfg = settings_;

  const bool reuse = s.have_cache && same_matrix(qp.P, s.P_key) &&
                     same_matrix(qp.A_eq, s.Aeq_key) &&
                     same_matrix(qp.A_in, s.Ain_key);
  if (!reuse) {
    s.P_key = qp.P;
    s.Aeq_key = qp.A_eq;
    s.Ain_key = qp.A_in;
    s.P_key.makeCompressed();
    s.Aeq_key.makeCompressed();
    s.Ain_key.makeCompressed();
    s.scale(qp, cfg.scaling_iters);
    s.build_kkt(cfg.sigma);
    s.have_cache = true;
    s.have_iterate = false;
    s.rho_vec.resize(0);
  }
  const int n = s.n, m = s.m;

  // Scaled bounds and cost.
  Eigen::VectorXd l(m), u(m);
  l.head(s.m_eq) = qp.b_eq;
  u.head(s.m_eq) = qp.b_eq;
  l.tail(m - s.m_eq).setConstant(-kInf);
  u.tail(m - s.m_eq) = qp.b_in;
  const Eigen::VectorXd ls = s.E.cwiseProduct(l);
  const Eigen::VectorXd us = s.E.cwiseProduct(u);
  const Eigen::VectorXd qs = s.c * s.D.cwiseProduct(qp.q);
  const Eigen::VectorXd Dinv = s.D.cwiseInverse();
  const Eigen::VectorXd Einv = s.E.cwiseInverse();

  SolveReport rep;
  const bool rho_pattern_changed = [&] {
    if (s.rho_vec.size() != m) return true;
    for (int i = 0; i < m; ++i) {
      const bool eq = u[i] - l[i] < 1e-12;
      const bool free = l[i] == -kInf && u[i] == kInf;
      const double expect = free ? kRhoMin : (eq ? kRhoEqFactor * s.rho : s.rho);
      if (s.rho_vec[i] != expect) return true;
    }
    return false;
  }();
  if (rho_pattern_changed) {
    s.set_rho(reuse && s.rho_vec.size() == m ? s.rho : cfg.rho, l, u);
    if (!s.refactor()) {
      rep.status = QpStatus::NumericalFailure;
      return rep;
    }
  }

  if (!(cfg.warm_start && s.have_iterate)) {
    s.x = Eigen::VectorXd::Zero(n);
    s.z = Eigen::VectorXd::Zero(m);
    s.y = Eigen::VectorXd::Zero(m);
  }
  s.have_iterate = true;
  s.last_failed_polish.clear();

  Eigen::VectorXd rhs(n + m), sol(n + m);
  Eigen::VectorXd xt(n), zt(m), ztmp(m), y_prev(m);
  double prim = kInf, dual = kInf;

  // Relative residuals of a scaled iterate; fills the unscaled norms used by
  // adaptive rho as a side effect.
  double last_pn = 1, last_dn = 1, last_pr = 0, last_dr = 0;
  auto residuals = [&](const Eigen::VectorXd& xs, const Eigen::VectorXd& zs,
                       const Eigen::VectorXd& ys, double* pr, double* du) {
    const Eigen::VectorXd Ax = Einv.cwiseProduct(s.As * xs);
    const Eigen::VectorXd zz = Einv.cwiseProduct(zs);
    const Eigen::VectorXd Px = Dinv.cwiseProduct(s.Ps * xs) / s.c;
    const Eigen::VectorXd ATy = Dinv.cwiseProduct(s.AsT * ys) / s.c;
    const Eigen::VectorXd qq = Dinv.cwiseProduct(qs) / s.c;
    const double pres = inf_norm(Ax - zz);
    const double dres = inf_norm(Px + qq + ATy);
    last_pn = std::max(inf_norm(Ax), inf_norm(zz));
    last_dn = std::max({inf_norm(Px), inf_norm(ATy), inf_norm(qq)});
    last_pr = pres;
    last_dr = dres;
    *pr = pres / (1.0 + last_pn);
    *du = dres / (1.0 + last_dn);
  };

  auto finish = [&](QpStatus st, const Eigen::VectorXd& xs, const Eigen::VectorXd& ys,
                    double pr, double du, int iters, bool polished) {
    rep.status = st;
    rep.x_opt = s.D.cwiseProduct(xs);
    const Eigen::VectorXd yu = s.E.cwiseProduct(ys) / s.c;
    rep.y_eq = yu.head(s.m_eq);
    rep.y_in = yu.tail(m - s.m_eq);
    rep.objective = qp.objective(rep.x_opt);
    rep.primal_residual = pr;
    rep.dual_residual = du;
    rep.iterations = iters;
    rep.polished = polished;
    return rep;
  };

  // Active-set polishing in the scaled space with iterative refinement.
  auto polish = [&](Eigen::VectorXd* xp, Eigen::VectorXd* yp, double* pr,
                    double* du) -> bool {
    std::vector<signed char> act(m, 0);  // -1 lower, +1 upper/equality
    for (int i = 0; i < m; ++i) {
      if (u[i] - l[i] < 1e-12) act[i] = 1;
      else if (s.z[i] - ls[i] < -s.y[i]) act[i] = -1;
      else if (us[i] - s.z[i] < s.y[i]) act[i] = 1;
    }
    if (act == s.last_failed_polish) return false;
    std::vector<int> rows;
    for (int i = 0; i < m; ++i)
      if (act[i]) rows.push_back(i);
    const int na = static_cast<int>(rows.size());
    std::vector<int> pos(m, -1);
    for (int k = 0; k < na; ++k) pos[rows[k]] = k;

    std::vector<Eigen::Triplet<double>> t, t0;
    for (int k = 0; k < s.Ps.outerSize(); ++k)
      for (SpMat::InnerIterator it(s.Ps, k); it; ++it)
        if (it.row() >= it.col()) t.emplace_back(it.row(), it.col(), it.value());
    for (int j = 0; j < n; ++j) t.emplace_back(j, j, kPolishDelta);
    for (int k = 0; k < s.As.outerSize(); ++k)
      for (SpMat::InnerIterator it(s.As, k); it; ++it)
        if (pos[it.row()] >= 0) t.emplace_back(n + pos[it.row()], it.col(), it.value());
    for (int k = 0; k < na; ++k) t.emplace_back(n + k, n + k, -kPolishDelta);
    SpMat K(n + na, n + na);
    K.setFromTriplets(t.begin(), t.end());
    Ldlt f(K);
    if (f.info() != Eigen::Success) {
      s.last_failed_polish = act;
      return false;
    }
    // Unregularized operator for refinement (full symmetric product).
    auto apply_k0 = [&](const Eigen::VectorXd& v) {
      Eigen::VectorXd out = Eigen::VectorXd::Zero(n + na);
      out.head(n) = s.Ps * v.head(n);
      Eigen::VectorXd ya = Eigen::VectorXd::Zero(m);
      for (int k = 0; k < na; ++k) ya[rows[k]] = v[n + k];
      out.head(n) += s.AsT * ya;
      const Eigen::VectorXd ax = s.As * v.head(n);
      for (int k = 0; k < na; ++k) out[n + k] = ax[rows[k]];
      return out;
    };
    Eigen::VectorXd b(n + na);
    b.head(n) = -qs;
    for (int k = 0; k < na; ++k) b[n + k] = act[rows[k]] < 0 ? ls[rows[k]] : us[rows[k]];
    Eigen::VectorXd v = f.solve(b);
    for (int r = 0; r < 8; ++r) {
      const Eigen::VectorXd res = b - apply_k0(v);
      if (inf_norm(res) <= 1e-14 * (1.0 + inf_norm(b))) break;
      v += f.solve(res);
    }
    if (!v.allFinite()) {
      s.last_failed_polish = act;
      return false;
    }
    xp->resize(n);
    *xp = v.head(n);
    yp->setZero(m);
    for (int k = 0; k < na; ++k) (*yp)[rows[k]] = v[n + k];
    const Eigen::VectorXd zp =
        (s.As * *xp).cwiseMax(ls).cwiseMin(us);
    residuals(*xp, zp, *yp, pr, du);
    // Multiplier signs must match the active side.
    const Eigen::VectorXd yu = s.E.cwiseProduct(*yp) / s.c;
    const double ytol = cfg.tol * (1.0 + inf_norm(yu));
    bool signs_ok = true;
    for (int k = 0; k < na && signs_ok; ++k) {
      const int i = rows[k];
      if (u[i] - l[i] < 1e-12) continue;
      if (act[i] < 0 && yu[i] > ytol) signs_ok = false;
      if (act[i] > 0 && yu[i] < -ytol) signs_ok = false;
    }
    const bool ok = signs_ok && *pr <= cfg.tol && *du <= cfg.tol;
    if (!ok) s.last_failed_polish = act;
    return ok;
  };

  const double a = cfg.alpha;
  int k = 0;
  for (k = 1; k <= cfg.max_iter; ++k) {
    y_prev = s.y;
    rhs.head(n) = cfg.sigma * s.x - qs;
    rhs.tail(m) = s.z - s.y.cwiseQuotient(s.rho_vec);
    sol = s.ldlt.solve(rhs);
    xt = sol.head(n);
    zt = s.z + (sol.tail(m) - s.y).cwiseQuotient(s.rho_vec);
    s.x = a * xt + (1 - a) * s.x;
    ztmp = a * zt + (1 - a) * s.z;
    const Eigen::VectorXd znew = (ztmp + s.y.cwiseQuotient(s.rho_vec)).cwiseMax(ls).cwiseMin(us);
    s.y += s.rho_vec.cwiseProduct(ztmp - znew);
    s.z = znew;

    if (k % cfg.check_every != 0 && k != cfg.max_iter) continue;
    if (!s.x.allFinite() || !s.y.allFinite()) {
      s.have_iterate = false;
      rep.status = QpStatus::NumericalFailure;
      rep.iterations = k;
      return rep;
    }
    residuals(s.x, s.z, s.y, &prim, &dual);
    const double apr = last_pr, apn = last_pn, adr = last_dr, adn = last_dn;
    if (prim <= cfg.tol && dual <= cfg.tol) {
      if (cfg.polish) {
        Eigen::VectorXd xp, yp;
        double pp, dp;
        if (polish(&xp, &yp, &pp, &dp) && pp + dp <= prim + dual)
          return finish(QpStatus::Optimal, xp, yp, pp, dp, k, true);
      }
      return finish(QpStatus::Optimal, s.x, s.y, prim, dual, k, false);
    }
    if (cfg.polish && prim <= 1e-3 && dual <= 1e-3) {
      Eigen::VectorXd xp, yp;
      double pp, dp;
      if (polish(&xp, &yp, &pp, &dp)) {
        s.x = xp;
        s.y = yp;
        s.z = (s.As * xp).cwiseMax(ls).cwiseMin(us);
        return finish(QpStatus::Optimal, xp, yp, pp, dp, k, true);
      }
    }

    // Primal infeasibility certificate from the dual increment.
    if (m > 0) {
      const Eigen::VectorXd dy = s.y - y_prev;
      const double dy_norm = inf_norm(s.E.cwiseProduct(dy));
      if (dy_norm > 1e-30) {
        const double thr = cfg.eps_infeasible * dy_norm;
        bool cert = inf_norm(Dinv.cwiseProduct(s.AsT * dy)) <= thr;
        double support = 0.0;
        for (int i = 0; i < m && cert; ++i) {
          if (dy[i] > 0) {
            if (us[i] == kInf) {
              if (dy[i] * s.E[i] > thr) cert = false;
            } else {
              support += us[i] * dy[i];
            }
          } else if (dy[i] < 0) {
            if (ls[i] == -kInf) {
              if (-dy[i] * s.E[i] > thr) cert = false;
            } else {
              support += ls[i] * dy[i];
            }
          }
        }
        if (cert && support < -thr) {
          s.have_iterate = false;
          finish(QpStatus::Infeasible, s.x, s.y, prim, dual, k, false);
          return rep;
        }
      }
    }

    if (cfg.adaptive_rho && m > 0 && k % std::max(cfg.adaptive_rho_interval, cfg.check_every) == 0) {
      const double pn = apr / std::max(apn, 1e-30);
      const double dn = adr / std::max(adn, 1e-30);
      double r_new = s.rho * std::sqrt(pn / std::max(dn, 1e-30));
      r_new = std::clamp(r_new, kRhoMin, kRhoMax);
      if (r_new > 5.0 * s.rho || r_new < 0.2 * s.rho) {
        s.set_rho(r_new, l, u);
        if (!s.refactor()) {
          s.have_iterate = false;
          rep.status = QpStatus::NumericalFailure;
          rep.iterations = k;
          return rep;
        }
      }
    }
  }
  return finish(QpStatus::MaxIter, s.x, s.y, prim, dual, cfg.max_iter, false);
}

SolveReport solve_qp(const QuadraticProgram& qp, double tol, int max_iter) {
  qp.validate(true);
  QpSettings s;
  s.tol = tol;
  s.max_iter = max_iter;
  QpSolver solver(s);
  return solver.solve(qp);
}

}  // namespace pmpsc
