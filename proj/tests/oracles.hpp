#pragma once
// Independent reference computations used to pin expected values in tests.
// Deliberately naive: brute force, bisection, series truncation.

#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <vector>

#include <Eigen/Dense>

namespace oracle {

inline double bisect(const std::function<double(double)>& f, double lo, double hi,
                     double tol = 1e-13) {
  double flo = f(lo);
  for (int i = 0; i < 300 && hi - lo > tol; ++i) {
    const double mid = 0.5 * (lo + hi);
    const double fm = f(mid);
    if ((fm < 0) == (flo < 0)) {
      lo = mid;
      flo = fm;
    } else {
      hi = mid;
    }
  }
  return 0.5 * (lo + hi);
}

// Smallest eigenvalue of a symmetric matrix: bisection on the count of
// negative pivots of M - lambda I (Sylvester inertia via LDL' without pivoting
// on a tridiagonal-free dense elimination; fine for small well-behaved M).
inline int negative_pivots(const Eigen::MatrixXd& M, double lambda) {
  Eigen::MatrixXd A = M - lambda * Eigen::MatrixXd::Identity(M.rows(), M.cols());
  const int n = static_cast<int>(A.rows());
  int neg = 0;
  for (int k = 0; k < n; ++k) {
    double p = A(k, k);
    if (p == 0.0) p = 1e-300;
    if (p < 0) ++neg;
    for (int i = k + 1; i < n; ++i) {
      const double f = A(i, k) / p;
      for (int j = k + 1; j < n; ++j) A(i, j) -= f * A(k, j);
    }
  }
  return neg;
}

inline double min_eig_bisect(const Eigen::MatrixXd& M) {
  const double bound = M.cwiseAbs().rowwise().sum().maxCoeff() + 1.0;
  double lo = -bound, hi = bound;
  for (int i = 0; i < 200; ++i) {
    const double mid = 0.5 * (lo + hi);
    (negative_pivots(M, mid) >= 1 ? hi : lo) = mid;
  }
  return 0.5 * (lo + hi);
}

// sum_{j<=terms} (A')^j W A^j
inline Eigen::MatrixXd lyapunov_series(const Eigen::MatrixXd& A, const Eigen::MatrixXd& W,
                                       int terms = 200) {
  Eigen::MatrixXd S = Eigen::MatrixXd::Zero(W.rows(), W.cols());
  Eigen::MatrixXd Aj = Eigen::MatrixXd::Identity(A.rows(), A.cols());
  for (int j = 0; j <= terms; ++j) {
    S += Aj.transpose() * W * Aj;
    Aj = Aj * A;
  }
  return S;
}

// Scalar DARE root p = a^2 p - (a b p)^2/(r + b^2 p) + q by bisection.
inline double scalar_riccati(double a, double b, double q, double r) {
  auto f = [&](double p) { return a * a * p - (a * b * p) * (a * b * p) / (r + b * b * p) + q - p; };
  return bisect(f, 1e-12, 1e6);
}

// Standard normal CDF and the chi-squared(1) quantile via erf bisection.
inline double chi2_1_quantile(double p) {
  // P(|Z| <= s) = erf(s / sqrt 2) = p
  const double s = bisect([&](double x) { return std::erf(x / std::sqrt(2.0)) - p; }, 0.0, 40.0);
  return s * s;
}

// CDF of chi-squared(k) by Simpson integration of the density.
inline double chi2_cdf_simpson(double x, int k, int panels = 200000) {
  auto pdf = [k](double t) {
    if (t <= 0) return k == 2 ? 0.5 : 0.0;
    return std::exp((k / 2.0 - 1) * std::log(t) - t / 2 - std::lgamma(k / 2.0) -
                    (k / 2.0) * std::log(2.0));
  };
  const double h = x / panels;
  double s = pdf(0) + pdf(x);
  for (int i = 1; i < panels; ++i) s += (i % 2 ? 4 : 2) * pdf(i * h);
  return s * h / 3;
}

// Exhaustive active-set QP solver for min 0.5x'Px + q'x s.t. Aeq x = beq,
// Ain x <= bin. P must make every candidate KKT system uniquely solvable on
// its own (strictly convex P, or rank([P; Aeq; A_W]) = n per subset).
struct QpResult {
  bool feasible = false;
  Eigen::VectorXd x;
  double objective = std::numeric_limits<double>::infinity();
};

inline QpResult active_set_enumeration(const Eigen::MatrixXd& P, const Eigen::VectorXd& q,
                                       const Eigen::MatrixXd& Aeq, const Eigen::VectorXd& beq,
                                       const Eigen::MatrixXd& Ain, const Eigen::VectorXd& bin,
                                       double feas_tol = 1e-9) {
  const int n = static_cast<int>(q.size());
  const int me = static_cast<int>(beq.size());
  const int mi = static_cast<int>(bin.size());
  QpResult best;
  std::vector<int> subset;
  std::function<void(int)> rec = [&](int start) {
    const int k = static_cast<int>(subset.size());
    // Solve the equality-constrained problem with the current working set.
    Eigen::MatrixXd Aw(me + k, n);
    Eigen::VectorXd bw(me + k);
    if (me) {
      Aw.topRows(me) = Aeq;
      bw.head(me) = beq;
    }
    for (int i = 0; i < k; ++i) {
      Aw.row(me + i) = Ain.row(subset[i]);
      bw[me + i] = bin[subset[i]];
    }
    bool independent = true;
    if (me + k > 0) {
      Eigen::FullPivLU<Eigen::MatrixXd> lu(Aw);
      lu.setThreshold(1e-10);
      independent = lu.rank() == me + k;
    }
    if (!independent) return;
    Eigen::MatrixXd stacked(n + me + k, n);
    stacked << P, Aw;
    Eigen::FullPivLU<Eigen::MatrixXd> slu(stacked);
    slu.setThreshold(1e-10);
    if (slu.rank() == n) {
      Eigen::MatrixXd K = Eigen::MatrixXd::Zero(n + me + k, n + me + k);
      K.topLeftCorner(n, n) = P;
      K.topRightCorner(n, me + k) = Aw.transpose();
      K.bottomLeftCorner(me + k, n) = Aw;
      Eigen::VectorXd rhs(n + me + k);
      rhs << -q, bw;
      const Eigen::VectorXd sol = K.fullPivLu().solve(rhs);
      const Eigen::VectorXd x = sol.head(n);
      bool ok = x.allFinite();
      if (ok && me) ok = (Aeq * x - beq).cwiseAbs().maxCoeff() <= feas_tol * (1 + beq.cwiseAbs().maxCoeff());
      if (ok && mi) ok = ((Ain * x - bin).array() <= feas_tol * (1 + bin.cwiseAbs().maxCoeff())).all();
      if (ok) {
        const double f = 0.5 * x.dot(P * x) + q.dot(x);
        if (f < best.objective) {
          best.feasible = true;
          best.objective = f;
          best.x = x;
        }
      }
    }
    for (int i = start; i < mi; ++i) {
      if (me + k + 1 > n) break;
      subset.push_back(i);
      rec(i + 1);
      subset.pop_back();
    }
  };
  rec(0);
  return best;
}

// Convex hull of 2-D points by gift wrapping; returns indices of extreme
// points (collinear boundary points excluded).
inline std::vector<int> gift_wrap(const std::vector<Eigen::Vector2d>& pts) {
  const int n = static_cast<int>(pts.size());
  int start = 0;
  for (int i = 1; i < n; ++i)
    if (pts[i].x() < pts[start].x() ||
        (pts[i].x() == pts[start].x() && pts[i].y() < pts[start].y()))
      start = i;
  std::vector<int> hull;
  int p = start;
  do {
    hull.push_back(p);
    int cand = (p + 1) % n;
    for (int i = 0; i < n; ++i) {
      const Eigen::Vector2d a = pts[cand] - pts[p], b = pts[i] - pts[p];
      const double cross = a.x() * b.y() - a.y() * b.x();
      if (cross < -1e-12 || (std::abs(cross) <= 1e-12 && b.norm() > a.norm())) cand = i;
    }
    p = cand;
  } while (p != start && hull.size() <= pts.size());
  return hull;
}

}  // namespace oracle
