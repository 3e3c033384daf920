#include "pmpsc/sets.hpp"

#include <cmath>
#include <limits>
#include <string>

#include "pmpsc/errors.hpp"
#include "pmpsc/linalg.hpp"
#include "pmpsc/qp.hpp"

namespace pmpsc {

namespace {
constexpr double kEmptyTol = 1e-9;

// Index of the single nonzero in row, or -1.
int axis_of(const Eigen::RowVectorXd& row) {
  int idx = -1;
  for (int i = 0; i < row.size(); ++i) {
    if (row[i] == 0.0) continue;
    if (idx >= 0) return -1;
    idx = i;
  }
  return idx;
}
}  // namespace

HPolytope::HPolytope(Eigen::MatrixXd H, Eigen::VectorXd h, Unchecked)
    : H_(std::move(H)), h_(std::move(h)) {}

HPolytope::HPolytope(Eigen::MatrixXd H, Eigen::VectorXd h)
    : H_(std::move(H)), h_(std::move(h)) {
  PMPSC_THROW_UNLESS(H_.rows() == h_.size(), DimensionMismatch,
                     "polytope: H rows must match h length");
  PMPSC_THROW_UNLESS(H_.cols() > 0, DimensionMismatch,
                     "polytope: ambient dimension must be positive");
  PMPSC_THROW_UNLESS(H_.allFinite(), InvalidArgument, "polytope: H not finite");
  for (int j = 0; j < h_.size(); ++j)
    PMPSC_THROW_UNLESS(!std::isnan(h_[j]) && h_[j] != -std::numeric_limits<double>::infinity(),
                       InvalidArgument, "polytope: bad offset");
  PMPSC_THROW_UNLESS(interior_depth() >= -kEmptyTol, EmptySet,
                     "polytope is empty");
}

HPolytope HPolytope::box(const Eigen::VectorXd& lo, const Eigen::VectorXd& hi) {
  PMPSC_THROW_UNLESS(lo.size() == hi.size() && lo.size() > 0, DimensionMismatch,
                     "box: bound sizes differ");
  const auto n = lo.size();
  Eigen::MatrixXd H = Eigen::MatrixXd::Zero(2 * n, n);
  Eigen::VectorXd h(2 * n);
  for (int i = 0; i < n; ++i) {
    H(2 * i, i) = 1.0;
    h[2 * i] = hi[i];
    H(2 * i + 1, i) = -1.0;
    h[2 * i + 1] = -lo[i];
  }
  return HPolytope(H, h);
}

double HPolytope::min_slack(const Eigen::VectorXd& x) const {
  PMPSC_THROW_UNLESS(x.size() == dim(), DimensionMismatch, "polytope: point dimension");
  if (num_facets() == 0) return std::numeric_limits<double>::infinity();
  return (h_ - H_ * x).minCoeff();
}

bool HPolytope::contains(const Eigen::VectorXd& x, double tol) const {
  return min_slack(x) >= -tol;
}

bool HPolytope::is_box() const {
  const int n = dim();
  std::vector<bool> up(n, false), down(n, false);
  for (int j = 0; j < num_facets(); ++j) {
    const int i = axis_of(H_.row(j));
    if (i < 0) return false;
    (H_(j, i) > 0 ? up : down)[i] = true;
  }
  for (int i = 0; i < n; ++i)
    if (!up[i] || !down[i]) return false;
  return true;
}

std::pair<Eigen::VectorXd, Eigen::VectorXd> HPolytope::box_bounds() const {
  PMPSC_THROW_UNLESS(is_box(), NotABox, "polytope facets are not axis-aligned");
  const int n = dim();
  Eigen::VectorXd lo = Eigen::VectorXd::Constant(n, -std::numeric_limits<double>::infinity());
  Eigen::VectorXd hi = Eigen::VectorXd::Constant(n, std::numeric_limits<double>::infinity());
  for (int j = 0; j < num_facets(); ++j) {
    const int i = axis_of(H_.row(j));
    const double s = H_(j, i);
    if (s > 0) hi[i] = std::min(hi[i], h_[j] / s);
    else lo[i] = std::max(lo[i], h_[j] / s);
  }
  return {lo, hi};
}

double HPolytope::interior_depth() const {
  if (num_facets() == 0) return 1.0;
  if (is_box()) {
    const auto [lo, hi] = box_bounds();
    return std::min(1.0, 0.5 * (hi - lo).minCoeff());
  }
  // max t  s.t.  H x + t |H_j| <= h,  t <= 1   (small ridge keeps x bounded)
  const int n = dim(), m = num_facets();
  Eigen::MatrixXd A(m + 1, n + 1);
  A.setZero();
  A.topLeftCorner(m, n) = H_;
  A.topRightCorner(m, 1) = H_.rowwise().norm();
  A(m, n) = 1.0;
  Eigen::VectorXd b(m + 1);
  b << h_, 1.0;
  Eigen::MatrixXd P = 1e-8 * Eigen::MatrixXd::Identity(n + 1, n + 1);
  P(n, n) = 0.0;
  Eigen::VectorXd q = Eigen::VectorXd::Zero(n + 1);
  q[n] = -1.0;
  const auto rep = solve_qp(make_qp(P, q, {}, Eigen::VectorXd(0), A, b), 1e-10, 50000);
  if (rep.status == QpStatus::Optimal) return rep.x_opt[n];
  return -std::numeric_limits<double>::infinity();
}

Ellipsoid::Ellipsoid(Eigen::VectorXd center, Eigen::MatrixXd shape, double level)
    : c(std::move(center)), S(std::move(shape)), rho(level) {
  PMPSC_THROW_UNLESS(S.rows() == c.size() && S.cols() == c.size() && c.size() > 0,
                     DimensionMismatch, "ellipsoid: shape/center sizes");
  PMPSC_THROW_UNLESS(is_symmetric(S, 1e-10), InvalidArgument,
                     "ellipsoid: shape not symmetric");
  PMPSC_THROW_UNLESS(min_eigenvalue(S) > 0, InvalidArgument,
                     "ellipsoid: shape not positive definite");
  PMPSC_THROW_UNLESS(rho > 0 && std::isfinite(rho), InvalidArgument,
                     "ellipsoid: level must be positive");
  S = symmetrize(S);
}

bool Ellipsoid::contains(const Eigen::VectorXd& x, double tol) const {
  const Eigen::VectorXd d = x - c;
  return d.dot(S * d) <= rho * (1.0 + tol);
}

double Ellipsoid::support(const Eigen::VectorXd& a) const {
  return a.dot(c) + std::sqrt(rho * a.dot(S.llt().solve(a)));
}

SupportSet SupportSet::from_ellipsoid(const Ellipsoid& e) {
  SupportSet s(e.dim());
  s.add(e);
  return s;
}

void SupportSet::add(const Ellipsoid& e) {
  PMPSC_THROW_UNLESS(e.dim() == dim_, DimensionMismatch, "support set: term dimension");
  PMPSC_THROW_UNLESS(e.c.cwiseAbs().maxCoeff() <= 1e-12, InvalidArgument,
                     "support set: terms must be origin-centred");
  const Eigen::MatrixXd inv =
      e.S.llt().solve(Eigen::MatrixXd::Identity(dim_, dim_));
  terms_.push_back({symmetrize(inv), e.rho});
}

void SupportSet::add_dual(Eigen::MatrixXd dual, double rho) {
  PMPSC_THROW_UNLESS(dual.rows() == dim_ && dual.cols() == dim_, DimensionMismatch,
                     "support set: dual term dimension");
  PMPSC_THROW_UNLESS(rho >= 0 && std::isfinite(rho), InvalidArgument,
                     "support set: level must be nonnegative");
  PMPSC_THROW_UNLESS(is_symmetric(dual, 1e-9), InvalidArgument,
                     "support set: dual term not symmetric");
  terms_.push_back({symmetrize(dual), rho});
}

void SupportSet::append(const SupportSet& other) {
  PMPSC_THROW_UNLESS(other.dim_ == dim_, DimensionMismatch, "support set: append dimension");
  terms_.insert(terms_.end(), other.terms_.begin(), other.terms_.end());
}

double SupportSet::support(const Eigen::VectorXd& a) const {
  PMPSC_THROW_UNLESS(a.size() == dim_, DimensionMismatch, "support: direction dimension");
  double s = 0.0;
  for (const auto& t : terms_) s += std::sqrt(std::max(0.0, t.rho * a.dot(t.dual * a)));
  return s;
}

Eigen::VectorXd SupportSet::term_argmax(std::size_t i, const Eigen::VectorXd& a) const {
  const auto& t = terms_.at(i);
  const Eigen::VectorXd Ma = t.dual * a;
  const double q = a.dot(Ma);
  if (q <= 0) return Eigen::VectorXd::Zero(dim_);
  return std::sqrt(t.rho / q) * Ma;
}

HPolytope pontryagin_tighten(const HPolytope& poly, const SupportSet& tube) {
  PMPSC_THROW_UNLESS(tube.dim() == poly.dim(), DimensionMismatch,
                     "tighten: tube and polytope dimensions differ");
  Eigen::VectorXd h = poly.h();
  for (int j = 0; j < poly.num_facets(); ++j)
    h[j] -= tube.support(poly.H().row(j).transpose());
  HPolytope out(poly.H(), h, HPolytope::Unchecked{});
  if (out.interior_depth() <= kEmptyTol) {
    int worst = 0;
    double worst_ratio = -std::numeric_limits<double>::infinity();
    for (int j = 0; j < poly.num_facets(); ++j) {
      const double used = poly.h()[j] - h[j];
      const double ratio = used / std::max(std::abs(poly.h()[j]), 1e-12);
      if (ratio > worst_ratio) {
        worst_ratio = ratio;
        worst = j;
      }
    }
    throw EmptyTightening("no interior left; facet " + std::to_string(worst) +
                          " loses " + std::to_string(poly.h()[worst] - h[worst]) +
                          " of " + std::to_string(poly.h()[worst]));
  }
  return out;
}

SupportSet map_tube(const Eigen::MatrixXd& K, const SupportSet& tube) {
  PMPSC_THROW_UNLESS(K.cols() == tube.dim(), DimensionMismatch,
                     "map_tube: K columns must equal tube dimension");
  SupportSet out(static_cast<int>(K.rows()));
  for (const auto& t : tube.terms()) out.add_dual(symmetrize(K * t.dual * K.transpose()), t.rho);
  return out;
}

Eigen::VectorXd caratheodory_reduce(const std::vector<Eigen::VectorXd>& vertices,
                                    Eigen::VectorXd w) {
  PMPSC_THROW_UNLESS(w.size() == static_cast<Eigen::Index>(vertices.size()), DimensionMismatch,
                     "caratheodory: weight count");
  if (vertices.empty()) return w;
  const auto n = vertices.front().size();
  const double drop = 1e-14 * std::max(1.0, w.cwiseAbs().maxCoeff());
  std::vector<int> support;
  for (int j = 0; j < w.size(); ++j) {
    if (w[j] > drop) support.push_back(j);
    else w[j] = 0.0;
  }
  // While more than n + 1 points carry weight, a kernel vector of the lifted
  // points [v; 1] over n + 2 of them moves mass until one weight hits zero.
  while (static_cast<Eigen::Index>(support.size()) > n + 1) {
    const int cols = static_cast<int>(n) + 2;
    Eigen::MatrixXd M(n + 1, cols);
    for (int c = 0; c < cols; ++c) M.col(c) << vertices[support[c]], 1.0;
    Eigen::FullPivLU<Eigen::MatrixXd> lu(M);
    const Eigen::VectorXd k = lu.kernel().col(0);
    double t = std::numeric_limits<double>::infinity();
    int hit = -1;
    for (int c = 0; c < cols; ++c)
      if (k[c] > 1e-14 * k.cwiseAbs().maxCoeff() && w[support[c]] / k[c] < t) {
        t = w[support[c]] / k[c];
        hit = c;
      }
    if (hit < 0) break;
    for (int c = 0; c < cols; ++c) w[support[c]] = std::max(0.0, w[support[c]] - t * k[c]);
    w[support[hit]] = 0.0;
    support.erase(support.begin() + hit);
  }
  return w;
}

std::optional<Eigen::VectorXd> hull_weights(const std::vector<Eigen::VectorXd>& vertices,
                                            const Eigen::VectorXd& q, double tol) {
  PMPSC_THROW_UNLESS(!vertices.empty(), InvalidArgument, "hull: no vertices");
  const int n = static_cast<int>(q.size());
  const int k = static_cast<int>(vertices.size());
  for (int j = 0; j < k; ++j) {
    PMPSC_THROW_UNLESS(vertices[j].size() == n, DimensionMismatch, "hull: vertex dimension");
    if ((vertices[j] - q).norm() <= tol) {
      Eigen::VectorXd w = Eigen::VectorXd::Zero(k);
      w[j] = 1.0;
      return w;
    }
  }
  // LP in (lambda, r+, r-) >= 0: min 1'(r+ + r-), V lambda - r+ + r- = q,
  // 1'lambda = 1. The l1 residual makes the objective accuracy carry over to
  // the distance linearly.
  const int nv = k + 2 * n;
  std::vector<Eigen::Triplet<double>> te, ti;
  for (int j = 0; j < k; ++j) {
    for (int i = 0; i < n; ++i)
      if (vertices[j][i] != 0.0) te.emplace_back(i, j, vertices[j][i]);
    te.emplace_back(n, j, 1.0);
  }
  for (int i = 0; i < n; ++i) {
    te.emplace_back(i, k + i, -1.0);
    te.emplace_back(i, k + n + i, 1.0);
  }
  for (int j = 0; j < nv; ++j) ti.emplace_back(j, j, -1.0);
  QuadraticProgram qp;
  qp.P.resize(nv, nv);
  qp.q = Eigen::VectorXd::Zero(nv);
  qp.q.tail(2 * n).setOnes();
  qp.A_eq.resize(n + 1, nv);
  qp.A_eq.setFromTriplets(te.begin(), te.end());
  qp.b_eq.resize(n + 1);
  qp.b_eq << q, 1.0;
  qp.A_in.resize(nv, nv);
  qp.A_in.setFromTriplets(ti.begin(), ti.end());
  qp.b_in = Eigen::VectorXd::Zero(nv);
  qp.P.makeCompressed();
  qp.A_eq.makeCompressed();
  qp.A_in.makeCompressed();
  QpSettings s;
  s.method = QpMethod::InteriorPoint;
  s.tol = 1e-10;
  QpSolver solver(s);
  const auto rep = solver.solve(qp);
  if (rep.status == QpStatus::Infeasible || rep.status == QpStatus::NumericalFailure)
    return std::nullopt;
  Eigen::VectorXd w = caratheodory_reduce(vertices, rep.x_opt.head(k).cwiseMax(0.0));
  const double sum = w.sum();
  if (sum <= 0) return std::nullopt;
  w /= sum;
  Eigen::VectorXd p = Eigen::VectorXd::Zero(n);
  for (int j = 0; j < k; ++j) p += w[j] * vertices[j];
  if ((p - q).norm() > tol) return std::nullopt;
  return w;
}

bool hull_membership(const std::vector<Eigen::VectorXd>& vertices, const Eigen::VectorXd& q,
                     double tol) {
  return hull_weights(vertices, q, tol).has_value();
}

std::vector<Eigen::VectorXd> box_vertices(const HPolytope& poly) {
  const auto [lo, hi] = poly.box_bounds();
  const int d = poly.dim();
  PMPSC_THROW_UNLESS(d < 30, InvalidArgument, "box_vertices: dimension too large");
  std::vector<Eigen::VectorXd> out;
  out.reserve(std::size_t{1} << d);
  for (std::size_t mask = 0; mask < (std::size_t{1} << d); ++mask) {
    Eigen::VectorXd v(d);
    for (int i = 0; i < d; ++i) v[i] = (mask >> i) & 1 ? hi[i] : lo[i];
    out.push_back(v);
  }
  return out;
}

HPolytope cartesian_product(const HPolytope& a, const HPolytope& b) {
  Eigen::MatrixXd H = Eigen::MatrixXd::Zero(a.num_facets() + b.num_facets(), a.dim() + b.dim());
  H.topLeftCorner(a.num_facets(), a.dim()) = a.H();
  H.bottomRightCorner(b.num_facets(), b.dim()) = b.H();
  Eigen::VectorXd h(a.num_facets() + b.num_facets());
  h << a.h(), b.h();
  return HPolytope(H, h);
}

bool minkowski_contains(const Ellipsoid& E1, const Ellipsoid& E2, const Eigen::VectorXd& x,
                        double tol) {
  PMPSC_THROW_UNLESS(E1.dim() == E2.dim() && x.size() == E1.dim(), DimensionMismatch,
                     "minkowski_contains: dimensions");
  const Eigen::VectorXd y = x - E1.c - E2.c;
  if (y.dot(E2.S * y) <= E2.rho * (1 + tol)) return true;   // e1 = 0
  if (y.dot(E1.S * y) <= E1.rho * (1 + tol)) return true;   // e2 = 0
  // e(mu) = (S2 + mu S1)^{-1} S2 y, g(mu) = e'S1e decreasing; solve g = rho1.
  const Eigen::VectorXd S2y = E2.S * y;
  auto e_of = [&](double mu) -> Eigen::VectorXd {
    return (E2.S + mu * E1.S).ldlt().solve(S2y);
  };
  auto g = [&](double mu) {
    const Eigen::VectorXd e = e_of(mu);
    return e.dot(E1.S * e);
  };
  double lo = 0.0, hi = 1.0;
  while (g(hi) > E1.rho && hi < 1e15) hi *= 4.0;
  for (int it = 0; it < 200 && hi - lo > 1e-12 * std::max(1.0, hi); ++it) {
    const double mid = 0.5 * (lo + hi);
    (g(mid) > E1.rho ? lo : hi) = mid;
  }
  const Eigen::VectorXd e = e_of(hi);
  const Eigen::VectorXd r = y - e;
  return r.dot(E2.S * r) <= E2.rho * (1 + tol);
}

}  // namespace pmpsc
