#include "pmpsc/terminal.hpp"

#include <algorithm>
#include <limits>
#include <string>

#include "pmpsc/errors.hpp"

namespace pmpsc {

NominalPlan NominalPlan::zeros(int n, int m, int N) {
  return {Eigen::MatrixXd::Zero(m, N), Eigen::MatrixXd::Zero(n, N + 1)};
}

double NominalPlan::dynamics_residual(const Eigen::MatrixXd& A, const Eigen::MatrixXd& B) const {
  double r = 0.0;
  for (int i = 0; i < horizon(); ++i)
    r = std::max(r, (z.col(i + 1) - A * z.col(i) - B * v.col(i)).cwiseAbs().maxCoeff());
  return r;
}

double NominalPlan::min_slack(const HPolytope& X, const HPolytope& U) const {
  double s = std::numeric_limits<double>::infinity();
  for (int i = 0; i < horizon(); ++i) {
    s = std::min(s, X.min_slack(z.col(i)));
    s = std::min(s, U.min_slack(v.col(i)));
  }
  return s;
}

TerminalSet::TerminalSet(int n, int m, int horizon, int max_vertices)
    : n_(n), m_(m), horizon_(horizon), max_vertices_(max_vertices) {
  PMPSC_THROW_UNLESS(n > 0 && m > 0 && horizon >= 1, InvalidArgument, "terminal set dimensions");
  PMPSC_THROW_UNLESS(max_vertices >= 2, InvalidArgument, "terminal set cap must be >= 2");
  vertices_.push_back({0, Eigen::VectorXd::Zero(n), NominalPlan::zeros(n, m, horizon)});
}

TerminalSet TerminalSet::restore(int n, int m, int horizon, int max_vertices, int generation,
                                 int next_id, std::vector<TerminalVertex> vertices) {
  TerminalSet ts(n, m, horizon, max_vertices);
  PMPSC_THROW_UNLESS(!vertices.empty() && vertices.front().id == 0 && vertices.front().point.isZero(0.0),
                     InvalidArgument, "terminal restore: first vertex must be the origin");
  for (const auto& v : vertices) {
    PMPSC_THROW_UNLESS(v.point.size() == n && v.plan.v.rows() == m && v.plan.horizon() == horizon &&
                           v.plan.z.rows() == n,
                       DimensionMismatch, "terminal restore: vertex " + std::to_string(v.id));
    PMPSC_THROW_UNLESS(v.id < next_id, InvalidArgument, "terminal restore: id beyond counter");
  }
  PMPSC_THROW_UNLESS(static_cast<int>(vertices.size()) <= max_vertices, InvalidArgument,
                     "terminal restore: more vertices than the cap");
  ts.vertices_ = std::move(vertices);
  ts.generation_ = generation;
  ts.next_id_ = next_id;
  return ts;
}

std::vector<Eigen::VectorXd> TerminalSet::points() const {
  std::vector<Eigen::VectorXd> out;
  out.reserve(vertices_.size());
  for (const auto& v : vertices_) out.push_back(v.point);
  return out;
}

Eigen::MatrixXd TerminalSet::point_matrix() const {
  Eigen::MatrixXd V(n_, size());
  for (int j = 0; j < size(); ++j) V.col(j) = vertices_[j].point;
  return V;
}

const TerminalVertex* TerminalSet::find(int id) const {
  for (const auto& v : vertices_)
    if (v.id == id) return &v;
  return nullptr;
}

bool TerminalSet::contains(const Eigen::VectorXd& z, double tol) const {
  return hull_membership(points(), z, tol);
}

bool TerminalSet::enlarge(const Eigen::VectorXd& z0, const NominalPlan& plan) {
  PMPSC_THROW_UNLESS(z0.size() == n_, DimensionMismatch, "enlarge: point dimension");
  PMPSC_THROW_UNLESS(plan.horizon() == horizon_ && plan.v.rows() == m_ && plan.z.rows() == n_ &&
                         plan.z.cols() == horizon_ + 1,
                     DimensionMismatch, "enlarge: plan shape");
  if (contains(z0)) return false;
  if (size() >= max_vertices_) {
    prune();
    if (size() >= max_vertices_) throw CapReached("terminal set holds the maximum number of vertices");
  }
  vertices_.push_back({next_id_++, z0, plan});
  ++generation_;
  return true;
}

int TerminalSet::prune() {
  int removed = 0;
  // Back to front: a point inside the hull of the others can go without
  // changing the hull, so sequential removal is safe.
  for (int j = size() - 1; j >= 1; --j) {
    std::vector<Eigen::VectorXd> others;
    for (int i = 0; i < size(); ++i)
      if (i != j) others.push_back(vertices_[i].point);
    if (hull_membership(others, vertices_[j].point, 1e-9)) {
      vertices_.erase(vertices_.begin() + j);
      ++removed;
    }
  }
  if (removed) ++generation_;
  return removed;
}

int TerminalSet::revalidate(const HPolytope& X, const HPolytope& U, const Eigen::MatrixXd& A,
                            const Eigen::MatrixXd& B, double tol) {
  PMPSC_THROW_UNLESS(X.min_slack(Eigen::VectorXd::Zero(n_)) >= -1e-9 &&
                         U.min_slack(Eigen::VectorXd::Zero(m_)) >= -1e-9,
                     OriginInfeasible, "origin violates the tightened constraints");
  const auto before = vertices_.size();
  std::erase_if(vertices_, [&](const TerminalVertex& v) {
    if (v.id == 0) return false;
    const double scale = 1.0 + v.plan.z.cwiseAbs().maxCoeff();
    return v.plan.dynamics_residual(A, B) > tol * scale || v.plan.min_slack(X, U) < -tol;
  });
  // Endpoints must stay inside the surviving hull; removing one vertex can
  // expose another, so iterate to a fixed point.
  for (bool changed = true; changed;) {
    changed = false;
    const auto pts = points();
    for (std::size_t j = 1; j < vertices_.size(); ++j) {
      if (!hull_membership(pts, vertices_[j].plan.z.col(horizon_), 1e-7)) {
        vertices_.erase(vertices_.begin() + static_cast<std::ptrdiff_t>(j));
        changed = true;
        break;
      }
    }
  }
  const int removed = static_cast<int>(before - vertices_.size());
  if (removed) ++generation_;
  return removed;
}

TerminalSet init_terminal(const HPolytope& X_tight, const HPolytope& U_tight, int horizon,
                          int max_vertices) {
  const int n = X_tight.dim(), m = U_tight.dim();
  PMPSC_THROW_UNLESS(X_tight.min_slack(Eigen::VectorXd::Zero(n)) >= -1e-9, OriginInfeasible,
                     "origin outside the tightened state constraints");
  PMPSC_THROW_UNLESS(U_tight.min_slack(Eigen::VectorXd::Zero(m)) >= -1e-9, OriginInfeasible,
                     "zero input outside the tightened input constraints");
  return TerminalSet(n, m, horizon, max_vertices);
}

}  // namespace pmpsc
