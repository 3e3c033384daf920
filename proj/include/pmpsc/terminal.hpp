#pragma once

#include <vector>

#include <Eigen/Dense>

#include "pmpsc/sets.hpp"

namespace pmpsc {

// Nominal trajectory v_0..v_{N-1} (m x N), z_0..z_N (n x (N+1)).
struct NominalPlan {
  Eigen::MatrixXd v;
  Eigen::MatrixXd z;

  int horizon() const { return static_cast<int>(v.cols()); }
  static NominalPlan zeros(int n, int m, int N);
  // max_i |z_{i+1} - A z_i - B v_i|_inf
  double dynamics_residual(const Eigen::MatrixXd& A, const Eigen::MatrixXd& B) const;
  // Smallest facet slack of z_0..z_{N-1} in X and v_0..v_{N-1} in U.
  double min_slack(const HPolytope& X, const HPolytope& U) const;
};

struct TerminalVertex {
  int id = 0;
  Eigen::VectorXd point;
  NominalPlan plan;  // starts at point, ends inside the hull of earlier vertices
};

// Conv(vertices) with the origin always present. Every vertex carries the
// plan that certified it, so the terminal control law can be replayed.
class TerminalSet {
 public:
  TerminalSet(int n, int m, int horizon, int max_vertices = 200);

  int n() const { return n_; }
  int m() const { return m_; }
  int horizon() const { return horizon_; }
  int max_vertices() const { return max_vertices_; }
  int generation() const { return generation_; }
  int size() const { return static_cast<int>(vertices_.size()); }

  const std::vector<TerminalVertex>& vertices() const { return vertices_; }
  std::vector<Eigen::VectorXd> points() const;
  Eigen::MatrixXd point_matrix() const;  // n x size()
  // nullptr if the id was pruned.
  const TerminalVertex* find(int id) const;

  bool contains(const Eigen::VectorXd& z, double tol = 1e-7) const;

  // Adds z0 (with its plan) unless it is already in the hull. Prunes when the
  // cap is hit; throws CapReached if pruning frees nothing.
  bool enlarge(const Eigen::VectorXd& z0, const NominalPlan& plan);
  // Drops vertices that are convex combinations of the others; the origin is
  // kept. Returns the number removed.
  int prune();
  // Keeps only vertices whose plans are still valid for (A, B, X, U) and end
  // inside the hull of the survivors. Returns the number removed.
  int revalidate(const HPolytope& X, const HPolytope& U, const Eigen::MatrixXd& A,
                 const Eigen::MatrixXd& B, double tol = 1e-8);

  // Rebuilds a persisted set verbatim (ids, counters). The first vertex must
  // be the origin with id 0.
  static TerminalSet restore(int n, int m, int horizon, int max_vertices, int generation,
                             int next_id, std::vector<TerminalVertex> vertices);
  int next_id() const { return next_id_; }

 private:
  int n_, m_, horizon_, max_vertices_;
  int generation_ = 0;
  int next_id_ = 1;
  std::vector<TerminalVertex> vertices_;
};

// {0} with the all-zero plan; throws OriginInfeasible unless the origin lies
// in the tightened state and input sets.
TerminalSet init_terminal(const HPolytope& X_tight, const HPolytope& U_tight, int horizon,
                          int max_vertices = 200);

}  // namespace pmpsc
