#pragma once

#include <optional>
#include <vector>

#include <Eigen/Dense>

namespace pmpsc {

class SupportSet;

// { x : H x <= h }. Nonempty by construction (facet slack >= -1e-9).
class HPolytope {
 public:
  HPolytope(Eigen::MatrixXd H, Eigen::VectorXd h);

  // Axis-aligned box lo <= x <= hi, facets ordered (+e0, -e0, +e1, -e1, ...).
  static HPolytope box(const Eigen::VectorXd& lo, const Eigen::VectorXd& hi);

  const Eigen::MatrixXd& H() const { return H_; }
  const Eigen::VectorXd& h() const { return h_; }
  int dim() const { return static_cast<int>(H_.cols()); }
  int num_facets() const { return static_cast<int>(H_.rows()); }

  // min_j (h_j - H_j x); negative when x violates some facet.
  double min_slack(const Eigen::VectorXd& x) const;
  bool contains(const Eigen::VectorXd& x, double tol = 1e-9) const;

  // Largest t with H x + t |H_j| <= h for some x (Chebyshev-style depth),
  // capped at 1. Negative iff empty.
  double interior_depth() const;

  // Box bounds if every facet normal is +-e_i; NotABox otherwise.
  bool is_box() const;
  std::pair<Eigen::VectorXd, Eigen::VectorXd> box_bounds() const;

 private:
  struct Unchecked {};
  HPolytope(Eigen::MatrixXd H, Eigen::VectorXd h, Unchecked);
  Eigen::MatrixXd H_;
  Eigen::VectorXd h_;
  friend HPolytope pontryagin_tighten(const HPolytope&, const SupportSet&);
};

// { x : (x-c)' S (x-c) <= rho }.
struct Ellipsoid {
  Ellipsoid(Eigen::VectorXd center, Eigen::MatrixXd shape, double level);
  Eigen::VectorXd c;
  Eigen::MatrixXd S;
  double rho;
  int dim() const { return static_cast<int>(c.size()); }
  bool contains(const Eigen::VectorXd& x, double tol = 1e-12) const;
  double support(const Eigen::VectorXd& a) const;  // of the centered set + a'c
};

// Minkowski sum of origin-centred ellipsoids, kept in dual form: each term
// is (M_i, rho_i) with support sqrt(rho_i a' M_i a). For a term that came
// from an ellipsoid with shape S, M_i = S^{-1}; mapped terms keep K S^{-1} K'
// which may be singular.
class SupportSet {
 public:
  struct Term {
    Eigen::MatrixXd dual;  // PSD
    double rho;
  };

  explicit SupportSet(int dim) : dim_(dim) {}
  static SupportSet from_ellipsoid(const Ellipsoid& e);

  void add(const Ellipsoid& e);
  void add_dual(Eigen::MatrixXd dual, double rho);
  void append(const SupportSet& other);

  int dim() const { return dim_; }
  const std::vector<Term>& terms() const { return terms_; }
  double support(const Eigen::VectorXd& a) const;
  // A point on the boundary of term i maximizing a' e (a != 0).
  Eigen::VectorXd term_argmax(std::size_t i, const Eigen::VectorXd& a) const;

 private:
  int dim_;
  std::vector<Term> terms_;
};

// h'_j = h_j - supp(H_j'). Throws EmptyTightening naming the worst facet when
// the result has no interior (depth <= 1e-9).
HPolytope pontryagin_tighten(const HPolytope& poly, const SupportSet& tube);

// Image of every term under x -> K x.
SupportSet map_tube(const Eigen::MatrixXd& K, const SupportSet& tube);

// Is q a convex combination of the vertices (within tol in the 2-norm)?
bool hull_membership(const std::vector<Eigen::VectorXd>& vertices,
                     const Eigen::VectorXd& q, double tol = 1e-7);
// Convex weights realizing q, or nullopt when q is outside the hull.
std::optional<Eigen::VectorXd> hull_weights(
    const std::vector<Eigen::VectorXd>& vertices, const Eigen::VectorXd& q,
    double tol = 1e-7);

// Equivalent convex weights supported on at most dim + 1 points
// (Caratheodory); the weighted sum is unchanged up to round-off.
Eigen::VectorXd caratheodory_reduce(const std::vector<Eigen::VectorXd>& vertices,
                                    Eigen::VectorXd w);

std::vector<Eigen::VectorXd> box_vertices(const HPolytope& poly);

// Cartesian product of two polytopes (block-diagonal constraints).
HPolytope cartesian_product(const HPolytope& a, const HPolytope& b);

// Does x lie in E1 + E2 (Minkowski sum)? Exact up to a 1e-10 bisection on the
// Lagrange multiplier of min_{e in E1} (x - e)'S2(x - e).
bool minkowski_contains(const Ellipsoid& E1, const Ellipsoid& E2,
                        const Eigen::VectorXd& x, double tol = 1e-9);

}  // namespace pmpsc
