#include "pmpsc/stats.hpp"

#include <cmath>

#include <boost/math/special_functions/gamma.hpp>

#include "pmpsc/errors.hpp"

namespace pmpsc {

double chi2_cdf(double x, double dof) {
  PMPSC_THROW_UNLESS(dof > 0, InvalidArgument, "chi2: dof must be positive");
  if (x <= 0) return 0.0;
  return boost::math::gamma_p(0.5 * dof, 0.5 * x);
}

double chi2_quantile(double p, double dof) {
  PMPSC_THROW_UNLESS(p > 0 && p < 1, InvalidArgument,
                     "chi2 quantile: p must lie in (0,1)");
  PMPSC_THROW_UNLESS(dof > 0, InvalidArgument, "chi2: dof must be positive");
  double lo = 0.0;
  double hi = std::max(1.0, dof);
  while (chi2_cdf(hi, dof) < p) hi *= 2.0;
  while (hi - lo > 1e-10 * std::max(1.0, hi)) {
    const double mid = 0.5 * (lo + hi);
    (chi2_cdf(mid, dof) < p ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

std::pair<double, double> wilson_interval(std::int64_t successes,
                                          std::int64_t trials, double z) {
  PMPSC_THROW_UNLESS(trials > 0 && successes >= 0 && successes <= trials,
                     InvalidArgument, "wilson: bad counts");
  const double n = static_cast<double>(trials);
  const double ph = static_cast<double>(successes) / n;
  const double z2 = z * z;
  const double den = 1.0 + z2 / n;
  const double center = (ph + z2 / (2 * n)) / den;
  const double half = z * std::sqrt(ph * (1 - ph) / n + z2 / (4 * n * n)) / den;
  return {std::max(0.0, center - half), std::min(1.0, center + half)};
}

Eigen::VectorXd standard_normal(Rng& rng, int n) {
  std::normal_distribution<double> nd(0.0, 1.0);
  Eigen::VectorXd v(n);
  for (int i = 0; i < n; ++i) v[i] = nd(rng);
  return v;
}

Eigen::VectorXd unit_sphere_sample(Rng& rng, int n) {
  Eigen::VectorXd v;
  do {
    v = standard_normal(rng, n);
  } while (v.norm() < 1e-12);
  return v / v.norm();
}

Eigen::VectorXd unit_ball_sample(Rng& rng, int n) {
  std::uniform_real_distribution<double> ud(0.0, 1.0);
  return unit_sphere_sample(rng, n) * std::pow(ud(rng), 1.0 / n);
}

}  // namespace pmpsc
