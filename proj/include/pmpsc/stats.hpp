#pragma once

#include <cstdint>
#include <random>
#include <utility>

#include <Eigen/Dense>

namespace pmpsc {

using Rng = std::mt19937_64;

// Quantile of the chi-squared distribution with `dof` degrees of freedom:
// bisection on the regularized lower incomplete gamma function, |dx| <= 1e-10.
double chi2_quantile(double p, double dof);
double chi2_cdf(double x, double dof);

// Wilson score interval for `successes` out of `trials`; z defaults to 95%.
std::pair<double, double> wilson_interval(std::int64_t successes,
                                          std::int64_t trials,
                                          double z = 1.959963984540054);

Eigen::VectorXd standard_normal(Rng& rng, int n);

// Uniform sample on the unit sphere / in the unit ball of R^n.
Eigen::VectorXd unit_sphere_sample(Rng& rng, int n);
Eigen::VectorXd unit_ball_sample(Rng& rng, int n);

}  // namespace pmpsc
