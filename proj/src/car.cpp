#include "pmpsc/car.hpp"

#include <cmath>
#include <numbers>

#include "pmpsc/errors.hpp"

namespace pmpsc::car {

void Params::validate() const {
  PMPSC_THROW_UNLESS(T_delta > 0 && T_a > 0 && L > 0 && dt > 0 && v_ch > 0, InvalidArgument,
                     "car parameters must be positive");
  PMPSC_THROW_UNLESS(substeps >= 1, InvalidArgument, "car: substeps must be >= 1");
  PMPSC_THROW_UNLESS((noise_std.array() >= 0).all(), InvalidArgument, "car: noise std must be >= 0");
}

State derivative(const State& s, const Input& u, const Params& p) {
  const double theta = s[2], v = s[3], delta = s[4], a = s[5];
  State d;
  d << v * std::cos(theta), v * std::sin(theta), (v / p.L) * std::tan(delta) / (1.0 + v / p.v_ch), a,
      (u[0] - delta) / p.T_delta, (u[1] - a) / p.T_a;
  return d;
}

State integrate(const State& s0, const Input& u, const Params& p) {
  const double h = p.dt / p.substeps;
  State s = s0;
  for (int i = 0; i < p.substeps; ++i) {
    const State k1 = derivative(s, u, p);
    const State k2 = derivative(s + 0.5 * h * k1, u, p);
    const State k3 = derivative(s + 0.5 * h * k2, u, p);
    const State k4 = derivative(s + h * k3, u, p);
    s += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
  }
  return s;
}

State step(const State& s, const Input& u, const Params& p, Rng& rng) {
  State out = integrate(s, u, p);
  std::normal_distribution<double> nd(0.0, 1.0);
  for (int i = 0; i < 6; ++i) out[i] += p.noise_std[i] * nd(rng);
  return out;
}

State Reference::at(double t) const {
  const double w = 2.0 * std::numbers::pi / period;
  State r;
  r << speed * t, amplitude * std::sin(w * t), std::atan(amplitude * w * std::cos(w * t) / speed),
      speed, 0.0, 0.0;
  return r;
}

Eigen::VectorXd to_deviation(const State& s, double t, double v0) {
  Eigen::VectorXd e = s;
  e[0] -= v0 * t;
  e[3] -= v0;
  return e;
}

State from_deviation(const Eigen::VectorXd& e, double t, double v0) {
  PMPSC_THROW_UNLESS(e.size() == 6, DimensionMismatch, "car: deviation must have 6 entries");
  State s = e;
  s[0] += v0 * t;
  s[3] += v0;
  return s;
}

ConstraintReport check(const State& s, const Input& u, const Limits& lim) {
  ConstraintReport r;
  r.y = std::abs(s[1]) <= lim.y_max;
  r.delta = std::abs(s[4]) <= lim.delta_max;
  r.v = std::abs(s[3]) <= lim.v_max;
  r.a = s[5] >= lim.a_min && s[5] <= lim.a_max;
  r.u_delta = std::abs(u[0]) <= lim.u_delta_max;
  r.u_a = u[1] >= lim.u_a_min && u[1] <= lim.u_a_max;
  return r;
}

namespace {

HPolytope inflated_box(const Eigen::VectorXd& lo, const Eigen::VectorXd& hi, double inflate) {
  PMPSC_THROW_UNLESS(inflate > 0, InvalidArgument, "car: inflation must be positive");
  const Eigen::VectorXd c = 0.5 * (lo + hi), hw = 0.5 * (hi - lo) * inflate;
  return HPolytope::box(c - hw, c + hw);
}

}  // namespace

HPolytope state_box(const Limits& lim, double inflate, double v0) {
  Eigen::VectorXd lo(6), hi(6);
  // The speed limit |v| <= v_max is implied by the tighter envelope on v - v0.
  const double v_lo = std::max(-lim.v_dev_max, -lim.v_max - v0);
  const double v_hi = std::min(lim.v_dev_max, lim.v_max - v0);
  lo << -lim.x_dev_max, -lim.y_max, -lim.theta_max, v_lo, -lim.delta_max, lim.a_min;
  hi << lim.x_dev_max, lim.y_max, lim.theta_max, v_hi, lim.delta_max, lim.a_max;
  return inflated_box(lo, hi, inflate);
}

HPolytope input_box(const Limits& lim, double inflate) {
  return inflated_box(Eigen::Vector2d(-lim.u_delta_max, lim.u_a_min),
                      Eigen::Vector2d(lim.u_delta_max, lim.u_a_max), inflate);
}

std::pair<Eigen::MatrixXd, Eigen::MatrixXd> linearize(const Params& p, double v0) {
  const double eps = 1e-6;
  const State s0 = from_deviation(Eigen::VectorXd::Zero(6), 0.0, v0);
  auto f = [&](const Eigen::VectorXd& e, const Input& u) {
    return to_deviation(integrate(from_deviation(e, 0.0, v0), u, p), p.dt, v0);
  };
  Eigen::MatrixXd A(6, 6), B(6, 2);
  for (int i = 0; i < 6; ++i) {
    Eigen::VectorXd ep = Eigen::VectorXd::Zero(6), em = ep;
    ep[i] = eps;
    em[i] = -eps;
    A.col(i) = (f(ep, Input::Zero()) - f(em, Input::Zero())) / (2 * eps);
  }
  for (int j = 0; j < 2; ++j) {
    Input up = Input::Zero(), um = Input::Zero();
    up[j] = eps;
    um[j] = -eps;
    B.col(j) = (f(Eigen::VectorXd::Zero(6), up) - f(Eigen::VectorXd::Zero(6), um)) / (2 * eps);
  }
  (void)s0;
  return {A, B};
}

}  // namespace pmpsc::car
