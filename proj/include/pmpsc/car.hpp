#pragma once

#include <Eigen/Dense>

#include "pmpsc/sets.hpp"
#include "pmpsc/stats.hpp"

namespace pmpsc::car {

// (x, y, theta, v, delta, a) in world coordinates.
using State = Eigen::Matrix<double, 6, 1>;
// (u_delta, u_a)
using Input = Eigen::Vector2d;

struct Params {
  double T_delta = 0.08;
  double T_a = 0.3;
  double L = 2.9;
  double v_ch = 20.0;
  double dt = 0.1;
  int substeps = 4;
  State noise_std = State::Constant(1e-3);

  void validate() const;
};

State derivative(const State& s, const Input& u, const Params& p);

// RK4 over dt with `substeps` equal substeps, no noise.
State integrate(const State& s, const Input& u, const Params& p);
// integrate() plus additive Gaussian noise noise_std .* xi.
State step(const State& s, const Input& u, const Params& p, Rng& rng);

// Reference: straight road at 10 m/s with a lateral sine of amplitude 0.6 m
// and period 20 s.
struct Reference {
  double speed = 10.0;
  double amplitude = 0.6;
  double period = 20.0;

  State at(double t) const;
};

// Deviation from the straight-line operating point (x - v0 t, y, theta, v - v0, delta, a).
Eigen::VectorXd to_deviation(const State& s, double t, double v0 = 10.0);
State from_deviation(const Eigen::VectorXd& e, double t, double v0 = 10.0);

// Constraint limits of the benchmark; violations are observed, never enforced.
struct Limits {
  double y_max = 1.0;
  double delta_max = 0.7;
  double v_max = 19.8;
  double a_min = -6.0, a_max = 2.0;
  double u_delta_max = 0.7;
  double u_a_min = -6.0, u_a_max = 2.0;
  // Envelope on the remaining deviation coordinates (the road segment the
  // filter is asked to certify).
  double x_dev_max = 2.0;
  double theta_max = 0.3;
  double v_dev_max = 2.0;
};

struct ConstraintReport {
  bool y = true, delta = true, v = true, a = true, u_delta = true, u_a = true;
  bool state_ok() const { return y && delta && v && a; }
  bool input_ok() const { return u_delta && u_a; }
  bool ok() const { return state_ok() && input_ok(); }
};
ConstraintReport check(const State& s, const Input& u, const Limits& lim = {});

// Boxes in deviation coordinates; inflate scales every half-width about its
// centre (1.2 gives the 20% larger sets used for the model-error bound).
HPolytope state_box(const Limits& lim = {}, double inflate = 1.0, double v0 = 10.0);
HPolytope input_box(const Limits& lim = {}, double inflate = 1.0);

// Finite-difference linearization of integrate() in deviation coordinates
// about the operating point (used as a reference model in tests).
std::pair<Eigen::MatrixXd, Eigen::MatrixXd> linearize(const Params& p, double v0 = 10.0);

}  // namespace pmpsc::car
