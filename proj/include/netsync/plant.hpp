#ifndef NETSYNC_PLANT_HPP_
#define NETSYNC_PLANT_HPP_

#include <cmath>
#include <stdexcept>

#include <Eigen/Dense>

namespace netsync {

using Vector2 = Eigen::Vector2d;
using Matrix2 = Eigen::Matrix2d;
using Vector5 = Eigen::Matrix<double, 5, 1>;
using Regressor = Eigen::Matrix<double, 2, 5>;

/// Physical constants of a planar two-link arm. The dynamics depend on the
/// five lumped parameters theta() only; the raw constants are kept so
/// scenarios stay editable in physical terms.
struct ManipulatorParams {
  double m1 = 1.0, m2 = 1.0;      // link masses [kg]
  double l1 = 0.5, l2 = 0.5;      // link lengths [m]
  double lc1 = 0.25, lc2 = 0.25;  // center-of-mass offsets [m]
  double I1 = 0.1, I2 = 0.1;      // link inertias [kg m^2]
  double gravity = 9.81;          // [m/s^2]

  Vector5 theta() const {
    Vector5 t;
    t << m1 * lc1 * lc1 + m2 * (l1 * l1 + lc2 * lc2) + I1 + I2,  //
        m2 * l1 * lc2,                                           //
        m2 * lc2 * lc2 + I2,                                     //
        m2 * lc2,                                                //
        m1 * lc1 + m2 * l1;
    return t;
  }

  void validate() const {
    if (m1 <= 0 || m2 <= 0 || l1 <= 0 || l2 <= 0 || lc1 <= 0 || lc2 <= 0 ||
        I1 <= 0 || I2 <= 0)
      throw std::invalid_argument("ManipulatorParams: all constants must be positive");
  }
};

/// Inertia matrix; symmetric positive definite for every configuration.
inline Matrix2 mass_matrix(const ManipulatorParams& params, const Vector2& p) {
  const Vector5 th = params.theta();
  const double c2 = std::cos(p(1));
  Matrix2 m;
  m << th(0) + 2 * th(1) * c2, th(2) + th(1) * c2,  //
      th(2) + th(1) * c2, th(2);
  return m;
}

/// Time derivative of the inertia matrix along (p, v), by the chain rule on
/// the cos(p2) entries. Exact, for use in the skew-symmetry checks.
inline Matrix2 mass_matrix_rate(const ManipulatorParams& params,
                                const Vector2& p, const Vector2& v) {
  const Vector5 th = params.theta();
  const double ds = -std::sin(p(1)) * v(1);
  Matrix2 m;
  m << 2 * th(1) * ds, th(1) * ds,  //
      th(1) * ds, 0;
  return m;
}

inline Matrix2 coriolis(const ManipulatorParams& params, const Vector2& p,
                        const Vector2& v) {
  const double th2 = params.theta()(1);
  const double s2 = std::sin(p(1));
  Matrix2 c;
  c << -th2 * s2 * v(1), -th2 * s2 * (v(0) + v(1)),  //
      th2 * s2 * v(0), 0;
  return c;
}

inline Vector2 gravity_torque(const ManipulatorParams& params,
                              const Vector2& p) {
  const Vector5 th = params.theta();
  const double g = params.gravity;
  Vector2 gv;
  gv << g * th(4) * std::cos(p(0)) + g * th(3) * std::cos(p(0) + p(1)),
      g * th(3) * std::cos(p(0) + p(1));
  return gv;
}

/// Regressor of the linear parametrization
///   mass_matrix(p) * xdot + coriolis(p, v) * x + gravity_torque(p)
///     = regressor(p, v, x, xdot) * theta.
inline Regressor regressor(const ManipulatorParams& params, const Vector2& p,
                           const Vector2& v, const Vector2& x,
                           const Vector2& xdot) {
  const double c1 = std::cos(p(0));
  const double c2 = std::cos(p(1));
  const double s2 = std::sin(p(1));
  const double c12 = std::cos(p(0) + p(1));
  const double g = params.gravity;
  Regressor y = Regressor::Zero();
  y(0, 0) = xdot(0);
  y(0, 1) = c2 * (2 * xdot(0) + xdot(1)) - s2 * (x(0) * v(1) + x(1) * (v(0) + v(1)));
  y(0, 2) = xdot(1);
  y(0, 3) = g * c12;
  y(0, 4) = g * c1;
  y(1, 1) = xdot(0) * c2 + x(0) * v(0) * s2;
  y(1, 2) = xdot(0) + xdot(1);
  y(1, 3) = g * c12;
  return y;
}

/// Joint accelerations under torque u.
inline Vector2 manipulator_accel(const ManipulatorParams& params,
                                 const Vector2& p, const Vector2& v,
                                 const Vector2& u) {
  const Matrix2 m = mass_matrix(params, p);
  const Vector2 rhs = u - coriolis(params, p, v) * v - gravity_torque(params, p);
  const double det = m(0, 0) * m(1, 1) - m(0, 1) * m(1, 0);
  Vector2 a;
  a << (m(1, 1) * rhs(0) - m(0, 1) * rhs(1)) / det,
      (m(0, 0) * rhs(1) - m(1, 0) * rhs(0)) / det;
  return a;
}

/// Certainty-equivalence tracking torque: feedforward through the current
/// parameter estimate plus velocity-error feedback.
inline Vector2 tracking_control(const Regressor& y, const Vector5& theta_hat,
                                const Vector2& velocity_error, double k_e) {
  if (!(k_e > 0.0))
    throw std::invalid_argument("tracking_control: k_e must be positive");
  return y * theta_hat - k_e * velocity_error;
}

/// Gradient adaptation of the parameter estimate. The sign is the one that
/// makes  d/dt [ e' M e + (th_hat - th)' Pi^{-1} (th_hat - th) ] / 2
/// equal to -k_e |e|^2 along closed-loop trajectories.
inline Vector5 adaptation_rate(const Eigen::Matrix<double, 5, 5>& pi,
                               const Regressor& y,
                               const Vector2& velocity_error) {
  return -pi * y.transpose() * velocity_error;
}

}  // namespace netsync

#endif  // NETSYNC_PLANT_HPP_
