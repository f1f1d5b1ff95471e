#pragma once

// Nonlinear quadrotor plant.
//
//   p' = v
//   v' = -g z_w + (f/m) R z_b - (1/m) R D R^T v
//   R' = R w^
//   w' = J^{-1} (tau - w x J w - E v_b - F w)       (torque mode)
//   w' = (w_cmd - w) / tau_w                          (kinematic mode, tau_w > 0)
//
// Kinematic mode with tau_w == 0 makes the body rate follow the command
// instantly.

#include <Eigen/Dense>

#include <cmath>

#include "geoquad/errors.hpp"
#include "geoquad/lie.hpp"

namespace geoquad {

inline const Vec3 kUnitZ = Vec3::UnitZ();

enum class RateMode { kinematic, torque };

struct QuadParams
{
  double mass   = 1.0;                                  // kg
  Mat3 inertia  = Vec3(0.01, 0.01, 0.02).asDiagonal();  // kg m^2
  Mat3 drag_D   = Vec3(0.3, 0.3, 0.1).asDiagonal();     // N s/m, body frame
  Mat3 drag_E   = Mat3::Zero();
  Mat3 drag_F   = Mat3::Zero();
  double g      = 9.81;
  RateMode rate_mode = RateMode::kinematic;
  double tau_omega   = 0.01;  // s

  /// Throws InvalidArgument naming the first violated invariant.
  void validate() const
  {
    if (!(mass > 0.0)) { throw InvalidArgument("QuadParams: mass must be > 0"); }
    if ((inertia - inertia.transpose()).cwiseAbs().maxCoeff() > 1e-12) {
      throw InvalidArgument("QuadParams: inertia must be symmetric");
    }
    Eigen::SelfAdjointEigenSolver<Mat3> es(inertia);
    if (es.eigenvalues().minCoeff() <= 0.0) {
      throw InvalidArgument("QuadParams: inertia must be positive definite");
    }
    const Mat3 off = drag_D - Mat3(drag_D.diagonal().asDiagonal());
    if (off.cwiseAbs().maxCoeff() != 0.0 || drag_D.diagonal().minCoeff() < 0.0) {
      throw InvalidArgument("QuadParams: drag_D must be diagonal with nonnegative entries");
    }
    if (!(g > 0.0)) { throw InvalidArgument("QuadParams: g must be > 0"); }
    if (!(tau_omega >= 0.0)) { throw InvalidArgument("QuadParams: tau_omega must be >= 0"); }
    if (rate_mode == RateMode::torque && tau_omega == 0.0) {
      throw InvalidArgument("QuadParams: torque mode needs tau_omega > 0");
    }
  }
};

struct QuadState
{
  Rotation rot;                 // R_w^b
  Vec3 vel   = Vec3::Zero();    // world frame
  Vec3 pos   = Vec3::Zero();    // world frame
  Vec3 omega = Vec3::Zero();    // body frame

  ExtendedPose pose() const { return {rot, vel, pos}; }
};

struct ControlInput
{
  double thrust   = 0.0;          // N
  Vec3 omega_cmd  = Vec3::Zero(); // rad/s, body frame
};

/// Time derivative of a QuadState. The attitude rate is carried as the body
/// angular velocity, R' = R body_rate^.
struct StateDerivative
{
  Vec3 body_rate = Vec3::Zero();
  Vec3 vel_dot   = Vec3::Zero();
  Vec3 pos_dot   = Vec3::Zero();
  Vec3 omega_dot = Vec3::Zero();
};

inline Vec3 translational_acceleration(const QuadState & s, double thrust, const QuadParams & params)
{
  const Mat3 & r  = s.rot.matrix();
  const Vec3 v_b  = r.transpose() * s.vel;
  return -params.g * kUnitZ + (thrust / params.mass) * r.col(2) - (r * (params.drag_D * v_b)) / params.mass;
}

/// Full rigid-body derivative driven by an explicit body torque.
inline StateDerivative rigid_body_derivative(const QuadState & s, double thrust, const Vec3 & torque,
                                             const QuadParams & params)
{
  const Vec3 v_b  = s.rot.matrix().transpose() * s.vel;
  const Mat3 & j  = params.inertia;
  StateDerivative d;
  d.body_rate = s.omega;
  d.vel_dot   = translational_acceleration(s, thrust, params);
  d.pos_dot   = s.vel;
  d.omega_dot = j.ldlt().solve(torque - s.omega.cross(j * s.omega) - params.drag_E * v_b - params.drag_F * s.omega);
  return d;
}

inline StateDerivative state_derivative(const QuadState & s, const ControlInput & u, const QuadParams & params)
{
  const double f = std::max(u.thrust, 0.0);
  if (params.rate_mode == RateMode::torque) {
    // Inner rate loop: first-order tracking of the command with gyroscopic cancellation.
    const Mat3 & j     = params.inertia;
    const Vec3 torque  = j * (u.omega_cmd - s.omega) / params.tau_omega + s.omega.cross(j * s.omega);
    return rigid_body_derivative(s, f, torque, params);
  }
  StateDerivative d;
  d.body_rate = s.omega;
  d.vel_dot   = translational_acceleration(s, f, params);
  d.pos_dot   = s.vel;
  if (params.tau_omega > 0.0) { d.omega_dot = (u.omega_cmd - s.omega) / params.tau_omega; }
  return d;
}

namespace detail {

inline QuadState advance(const QuadState & s, const StateDerivative & d, double h)
{
  return {s.rot * exp_so3(d.body_rate * h), s.vel + h * d.vel_dot, s.pos + h * d.pos_dot, s.omega + h * d.omega_dot};
}

}  // namespace detail

/// One RK4 step. The attitude is advanced multiplicatively, R <- R exp(w dt),
/// with the stage-weighted body rate, so it never leaves SO(3).
inline QuadState step(QuadState s, const ControlInput & u, const QuadParams & params, double dt)
{
  if (!(dt > 0.0)) { throw InvalidArgument("step: dt must be > 0"); }
  const bool instant = params.rate_mode == RateMode::kinematic && params.tau_omega == 0.0;
  if (instant) { s.omega = u.omega_cmd; }

  const StateDerivative k1 = state_derivative(s, u, params);
  const StateDerivative k2 = state_derivative(detail::advance(s, k1, 0.5 * dt), u, params);
  const StateDerivative k3 = state_derivative(detail::advance(s, k2, 0.5 * dt), u, params);
  const StateDerivative k4 = state_derivative(detail::advance(s, k3, dt), u, params);

  StateDerivative avg;
  avg.body_rate = (k1.body_rate + 2.0 * k2.body_rate + 2.0 * k3.body_rate + k4.body_rate) / 6.0;
  avg.vel_dot   = (k1.vel_dot + 2.0 * k2.vel_dot + 2.0 * k3.vel_dot + k4.vel_dot) / 6.0;
  avg.pos_dot   = (k1.pos_dot + 2.0 * k2.pos_dot + 2.0 * k3.pos_dot + k4.pos_dot) / 6.0;
  avg.omega_dot = (k1.omega_dot + 2.0 * k2.omega_dot + 2.0 * k3.omega_dot + k4.omega_dot) / 6.0;
  return detail::advance(s, avg, dt);
}

}  // namespace geoquad
