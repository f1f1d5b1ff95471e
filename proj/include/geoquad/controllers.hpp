#pragma once

// Finite-horizon tracking LQR on the linearized error model, and a cascaded
// position -> attitude controller used as the conventional baseline.

#include <Eigen/Dense>

#include <cmath>
#include <vector>

#include "geoquad/dynamics.hpp"
#include "geoquad/error_model.hpp"
#include "geoquad/errors.hpp"
#include "geoquad/lie.hpp"
#include "geoquad/reference.hpp"

namespace geoquad {

struct LqrWeights
{
  Mat3 Q_theta   = 10.0 * Mat3::Identity();
  Mat3 Q_v       = 10.0 * Mat3::Identity();
  Mat3 Q_p       = 100.0 * Mat3::Identity();
  Mat3 Q_int     = 0.1 * Mat3::Identity();
  double R_f     = 0.05;
  double R_omega = 2.5;

  /// diag(Q_theta, Q_v, Q_p[, Q_int]) for n = 9 or 12.
  MatX state_weight(int n) const
  {
    if (n != 9 && n != 12) { throw InvalidArgument("LqrWeights: state dimension must be 9 or 12"); }
    MatX q = MatX::Zero(n, n);
    q.block<3, 3>(0, 0) = Q_theta;
    q.block<3, 3>(3, 3) = Q_v;
    q.block<3, 3>(6, 6) = Q_p;
    if (n == 12) { q.block<3, 3>(9, 9) = Q_int; }
    return q;
  }

  MatX input_weight() const
  {
    MatX r = MatX::Zero(kInputDim, kInputDim);
    r(0, 0) = R_f;
    r.bottomRightCorner<3, 3>() = R_omega * Mat3::Identity();
    return r;
  }

  void validate(int n) const
  {
    const MatX q = state_weight(n);
    if ((q - q.transpose()).cwiseAbs().maxCoeff() > 1e-12 || q.llt().info() != Eigen::Success) {
      throw InvalidArgument("LqrWeights: Q must be symmetric positive definite");
    }
    if (!(R_f > 0.0) || !(R_omega > 0.0)) { throw InvalidArgument("LqrWeights: R_f and R_omega must be > 0"); }
  }
};

/// Per-timestep feedback gains, du_k = -K_k dxi_k.
struct GainSchedule
{
  std::vector<MatX> K;

  std::size_t size() const { return K.size(); }
};

struct RiccatiSolution
{
  GainSchedule gains;
  std::vector<MatX> P;  // P_0 .. P_N
};

/// Backward Riccati recursion with terminal cost P_N = Q over a generic
/// time-varying sequence (A_k, B_k), k = 0..N-1.
inline RiccatiSolution riccati_recursion(const std::vector<MatX> & a, const std::vector<MatX> & b, const MatX & q,
                                         const MatX & r)
{
  if (a.empty() || a.size() != b.size()) { throw InvalidArgument("riccati_recursion: empty or mismatched model"); }
  const std::size_t n_steps = a.size();
  RiccatiSolution sol;
  sol.gains.K.resize(n_steps);
  sol.P.resize(n_steps + 1);
  sol.P[n_steps] = q;
  for (std::size_t i = n_steps; i-- > 0;) {
    const MatX & p_next = sol.P[i + 1];
    const MatX bt_p     = b[i].transpose() * p_next;
    const MatX s        = r + bt_p * b[i];
    Eigen::LLT<MatX> llt(s);
    if (llt.info() != Eigen::Success) { throw NumericalError("riccati_recursion: R + B^T P B is not positive definite"); }
    MatX k  = llt.solve(bt_p * a[i]);
    MatX p  = q + a[i].transpose() * p_next * (a[i] - b[i] * k);
    sol.P[i]       = 0.5 * (p + p.transpose());
    sol.gains.K[i] = std::move(k);
  }
  return sol;
}

inline GainSchedule solve_lqr(const LinearizedModel & model, const LqrWeights & w)
{
  if (model.size() == 0) { throw InvalidArgument("solve_lqr: empty model"); }
  w.validate(model.n);
  return riccati_recursion(model.A, model.B, w.state_weight(model.n), w.input_weight()).gains;
}

/// du = -K dxi, then f = f_r - df and w_b = dR w_r - dw.
inline ControlInput lqr_control(const ErrorState & err, const MatX & gain, const ReferencePoint & ref,
                                const Rotation & delta_rot, Vec4 * du_out = nullptr)
{
  const VecX x = err.vector();
  if (gain.cols() != x.size() || gain.rows() != kInputDim) {
    throw InvalidArgument("lqr_control: gain shape does not match the error state");
  }
  const Vec4 du = -gain * x;
  if (du_out != nullptr) { *du_out = du; }
  return recover_input(du, ref, delta_rot);
}

/// Gains for the cascaded baseline. Tuned in simulation, not taken from any vehicle.
struct CascadeGains
{
  double kp_pos   = 1.2;   // 1/s^2
  double ki_pos   = 0.0;   // 1/s^3
  double kd_vel   = 1.6;   // 1/s
  double k_att    = 6.0;   // 1/s
  bool rate_feedforward = false;
};

/// Outer loop: PI on position + D via velocity -> desired acceleration -> thrust
/// and attitude (flatness). Inner loop: w_cmd = k_att log(R^T R_des).
/// `pos_integral` is the caller-owned integral of the position error.
inline ControlInput cascade_control(const QuadState & s, const ReferencePoint & ref, const CascadeGains & gains,
                                    const QuadParams & params, const Vec3 & pos_integral = Vec3::Zero())
{
  const Vec3 a_des = ref.a + gains.kp_pos * (ref.p - s.pos) + gains.kd_vel * (ref.v - s.vel) + gains.ki_pos * pos_integral;
  const Vec3 n     = checked_specific_force(a_des, params.g);
  const double yaw = ref.rot.yaw_pitch_roll()(0);
  const Rotation r_des = attitude_from_thrust_direction(n.normalized(), yaw);

  ControlInput u;
  u.thrust    = std::max(0.0, params.mass * n.dot(s.rot.matrix().col(2)));
  u.omega_cmd = gains.k_att * log_so3(s.rot.inverse() * r_des);
  if (gains.rate_feedforward) { u.omega_cmd += (s.rot.inverse() * ref.rot) * ref.omega; }
  return u;
}

}  // namespace geoquad
