#pragma once

// Left-invariant SE2(3) tracking error and its trajectory-linearized dynamics.
//
// Error:   dX = X^{-1} X_r,  dxi = log(dX) = (dxi_theta, dxi_v, dxi_p)
// Input:   du = (f_r - f,  dR w_r - w_b)
//
// Continuous blocks about the reference (drag-free model):
//
//            theta      v          p        int
//   theta  [   0        0          0         0 ]        [ 0      I ]
//   v      [ A_vt   -w_r^ - D/m    0         0 ]    B = [ z_b/m  0 ]
//   p      [   0        I        -w_r^       0 ]        [ 0      0 ]
//   int    [   0        I        c1 I        0 ]        [ 0      0 ]
//
// with A_vt = -(f_r/m) z_b^. The attitude row is zero because du already
// contains dR w_r: d(dR)/dt = dw^ dR exactly. When the drag term is kept in
// the model, A_vt gains -(1/m) D v_rb^ + (1/2m) (D v_rb)^, v_rb = R_r^T v_r;
// the second term comes from the J_l^{-1} map acting on the drag drift.
// Every block is checked against nonlinear finite differences in the tests.

#include <Eigen/Dense>
#include <unsupported/Eigen/MatrixFunctions>

#include <algorithm>
#include <cmath>
#include <optional>
#include <vector>

#include "geoquad/dynamics.hpp"
#include "geoquad/errors.hpp"
#include "geoquad/lie.hpp"
#include "geoquad/reference.hpp"

namespace geoquad {

inline constexpr int kInputDim = 4;

struct ErrorState
{
  TangentVector xi;
  std::optional<Vec3> xi_int;  // present iff the model is augmented

  bool augmented() const { return xi_int.has_value(); }

  VecX vector() const
  {
    VecX x(augmented() ? 12 : 9);
    x.head<9>() = xi.vector();
    if (augmented()) { x.tail<3>() = *xi_int; }
    return x;
  }
};

/// dR = R^T R_r.
inline Rotation error_rotation(const ExtendedPose & x, const ExtendedPose & xr)
{
  return x.rot.inverse() * xr.rot;
}

/// log(X^{-1} X_r); propagates LogSingularity.
inline ErrorState invariant_error(const ExtendedPose & x, const ExtendedPose & xr)
{
  return {log_se23(x.inverse() * xr), std::nullopt};
}

inline Vec4 input_error(const ControlInput & u, const ReferencePoint & ref, const Rotation & delta_rot)
{
  Vec4 du;
  du(0)            = ref.thrust - u.thrust;
  du.tail<3>()     = delta_rot * ref.omega - u.omega_cmd;
  return du;
}

/// Inverse of input_error for fixed (ref, dR).
inline ControlInput recover_input(const Vec4 & du, const ReferencePoint & ref, const Rotation & delta_rot)
{
  return {ref.thrust - du(0), delta_rot * ref.omega - du.tail<3>()};
}

enum class Discretization { euler, exact };

struct LinearizeConfig
{
  bool augmented       = true;
  double c1            = 0.01;
  double dt            = 0.002;
  bool drag_in_model   = false;
  Discretization discretization = Discretization::euler;

  int state_dim() const { return augmented ? 12 : 9; }
};

/// Discrete error dynamics dxi_{k+1} = A_k dxi_k + B_k du_k, one pair per reference sample.
struct LinearizedModel
{
  std::vector<MatX> A;
  std::vector<MatX> B;
  int n       = 9;
  int m       = kInputDim;
  double dt   = 0.002;
  double c1   = 0.01;
  bool augmented = false;

  std::size_t size() const { return A.size(); }
};

/// Continuous-time (A, B) about one reference sample.
inline std::pair<MatX, MatX> continuous_model(const ReferencePoint & ref, const QuadParams & params,
                                              const LinearizeConfig & cfg)
{
  const int n      = cfg.state_dim();
  const double m   = params.mass;
  const Mat3 w_hat = skew(ref.omega);

  MatX a = MatX::Zero(n, n);
  MatX b = MatX::Zero(n, kInputDim);

  Mat3 a_vt = -(ref.thrust / m) * skew(kUnitZ);
  Mat3 a_vv = -w_hat;
  if (cfg.drag_in_model) {
    const Vec3 v_rb = ref.rot.matrix().transpose() * ref.v;
    a_vt += -(params.drag_D * skew(v_rb)) / m + skew(params.drag_D * v_rb) / (2.0 * m);
    a_vv += -params.drag_D / m;
  }
  a.block<3, 3>(3, 0) = a_vt;
  a.block<3, 3>(3, 3) = a_vv;
  a.block<3, 3>(6, 3) = Mat3::Identity();
  a.block<3, 3>(6, 6) = -w_hat;
  if (cfg.augmented) {
    a.block<3, 3>(9, 3) = Mat3::Identity();
    a.block<3, 3>(9, 6) = cfg.c1 * Mat3::Identity();
  }

  b.block<3, 3>(0, 1) = Mat3::Identity();
  b.block<3, 1>(3, 0) = kUnitZ / m;
  return {a, b};
}

inline std::pair<MatX, MatX> discretize(const MatX & a, const MatX & b, double dt, Discretization method)
{
  const auto n = a.rows();
  if (method == Discretization::euler) {
    return {MatX::Identity(n, n) + a * dt, b * dt};
  }
  const auto m = b.cols();
  MatX aug     = MatX::Zero(n + m, n + m);
  aug.topLeftCorner(n, n)  = a * dt;
  aug.topRightCorner(n, m) = b * dt;
  const MatX e = aug.exp();
  return {e.topLeftCorner(n, n), e.topRightCorner(n, m)};
}

inline LinearizedModel linearize(const ReferenceTable & refs, const QuadParams & params, const LinearizeConfig & cfg)
{
  if (refs.empty()) { throw InvalidArgument("linearize: empty reference table"); }
  if (!(cfg.dt > 0.0)) { throw InvalidArgument("linearize: dt must be > 0"); }
  if (cfg.augmented && !(cfg.c1 > 0.0)) { throw InvalidArgument("linearize: c1 must be > 0 for the augmented model"); }

  LinearizedModel model;
  model.n         = cfg.state_dim();
  model.dt        = cfg.dt;
  model.c1        = cfg.c1;
  model.augmented = cfg.augmented;
  model.A.reserve(refs.size());
  model.B.reserve(refs.size());
  for (const auto & ref : refs) {
    auto [ac, bc] = continuous_model(ref, params, cfg);
    auto [ad, bd] = discretize(ac, bc, cfg.dt, cfg.discretization);
    model.A.push_back(std::move(ad));
    model.B.push_back(std::move(bd));
  }
  return model;
}

/// Worst one-step disagreement between the linear model and the nonlinear error flow.
struct ModelValidation
{
  double max_rel_residual = 0.0;
  double max_abs_residual = 0.0;
  std::size_t worst_step  = 0;
  int worst_column        = 0;
  std::size_t steps_checked = 0;
};

/// Nonlinear one-step error propagation: start from X = X_r exp(-xi), apply the
/// input recovered from `du`, integrate the drag-free plant for one dt and
/// recompute the invariant error against the next reference sample.
inline TangentVector propagate_error_nonlinear(const ReferencePoint & ref_k, const ReferencePoint & ref_next,
                                               const TangentVector & xi, const Vec4 & du,
                                               const QuadParams & plant, double dt)
{
  const ExtendedPose xr = ref_k.pose();
  const ExtendedPose x  = xr * exp_se23(xi).inverse();
  const Rotation d_rot  = error_rotation(x, xr);
  const ControlInput u  = recover_input(du, ref_k, d_rot);

  QuadState s{x.rot, x.vel, x.pos, u.omega_cmd};
  s = step(s, u, plant, dt);
  return invariant_error(s.pose(), ref_next.pose()).xi;
}

/// Finite-difference check of the discrete A_k columns (non-augmented, drag-free)
/// on `steps` samples spread evenly across the trajectory.
inline ModelValidation validate_linearization(const TrajectorySpec & spec, QuadParams params, double dt,
                                              double eps = 1e-5, std::size_t steps = 20)
{
  params.drag_D    = Mat3::Zero();
  params.drag_E    = Mat3::Zero();
  params.drag_F    = Mat3::Zero();
  params.rate_mode = RateMode::kinematic;
  params.tau_omega = 0.0;

  LinearizeConfig cfg;
  cfg.augmented     = false;
  cfg.dt            = dt;
  cfg.drag_in_model = false;

  const auto total = static_cast<std::size_t>(std::floor(spec.duration / dt)) - 1;
  ModelValidation out;
  for (std::size_t s = 0; s < steps; ++s) {
    const std::size_t k = steps == 1 ? 0 : s * total / (steps - 1);
    const ReferencePoint ref_k    = sample(spec, static_cast<double>(k) * dt, params);
    const ReferencePoint ref_next = sample(spec, static_cast<double>(k + 1) * dt, params);
    const auto [ac, bc]           = continuous_model(ref_k, params, cfg);
    const MatX ad                 = discretize(ac, bc, dt, Discretization::euler).first;

    const Vec9 base = propagate_error_nonlinear(ref_k, ref_next, TangentVector::zero(), Vec4::Zero(), params, dt).vector();
    for (int j = 0; j < 9; ++j) {
      const Vec9 pert = eps * Vec9::Unit(j);
      const Vec9 next =
          propagate_error_nonlinear(ref_k, ref_next, TangentVector::from_vector(pert), Vec4::Zero(), params, dt)
              .vector();
      const Vec9 predicted = ad * pert;
      const double abs_res = ((next - base) - predicted).cwiseAbs().maxCoeff();
      const double rel_res = abs_res / predicted.cwiseAbs().maxCoeff();
      if (rel_res > out.max_rel_residual) {
        out.max_rel_residual = rel_res;
        out.worst_step       = k;
        out.worst_column     = j;
      }
      out.max_abs_residual = std::max(out.max_abs_residual, abs_res);
    }
    ++out.steps_checked;
  }
  return out;
}

}  // namespace geoquad
