#pragma once

// Condensed, input-constrained MPC on the SE2(3) error model.
//
// Over a horizon of N steps with dXi = calA dxi_k + calB dU,
//
//   H = 2 (calB^T Qbar calB + Rbar),   G = 2 calB^T Qbar calA dxi_k,
//
// calA stacks A, A^2, ..., A^N and calB(i, j) = A^{i-j} B for i >= j. The cost
// 1/2 dU^T H dU + dU^T G differs from sum_{i=1..N} (dxi_i^T Q dxi_i + du_{i-1}^T R du_{i-1})
// by the constant dxi_k^T calA^T Qbar calA dxi_k.

#include <Eigen/Dense>

#include <algorithm>
#include <limits>

#include "geoquad/controllers.hpp"
#include "geoquad/error_model.hpp"
#include "geoquad/errors.hpp"
#include "geoquad/lie.hpp"
#include "geoquad/qp.hpp"
#include "geoquad/reference.hpp"

namespace geoquad {

struct MpcConfig
{
  int horizon    = 10;
  Mat3 Q_theta   = 1e5 * Mat3::Identity();
  Mat3 Q_v       = 5e6 * Mat3::Identity();
  Mat3 Q_p       = 1e9 * Vec3(7.0, 9.0, 4.0).asDiagonal();
  Mat3 Q_int     = 0.1 * Mat3::Identity();  // used only with an augmented model
  double R_f     = 1e3;
  double R_omega = 10.0;
  Vec4 du_min    = Vec4(-0.5 * 1.0 * 9.81, -2.0, -2.0, -2.0);
  Vec4 du_max    = Vec4(0.5 * 1.0 * 9.81, 2.0, 2.0, 2.0);
  /// false: freeze (A_k, B_k) across the horizon; true: use A_{k+i}, B_{k+i}.
  bool time_varying = false;
  double qp_tol     = 1e-8;
  int qp_max_iter   = 5000;

  LqrWeights weights() const { return {Q_theta, Q_v, Q_p, Q_int, R_f, R_omega}; }

  void validate(int n) const
  {
    if (horizon < 1) { throw InvalidArgument("MpcConfig: horizon must be >= 1"); }
    if ((du_min.array() > du_max.array()).any()) { throw InvalidArgument("MpcConfig: du_min must be <= du_max"); }
    weights().validate(n);
  }
};

struct CondensedProblem
{
  MatX calA;  // (N n) x n
  MatX calB;  // (N n) x (N m)
  qp::BoxQp qp;
  /// dxi_k^T calA^T Qbar calA dxi_k, so that the QP cost plus this equals the stage sum.
  double constant = 0.0;
};

/// Builds the condensed QP at step k. Horizon steps past the end of the model
/// reuse its final (A, B).
inline CondensedProblem condense(const LinearizedModel & model, std::size_t k, const MpcConfig & cfg,
                                 const ErrorState & err)
{
  const int n = model.n;
  const int m = model.m;
  const int horizon = cfg.horizon;
  const VecX xi = err.vector();
  if (xi.size() != n) { throw ConfigError("controller.mpc", "error-state dimension does not match the model"); }
  if (model.size() == 0) { throw InvalidArgument("condense: empty model"); }
  cfg.validate(n);

  auto at = [&](int i) -> std::size_t {
    const std::size_t idx = cfg.time_varying ? k + static_cast<std::size_t>(i) : k;
    return std::min(idx, model.size() - 1);
  };

  CondensedProblem cp;
  cp.calA = MatX::Zero(horizon * n, n);
  cp.calB = MatX::Zero(horizon * n, horizon * m);

  MatX power = MatX::Identity(n, n);
  for (int i = 0; i < horizon; ++i) {
    const MatX & a = model.A[at(i)];
    power = a * power;
    cp.calA.middleRows(i * n, n) = power;
    // Block (i, j) = A_{i} ... A_{j+1} B_j
    MatX prod = model.B[at(i)];
    cp.calB.block(i * n, i * m, n, m) = prod;
    for (int j = i - 1; j >= 0; --j) {
      if (cfg.time_varying) {
        // Rebuild the product right to left for the time-varying case.
        MatX chain = model.B[at(j)];
        for (int l = j + 1; l <= i; ++l) { chain = model.A[at(l)] * chain; }
        cp.calB.block(i * n, j * m, n, m) = chain;
      } else {
        cp.calB.block(i * n, j * m, n, m) = a * cp.calB.block((i - 1) * n, j * m, n, m);
      }
    }
  }

  const MatX q = cfg.weights().state_weight(n);
  const MatX r = cfg.weights().input_weight();

  // Qbar calB and Qbar calA without forming the block diagonal.
  MatX q_calb(horizon * n, horizon * m);
  MatX q_cala(horizon * n, n);
  for (int i = 0; i < horizon; ++i) {
    q_calb.middleRows(i * n, n) = q * cp.calB.middleRows(i * n, n);
    q_cala.middleRows(i * n, n) = q * cp.calA.middleRows(i * n, n);
  }

  MatX h = 2.0 * (cp.calB.transpose() * q_calb);
  for (int i = 0; i < horizon; ++i) { h.block(i * m, i * m, m, m) += 2.0 * r; }
  cp.qp.H = 0.5 * (h + h.transpose());
  cp.qp.G = 2.0 * (q_calb.transpose() * (cp.calA * xi));
  cp.constant = xi.dot(cp.calA.transpose() * (q_cala * xi));

  cp.qp.lower = cfg.du_min.replicate(horizon, 1);
  cp.qp.upper = cfg.du_max.replicate(horizon, 1);
  return cp;
}

struct MpcStep
{
  ControlInput u;
  Vec4 du = Vec4::Zero();
  VecX warm_start;  // shifted solution for the next step
  qp::Solution qp;
};

/// Shift a stacked input sequence one block forward, repeating the last block.
inline VecX shift_warm_start(const VecX & du_seq, int m)
{
  const auto len = du_seq.size();
  VecX out(len);
  if (len <= m) { return du_seq; }
  out.head(len - m) = du_seq.tail(len - m);
  out.tail(m)       = du_seq.tail(m);
  return out;
}

/// One receding-horizon step: condense, solve, apply the first input block.
/// On max_iter the best iterate is still used (status is reported in `qp`).
inline MpcStep mpc_control(const ErrorState & err, const LinearizedModel & model, std::size_t k, const MpcConfig & cfg,
                           const ReferencePoint & ref, const Rotation & delta_rot, const VecX & warm_start = VecX())
{
  if (!err.vector().allFinite()) { throw InvalidArgument("mpc_control: non-finite error state"); }
  const CondensedProblem cp = condense(model, k, cfg, err);

  qp::Options opts;
  opts.tol      = cfg.qp_tol;
  opts.max_iter = cfg.qp_max_iter;
  if (warm_start.size() == cp.qp.dim()) { opts.initial = warm_start; }

  MpcStep out;
  out.qp = qp::solve(cp.qp, opts);
  if (out.qp.status == qp::Status::infeasible_bounds) { throw InvalidArgument("mpc_control: du_min > du_max"); }
  out.du         = out.qp.x.head<kInputDim>();
  out.u          = recover_input(out.du, ref, delta_rot);
  out.warm_start = shift_warm_start(out.qp.x, model.m);
  return out;
}

}  // namespace geoquad
