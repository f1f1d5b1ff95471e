#pragma once

// Dense box-constrained convex QP:
//
//   min  1/2 x^T H x + G^T x    s.t.  lower <= x <= upper
//
// Solved by accelerated projected gradient (FISTA) on a Jacobi-scaled copy of
// the problem. Diagonal scaling maps the box onto a box, so projection stays
// exact. Momentum is reset whenever the objective would increase, which keeps
// the accepted iterates monotone.

#include <Eigen/Dense>

#include <cmath>
#include <limits>
#include <optional>
#include <vector>

#include "geoquad/errors.hpp"
#include "geoquad/lie.hpp"

namespace geoquad::qp {

enum class Status { optimal, max_iter, infeasible_bounds };

inline const char * to_string(Status s)
{
  switch (s) {
    case Status::optimal: return "optimal";
    case Status::max_iter: return "max_iter";
    case Status::infeasible_bounds: return "infeasible_bounds";
  }
  return "unknown";
}

struct BoxQp
{
  MatX H;
  VecX G;
  VecX lower;
  VecX upper;

  Eigen::Index dim() const { return G.size(); }

  double objective(const VecX & x) const { return 0.5 * x.dot(H * x) + G.dot(x); }

  /// Shape, symmetry and PSD checks. Crossed bounds are reported by solve() as a status.
  void validate() const
  {
    const auto d = G.size();
    if (H.rows() != d || H.cols() != d || lower.size() != d || upper.size() != d) {
      throw InvalidArgument("BoxQp: dimension mismatch");
    }
    if (d == 0) { return; }
    const double scale = std::max(1.0, H.cwiseAbs().maxCoeff());
    if ((H - H.transpose()).cwiseAbs().maxCoeff() > 1e-10 * scale) { throw InvalidArgument("BoxQp: H is not symmetric"); }
    Eigen::SelfAdjointEigenSolver<MatX> es(H, Eigen::EigenvaluesOnly);
    if (es.eigenvalues().minCoeff() < -1e-8 * scale) { throw InvalidArgument("BoxQp: H is not positive semidefinite"); }
  }
};

struct Options
{
  double tol       = 1e-8;
  int max_iter     = 5000;
  std::optional<VecX> initial;  // clipped into the box before use
  bool record_objective = false;
};

struct Solution
{
  VecX x;
  int iterations      = 0;
  double kkt_residual = std::numeric_limits<double>::infinity();
  Status status       = Status::max_iter;
  std::vector<double> objective_trace;  // accepted iterates, when requested
};

/// max_i |x_i - clamp(x_i - grad_i)|: zero exactly at a KKT point.
inline double projected_gradient_norm(const BoxQp & p, const VecX & x)
{
  const VecX grad = p.H * x + p.G;
  return (x - (x - grad).cwiseMax(p.lower).cwiseMin(p.upper)).cwiseAbs().maxCoeff();
}

inline Solution solve(const BoxQp & p, const Options & opts = {})
{
  p.validate();
  const auto d = p.dim();
  Solution out;
  if ((p.lower.array() > p.upper.array()).any()) {
    out.x      = VecX::Zero(d);
    out.status = Status::infeasible_bounds;
    return out;
  }
  if (d == 0) {
    out.x            = VecX::Zero(0);
    out.kkt_residual = 0.0;
    out.status       = Status::optimal;
    return out;
  }

  // x = S y with S = diag(1/sqrt(H_ii)).
  VecX s(d);
  for (Eigen::Index i = 0; i < d; ++i) { s(i) = p.H(i, i) > 0.0 ? 1.0 / std::sqrt(p.H(i, i)) : 1.0; }
  const MatX hs = s.asDiagonal() * p.H * s.asDiagonal();
  const VecX gs = s.cwiseProduct(p.G);
  const VecX lo = p.lower.cwiseQuotient(s);
  const VecX hi = p.upper.cwiseQuotient(s);

  Eigen::SelfAdjointEigenSolver<MatX> es(hs, Eigen::EigenvaluesOnly);
  const double lip = std::max(es.eigenvalues().maxCoeff(), std::numeric_limits<double>::min());
  const double step = 1.0 / lip;

  auto clip  = [&](const VecX & y) -> VecX { return y.cwiseMax(lo).cwiseMin(hi); };
  auto f     = [&](const VecX & y) { return 0.5 * y.dot(hs * y) + gs.dot(y); };
  auto kkt   = [&](const VecX & y, const VecX & grad_y) {
    // Residual in the original coordinates: grad_x = grad_y / s.
    const VecX x  = s.cwiseProduct(y);
    const VecX gx = grad_y.cwiseQuotient(s);
    return (x - (x - gx).cwiseMax(p.lower).cwiseMin(p.upper)).cwiseAbs().maxCoeff();
  };

  VecX y = opts.initial && opts.initial->size() == d ? clip(opts.initial->cwiseQuotient(s)) : clip(VecX::Zero(d));
  VecX z = y;
  double fy = f(y);
  double t  = 1.0;
  if (opts.record_objective) { out.objective_trace.push_back(fy); }

  VecX grad_y = hs * y + gs;
  out.kkt_residual = kkt(y, grad_y);
  int it = 0;
  while (out.kkt_residual > opts.tol && it < opts.max_iter) {
    ++it;
    VecX y_next  = clip(z - step * (hs * z + gs));
    double f_next = f(y_next);
    if (f_next > fy) {
      // Restart: plain projected-gradient step from y. With step 1/L it cannot
      // increase f (up to round-off), so it is always accepted.
      t      = 1.0;
      y_next = clip(y - step * grad_y);
      f_next = f(y_next);
    }
    const double t_next = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * t * t));
    z  = y_next + ((t - 1.0) / t_next) * (y_next - y);
    y  = std::move(y_next);
    fy = f_next;
    t  = t_next;
    if (opts.record_objective) { out.objective_trace.push_back(fy); }
    grad_y = hs * y + gs;
    out.kkt_residual = kkt(y, grad_y);
  }
  out.x          = s.cwiseProduct(y);
  out.iterations = it;
  out.status     = out.kkt_residual <= opts.tol ? Status::optimal : Status::max_iter;
  return out;
}

}  // namespace geoquad::qp
