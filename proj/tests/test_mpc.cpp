#include <gtest/gtest.h>

#include "geoquad/mpc.hpp"
#include "geoquad/sim.hpp"
#include "test_util.hpp"

using namespace geoquad;
using geoquad::testing::Rng;

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

LinearizedModel hover_model(std::size_t steps)
{
  TrajectorySpec s;
  s.kind = TrajectoryKind::hover;
  LinearizeConfig cfg;
  cfg.augmented = false;
  const ReferencePoint r = sample(s, 0.0, QuadParams{});
  return linearize(ReferenceTable(steps, r), QuadParams{}, cfg);
}

LinearizedModel random_model(Rng & rng, std::size_t steps)
{
  LinearizedModel m;
  m.n = 9;
  m.m = 4;
  for (std::size_t k = 0; k < steps; ++k) {
    m.A.push_back(MatX::Identity(9, 9) + 0.1 * rng.normal(9, 9));
    m.B.push_back(0.1 * rng.normal(9, 4));
  }
  return m;
}

MpcConfig unbounded(MpcConfig cfg)
{
  cfg.du_min.setConstant(-kInf);
  cfg.du_max.setConstant(kInf);
  return cfg;
}

ErrorState error_from(const Vec9 & x)
{
  return {TangentVector::from_vector(x), std::nullopt};
}

/// First-step feedback gain of the unconstrained condensed problem, u_0 = -K xi.
MatX mpc_gain(const LinearizedModel & model, const MpcConfig & cfg)
{
  MatX k(4, 9);
  for (int j = 0; j < 9; ++j) {
    const CondensedProblem cp = condense(model, 0, cfg, error_from(Vec9::Unit(j)));
    k.col(j)                  = -cp.qp.H.ldlt().solve(cp.qp.G).head(4);
  }
  return -k;
}

}  // namespace

TEST(Condense, SingleStepForm)
{
  const LinearizedModel m = hover_model(3);
  MpcConfig cfg;
  cfg.horizon = 1;
  Vec9 x;
  x << 0.01, -0.02, 0.03, 0.1, 0.2, -0.1, 0.5, -0.4, 0.3;
  const CondensedProblem cp = condense(m, 0, cfg, error_from(x));
  const MatX q = cfg.weights().state_weight(9), r = cfg.weights().input_weight();
  const MatX h = 2.0 * (m.B[0].transpose() * q * m.B[0] + r);
  const VecX g = 2.0 * m.B[0].transpose() * q * m.A[0] * x;
  EXPECT_LT((cp.qp.H - h).cwiseAbs().maxCoeff(), 1e-9 * h.cwiseAbs().maxCoeff());
  EXPECT_LT((cp.qp.G - g).cwiseAbs().maxCoeff(), 1e-9 * g.cwiseAbs().maxCoeff());
  EXPECT_TRUE(condense(m, 0, cfg, error_from(Vec9::Zero())).qp.G.isZero(0.0));
}

TEST(Condense, CostMatchesForwardRollout)
{
  Rng rng(31);
  for (bool time_varying : {false, true}) {
    const LinearizedModel m = random_model(rng, 8);
    MpcConfig cfg;
    cfg.horizon      = 4;
    cfg.time_varying = time_varying;
    cfg.Q_theta      = rng.spd(3, 0.5, 2.0);
    cfg.Q_v          = rng.spd(3, 0.5, 2.0);
    cfg.Q_p          = rng.spd(3, 0.5, 2.0);
    cfg.R_f          = 0.7;
    cfg.R_omega      = 1.3;
    const Vec9 x0    = rng.normal(9, 1);
    const std::size_t k0 = 2;
    const CondensedProblem cp = condense(m, k0, cfg, error_from(x0));
    const MatX q = cfg.weights().state_weight(9), r = cfg.weights().input_weight();
    for (int trial = 0; trial < 100; ++trial) {
      const VecX du = rng.normal(16, 1);
      VecX x        = x0;
      double stage  = 0.0;
      for (int i = 0; i < 4; ++i) {
        const std::size_t idx = time_varying ? k0 + static_cast<std::size_t>(i) : k0;
        const VecX u          = du.segment(4 * i, 4);
        x                     = m.A[idx] * x + m.B[idx] * u;
        stage += x.dot(q * x) + u.dot(r * u);
      }
      const double quad = 0.5 * du.dot(cp.qp.H * du) + du.dot(cp.qp.G) + cp.constant;
      EXPECT_LT(std::abs(quad - stage) / std::abs(stage), 1e-9);
    }
  }
}

TEST(Condense, HorizonPastEndReusesLastModel)
{
  Rng rng(32);
  const LinearizedModel m = random_model(rng, 3);
  MpcConfig cfg;
  cfg.horizon      = 5;
  cfg.time_varying = true;
  const CondensedProblem cp = condense(m, 1, cfg, error_from(Vec9::Ones()));
  // Last block row: A_2^5 ... built from the final model only after index 2.
  const MatX expected = m.A[2] * m.A[2] * m.A[2] * m.A[2] * m.A[1];
  EXPECT_LT((cp.calA.bottomRows(9) - expected).cwiseAbs().maxCoeff(), 1e-10);
  EXPECT_THROW(condense(m, 0, cfg, ErrorState{TangentVector::zero(), Vec3::Zero()}), ConfigError);
}

TEST(MpcControl, ZeroErrorGivesFeedforward)
{
  const LinearizedModel m = hover_model(5);
  TrajectorySpec s;
  const ReferencePoint ref = sample(s, 1.0, QuadParams{});
  const MpcStep st = mpc_control(error_from(Vec9::Zero()), m, 0, MpcConfig{}, ref, Rotation());
  EXPECT_TRUE(st.du.isZero(0.0));
  EXPECT_DOUBLE_EQ(st.u.thrust, ref.thrust);
  EXPECT_EQ(st.u.omega_cmd, ref.omega);
}

TEST(MpcControl, UnboundedMatchesDenseSolve)
{
  const LinearizedModel m = hover_model(20);
  const MpcConfig cfg     = unbounded(MpcConfig{});
  Rng rng(33);
  for (int trial = 0; trial < 10; ++trial) {
    const Vec9 x              = 0.01 * rng.normal(9, 1);
    const CondensedProblem cp = condense(m, 0, cfg, error_from(x));
    const VecX dense          = -cp.qp.H.ldlt().solve(cp.qp.G);
    const MpcStep st          = mpc_control(error_from(x), m, 0, cfg, sample(TrajectorySpec{}, 0.0, QuadParams{}), Rotation());
    EXPECT_EQ(st.qp.status, qp::Status::optimal);
    EXPECT_LT((st.du - dense.head(4)).cwiseAbs().maxCoeff(), 1e-7);
  }
}

TEST(MpcControl, RateBoundSaturates)
{
  const LinearizedModel m = hover_model(20);
  MpcConfig cfg;
  cfg.du_min.tail<3>().setConstant(-0.001);
  cfg.du_max.tail<3>().setConstant(0.001);
  Vec9 x = Vec9::Zero();
  x.head<3>() = Vec3(0.3, -0.3, 0.2);
  const MpcStep st = mpc_control(error_from(x), m, 0, cfg, sample(TrajectorySpec{}, 0.0, QuadParams{}), Rotation());
  ASSERT_EQ(st.qp.status, qp::Status::optimal);
  const CondensedProblem cp = condense(m, 0, cfg, error_from(x));
  const VecX grad           = cp.qp.H * st.qp.x + cp.qp.G;
  for (int i = 1; i < 4; ++i) {
    EXPECT_NEAR(std::abs(st.du(i)), 0.001, 1e-15) << i;
    // At an upper bound the gradient points down, at a lower bound up.
    EXPECT_GT(-grad(i) * st.du(i), 0.0) << i;
  }
}

TEST(MpcControl, ClosedLoopInputsRespectBounds)
{
  ExperimentConfig cfg;
  cfg.controller.kind = ControllerKind::mpc;
  cfg.trajectory.kind = TrajectoryKind::hover;
  cfg.trajectory.duration = cfg.duration = 1.0;
  cfg.initial.pos_offset = Vec3(0.5, 0.0, -0.3);
  cfg.controller.mpc.config.du_min = Vec4(-2.0, -0.5, -0.5, -0.5);
  cfg.controller.mpc.config.du_max = Vec4(2.0, 0.5, 0.5, 0.5);
  const RunResult r = run(cfg);
  ASSERT_EQ(r.status, RunStatus::ok);
  bool saturated = false;
  for (const auto & row : r.rows) {
    for (int i = 0; i < 4; ++i) {
      EXPECT_GE(row.du(i), cfg.controller.mpc.config.du_min(i) - 1e-12);
      EXPECT_LE(row.du(i), cfg.controller.mpc.config.du_max(i) + 1e-12);
      saturated = saturated || std::abs(std::abs(row.du(i)) - cfg.controller.mpc.config.du_max(i)) < 1e-12;
    }
  }
  EXPECT_TRUE(saturated);
}

TEST(MpcControl, WarmStartShiftAndIterations)
{
  VecX seq(12);
  seq << 1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12;
  VecX expected(12);
  expected << 5, 6, 7, 8, 9, 10, 11, 12, 9, 10, 11, 12;
  EXPECT_EQ(shift_warm_start(seq, 4), expected);

  ExperimentConfig cfg;
  cfg.controller.kind = ControllerKind::mpc;
  cfg.duration = cfg.trajectory.duration = 30.0;
  cfg.dt       = 0.002;
  const ReferenceTable refs = build_reference_table(cfg.trajectory, cfg.plant, cfg.dt, 200);
  LinearizeConfig lc;
  lc.augmented = false;
  const LinearizedModel model = linearize(refs, cfg.plant, lc);
  // Same error sequence solved cold and warm.
  int cold = 0, warm = 0;
  VecX ws;
  for (std::size_t k = 0; k < 100; ++k) {
    Vec9 x = Vec9::Zero();
    x(6)   = 0.01 * std::cos(0.05 * static_cast<double>(k));
    x(7)   = 0.01 * std::sin(0.05 * static_cast<double>(k));
    const MpcStep c = mpc_control(error_from(x), model, k, cfg.controller.mpc.config, refs[k], Rotation());
    const MpcStep w = mpc_control(error_from(x), model, k, cfg.controller.mpc.config, refs[k], Rotation(), ws);
    ws   = w.warm_start;
    cold += c.qp.iterations;
    warm += w.qp.iterations;
    EXPECT_LT((c.du - w.du).cwiseAbs().maxCoeff(), 1e-6);
  }
  EXPECT_LT(warm, cold);
}

TEST(MpcControl, FirstStepGainConvergesToAlgebraicRiccati)
{
  const MpcConfig cfg     = unbounded(MpcConfig{});
  const LinearizedModel m = hover_model(1);
  const MatX q = cfg.weights().state_weight(9), r = cfg.weights().input_weight();
  const MatX x     = geoquad::testing::dare_doubling(m.A[0], m.B[0], q, r);
  const MatX k_are = geoquad::testing::dare_gain(m.A[0], m.B[0], x, r);
  double prev      = std::numeric_limits<double>::infinity();
  for (int n : {10, 25, 50, 100, 200}) {
    MpcConfig c = cfg;
    c.horizon   = n;
    const double err = (mpc_gain(m, c) - k_are).cwiseAbs().maxCoeff();
    EXPECT_LT(err, prev) << n;
    prev = err;
  }
  EXPECT_LT(prev, 1e-3);
}
