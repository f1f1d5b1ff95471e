#include <gtest/gtest.h>

#include <numbers>

#include "geoquad/lie.hpp"
#include "test_util.hpp"

using namespace geoquad;
using geoquad::testing::Rng;

namespace {

TangentVector random_tangent(Rng & rng, double max_angle)
{
  TangentVector xi;
  xi.theta = rng.rotation_vector(0.0, max_angle);
  xi.v     = Vec3(rng.uniform(-5, 5), rng.uniform(-5, 5), rng.uniform(-5, 5));
  xi.p     = Vec3(rng.uniform(-5, 5), rng.uniform(-5, 5), rng.uniform(-5, 5));
  return xi;
}

}  // namespace

TEST(Hat, ZeroAndRotationBlock)
{
  EXPECT_TRUE(hat(TangentVector::zero()).isZero(0.0));
  TangentVector xi;
  xi.theta = Vec3(0, 0, 1);
  Mat5 expected          = Mat5::Zero();
  expected(0, 1)         = -1.0;
  expected(1, 0)         = 1.0;
  EXPECT_TRUE(hat(xi).isApprox(expected));
}

TEST(Hat, VeeRoundtrip)
{
  Vec9 x;
  x << 1, 2, 3, 4, 5, 6, 7, 8, 9;
  const TangentVector xi = TangentVector::from_vector(x);
  EXPECT_EQ(vee(hat(xi)).vector(), x);
  EXPECT_TRUE(vee(Mat5::Zero()).vector().isZero(0.0));
  const Mat5 m = hat(xi);
  EXPECT_EQ(m(3, 3), 0.0);
  EXPECT_EQ(Vec3(m.block<3, 1>(0, 3)), Vec3(4, 5, 6));
  EXPECT_EQ(Vec3(m.block<3, 1>(0, 4)), Vec3(7, 8, 9));
}

TEST(Hat, VeeRejectsNonAlgebraElement)
{
  Mat5 m = hat(TangentVector::from_vector(Vec9::LinSpaced(1, 9)));
  m(0, 1) += 1e-3;  // symmetric perturbation of the skew block
  m(1, 0) += 1e-3;
  EXPECT_THROW(vee(m), InvalidArgument);
  Mat5 bottom = Mat5::Zero();
  bottom(4, 4) = 1.0;
  EXPECT_THROW(vee(bottom), InvalidArgument);
}

TEST(ExpSo3, IdentityAndQuarterTurnMatchSeries)
{
  EXPECT_TRUE(exp_so3(Vec3::Zero()).matrix().isApprox(Mat3::Identity()));
  const Vec3 phi(0, 0, std::numbers::pi / 2);
  const MatX oracle = geoquad::testing::series_exp(skew(phi));
  Mat3 expected;
  expected << 0, -1, 0, 1, 0, 0, 0, 0, 1;
  EXPECT_LT((oracle - expected).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_LT((exp_so3(phi).matrix() - oracle).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(ExpSo3, LogRoundtripRandom)
{
  Rng rng(1);
  for (int i = 0; i < 1000; ++i) {
    const Vec3 phi = rng.rotation_vector(1e-9, std::numbers::pi - 0.01);
    EXPECT_LT((log_so3(exp_so3(phi)) - phi).cwiseAbs().maxCoeff(), 1e-9) << phi.transpose();
  }
}

TEST(ExpSo3, SmallAngleBranchesAreContinuous)
{
  const Vec3 axis = Vec3(1, -2, 0.5).normalized();
  for (double t : {1e-12, 1e-8, 1e-6 * 0.999, 1e-6 * 1.001, 1e-4, 1e-3 * 0.999, 1e-3 * 1.001, 1e-2}) {
    const Vec3 phi   = t * axis;
    const MatX exact = geoquad::testing::series_exp(skew(phi));
    EXPECT_LT((exp_so3(phi).matrix() - exact).cwiseAbs().maxCoeff(), 1e-15) << t;
    EXPECT_LT((log_so3(exp_so3(phi)) - phi).norm(), 1e-15 + 1e-12 * t) << t;
    EXPECT_LT((left_jacobian_so3(phi) * left_jacobian_inv_so3(phi) - Mat3::Identity()).cwiseAbs().maxCoeff(), 1e-14)
        << t;
  }
}

TEST(LogSo3, NearPi)
{
  const Vec3 axis = Vec3(0.3, -0.4, 0.866).normalized();
  for (double delta : {1e-2, 1e-4, 1e-6}) {
    const Vec3 phi = (std::numbers::pi - delta) * axis;
    EXPECT_LT((log_so3(exp_so3(phi)) - phi).norm(), 1e-7) << delta;
  }
}

TEST(ExpSe23, ZeroAndTranslationOnly)
{
  const ExtendedPose id = exp_se23(TangentVector::zero());
  EXPECT_TRUE(id.matrix().isApprox(Mat5::Identity()));
  TangentVector xi;
  xi.v = Vec3(1, 2, 3);
  xi.p = Vec3(4, 5, 6);
  const ExtendedPose x = exp_se23(xi);
  EXPECT_TRUE(x.rot.matrix().isApprox(Mat3::Identity()));
  EXPECT_EQ(x.vel, Vec3(1, 2, 3));
  EXPECT_EQ(x.pos, Vec3(4, 5, 6));
}

TEST(ExpSe23, MatchesDenseMatrixExponential)
{
  Rng rng(2);
  for (int i = 0; i < 1000; ++i) {
    const TangentVector xi = random_tangent(rng, std::numbers::pi - 0.01);
    const MatX oracle      = geoquad::testing::dense_exp(hat(xi));
    EXPECT_LT((exp_se23(xi).matrix() - oracle).cwiseAbs().maxCoeff(), 1e-9);
  }
}

TEST(LogSe23, RoundtripAndIdentity)
{
  EXPECT_TRUE(log_se23(ExtendedPose::identity()).vector().isZero(0.0));
  Rng rng(3);
  for (int i = 0; i < 1000; ++i) {
    const TangentVector xi = random_tangent(rng, std::numbers::pi - 0.01);
    EXPECT_LT((log_se23(exp_se23(xi)).vector() - xi.vector()).cwiseAbs().maxCoeff(), 1e-9);
  }
}

TEST(LogSe23, SingularityAtPi)
{
  TangentVector xi;
  xi.theta = (std::numbers::pi - 1e-8) * Vec3::UnitX();
  EXPECT_THROW(log_se23(exp_se23(xi)), LogSingularity);
  xi.theta = (std::numbers::pi - 1e-3) * Vec3::UnitX();
  EXPECT_NO_THROW(log_se23(exp_se23(xi)));
}

TEST(Group, ClosureInverseAndAssociativity)
{
  Rng rng(4);
  for (int i = 0; i < 200; ++i) {
    const ExtendedPose a = exp_se23(random_tangent(rng, 3.0));
    const ExtendedPose b = exp_se23(random_tangent(rng, 3.0));
    const ExtendedPose c = exp_se23(random_tangent(rng, 3.0));
    const ExtendedPose ab = a * b;
    EXPECT_LT(orthonormality_residual(ab.rot.matrix()), 1e-12);
    EXPECT_GT(ab.rot.matrix().determinant(), 0.0);
    EXPECT_LT((ab.matrix() - a.matrix() * b.matrix()).cwiseAbs().maxCoeff(), 1e-12);
    EXPECT_LT((((a * b) * c).matrix() - (a * (b * c)).matrix()).cwiseAbs().maxCoeff(), 1e-10);
    EXPECT_LT(((a * a.inverse()).matrix() - Mat5::Identity()).cwiseAbs().maxCoeff(), 1e-12);
  }
}

TEST(Rotation, RejectsInvalidAndProjectsDrift)
{
  EXPECT_THROW(Rotation(Mat3(2.0 * Mat3::Identity())), InvalidArgument);
  EXPECT_THROW(Rotation(Mat3(-Mat3::Identity())), InvalidArgument);
  Mat3 drift = exp_so3(Vec3(0.1, 0.2, 0.3)).matrix();
  drift(0, 0) += 1e-6;
  const Rotation r(drift);
  EXPECT_LT(orthonormality_residual(r.matrix()), 1e-12);
  EXPECT_NEAR(r.angle(), Vec3(0.1, 0.2, 0.3).norm(), 1e-5);
}

TEST(Rotation, YawPitchRoll)
{
  const Rotation r = rot_z(0.4) * exp_so3(Vec3(0, 0.2, 0)) * exp_so3(Vec3(-0.1, 0, 0));
  EXPECT_LT((r.yaw_pitch_roll() - Vec3(0.4, 0.2, -0.1)).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(LeftJacobian, MatchesIntegralDefinition)
{
  // J_l(phi) = integral_0^1 exp(s phi^) ds, by composite Simpson.
  const Vec3 phi(0.7, -1.1, 0.4);
  const int n = 2000;
  MatX acc    = MatX::Zero(3, 3);
  for (int i = 0; i <= n; ++i) {
    const double s = static_cast<double>(i) / n;
    const double w = (i == 0 || i == n) ? 1.0 : (i % 2 == 1 ? 4.0 : 2.0);
    acc += w * geoquad::testing::dense_exp(skew(s * phi));
  }
  acc /= 3.0 * n;
  EXPECT_LT((left_jacobian_so3(phi) - acc).cwiseAbs().maxCoeff(), 1e-12);
}
