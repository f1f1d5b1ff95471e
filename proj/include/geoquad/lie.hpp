#pragma once

// SO(3) and SE2(3) kernel.
//
// SE2(3) element (extended pose), 5x5 embedding:
//   [ R  v  p ]
//   [ 0  1  0 ]
//   [ 0  0  1 ]
//
// Tangent ordering is (xi_theta, xi_v, xi_p); hat() places xi_v in column 4 and
// xi_p in column 5.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "geoquad/errors.hpp"

namespace geoquad {

using Vec3 = Eigen::Vector3d;
using Vec4 = Eigen::Vector4d;
using Vec9 = Eigen::Matrix<double, 9, 1>;
using Mat3 = Eigen::Matrix3d;
using Mat5 = Eigen::Matrix<double, 5, 5>;
using VecX = Eigen::VectorXd;
using MatX = Eigen::MatrixXd;

/// Below this angle the exp coefficients switch to their Taylor expansions.
inline constexpr double kSmallAngle = 1e-6;
/// Threshold for the third-order coefficients (theta - sin theta)/theta^3 and the
/// J_l^{-1} coefficient, whose closed forms cancel catastrophically well above 1e-6.
inline constexpr double kSmallAngleCubic = 1e-3;
/// log_se23 refuses rotations whose angle is within this distance of pi.
inline constexpr double kLogSingularityMargin = 1e-6;
/// Orthonormality residual above which a DCM is re-projected onto SO(3).
inline constexpr double kOrthoTolerance = 1e-9;

inline Mat3 skew(const Vec3 & w)
{
  Mat3 s;
  // clang-format off
  s <<  0.0,  -w.z(),  w.y(),
        w.z(),  0.0,  -w.x(),
       -w.y(),  w.x(),  0.0;
  // clang-format on
  return s;
}

/// Inverse of skew(); reads the lower-triangular entries.
inline Vec3 vee_so3(const Mat3 & m) { return Vec3(m(2, 1), m(0, 2), m(1, 0)); }

/// max |m^T m - I|, together with |det m - 1|.
inline double orthonormality_residual(const Mat3 & m)
{
  const double ortho = (m.transpose() * m - Mat3::Identity()).cwiseAbs().maxCoeff();
  return std::max(ortho, std::abs(m.determinant() - 1.0));
}

/// Nearest rotation in the Frobenius sense (polar factor).
inline Mat3 project_to_so3(const Mat3 & m)
{
  Eigen::JacobiSVD<Mat3> svd(m, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Mat3 d = Mat3::Identity();
  d(2, 2) = (svd.matrixU() * svd.matrixV().transpose()).determinant() < 0.0 ? -1.0 : 1.0;
  return svd.matrixU() * d * svd.matrixV().transpose();
}

/// Direction cosine matrix on SO(3). Always orthonormal to kOrthoTolerance.
class Rotation
{
public:
  Rotation() : m_(Mat3::Identity()) {}

  /// Accepts a matrix that is a rotation up to drift; drift above kOrthoTolerance is
  /// removed by polar projection. Grossly non-orthogonal input (residual > 1e-3) or a
  /// reflection throws.
  explicit Rotation(const Mat3 & m) : m_(m)
  {
    if (!m.allFinite()) { throw InvalidArgument("Rotation: non-finite entries"); }
    const double r = orthonormality_residual(m);
    if (r > 1e-3 || m.determinant() <= 0.0) {
      throw InvalidArgument("Rotation: matrix is not a rotation (residual " + std::to_string(r) + ")");
    }
    if (r > kOrthoTolerance) { m_ = project_to_so3(m); }
  }

  static Rotation identity() { return Rotation(); }

  const Mat3 & matrix() const { return m_; }

  Rotation inverse() const
  {
    Rotation r;
    r.m_ = m_.transpose();
    return r;
  }

  Rotation operator*(const Rotation & o) const { return Rotation(Mat3(m_ * o.m_)); }

  Vec3 operator*(const Vec3 & v) const { return m_ * v; }

  /// Rotation angle in [0, pi].
  double angle() const
  {
    const double s = 0.5 * vee_so3(m_ - m_.transpose()).norm();
    const double c = 0.5 * (m_.trace() - 1.0);
    return std::atan2(s, c);
  }

  /// ZYX Euler angles (yaw, pitch, roll) in radians.
  Vec3 yaw_pitch_roll() const
  {
    const double pitch = std::asin(std::clamp(-m_(2, 0), -1.0, 1.0));
    const double yaw   = std::atan2(m_(1, 0), m_(0, 0));
    const double roll  = std::atan2(m_(2, 1), m_(2, 2));
    return Vec3(yaw, pitch, roll);
  }

private:
  Mat3 m_;
};

inline Rotation rot_z(double angle)
{
  Mat3 m;
  m << std::cos(angle), -std::sin(angle), 0.0, std::sin(angle), std::cos(angle), 0.0, 0.0, 0.0, 1.0;
  return Rotation(m);
}

/// Element of se2(3) in vector form.
struct TangentVector
{
  Vec3 theta = Vec3::Zero();
  Vec3 v     = Vec3::Zero();
  Vec3 p     = Vec3::Zero();

  static TangentVector zero() { return {}; }

  static TangentVector from_vector(const Vec9 & x)
  {
    return {x.segment<3>(0), x.segment<3>(3), x.segment<3>(6)};
  }

  Vec9 vector() const
  {
    Vec9 x;
    x << theta, v, p;
    return x;
  }
};

/// Element of SE2(3): attitude, velocity, position.
struct ExtendedPose
{
  Rotation rot;
  Vec3 vel = Vec3::Zero();
  Vec3 pos = Vec3::Zero();

  static ExtendedPose identity() { return {}; }

  Mat5 matrix() const
  {
    Mat5 m = Mat5::Identity();
    m.topLeftCorner<3, 3>() = rot.matrix();
    m.block<3, 1>(0, 3)     = vel;
    m.block<3, 1>(0, 4)     = pos;
    return m;
  }

  static ExtendedPose from_matrix(const Mat5 & m)
  {
    const Eigen::Matrix<double, 2, 5> bottom = m.bottomRows<2>();
    Eigen::Matrix<double, 2, 5> expected     = Eigen::Matrix<double, 2, 5>::Zero();
    expected(0, 3)                           = 1.0;
    expected(1, 4)                           = 1.0;
    if ((bottom - expected).cwiseAbs().maxCoeff() > 1e-12) {
      throw InvalidArgument("ExtendedPose: bottom rows are not [0 I2]");
    }
    return {Rotation(Mat3(m.topLeftCorner<3, 3>())), m.block<3, 1>(0, 3), m.block<3, 1>(0, 4)};
  }

  ExtendedPose operator*(const ExtendedPose & o) const
  {
    return {rot * o.rot, rot.matrix() * o.vel + vel, rot.matrix() * o.pos + pos};
  }

  ExtendedPose inverse() const
  {
    const Mat3 rt = rot.matrix().transpose();
    return {rot.inverse(), -rt * vel, -rt * pos};
  }
};

inline Mat5 hat(const TangentVector & xi)
{
  Mat5 m                  = Mat5::Zero();
  m.topLeftCorner<3, 3>() = skew(xi.theta);
  m.block<3, 1>(0, 3)     = xi.v;
  m.block<3, 1>(0, 4)     = xi.p;
  return m;
}

/// Throws InvalidArgument if `m` is not in se2(3): nonzero bottom rows or a
/// non-antisymmetric top-left block (tolerance 1e-12).
inline TangentVector vee(const Mat5 & m)
{
  constexpr double tol = 1e-12;
  if (m.bottomRows<2>().cwiseAbs().maxCoeff() > tol) {
    throw InvalidArgument("vee: bottom two rows of an se2(3) element must be zero");
  }
  const Mat3 w = m.topLeftCorner<3, 3>();
  if ((w + w.transpose()).cwiseAbs().maxCoeff() > tol) {
    throw InvalidArgument("vee: rotational block is not skew-symmetric");
  }
  return {vee_so3(w), m.block<3, 1>(0, 3), m.block<3, 1>(0, 4)};
}

namespace detail {

// sin(t)/t
inline double sinc(double t) { return t < kSmallAngle ? 1.0 - t * t / 6.0 : std::sin(t) / t; }

// (1 - cos t)/t^2, half-angle form avoids cancellation
inline double one_minus_cos_over_sq(double t)
{
  if (t < kSmallAngle) { return 0.5 - t * t / 24.0; }
  const double s = std::sin(0.5 * t) / t;
  return 2.0 * s * s;
}

// (t - sin t)/t^3
inline double t_minus_sin_over_cube(double t)
{
  if (t < kSmallAngleCubic) { return 1.0 / 6.0 - t * t / 120.0; }
  return (t - std::sin(t)) / (t * t * t);
}

// (1/t^2) (1 - t sin t / (2 (1 - cos t))), the phi^2 coefficient of J_l^{-1}
inline double jl_inv_coeff(double t)
{
  if (t < kSmallAngleCubic) { return 1.0 / 12.0 + t * t / 720.0; }
  const double half = 0.5 * t;
  return (1.0 - half * std::cos(half) / std::sin(half)) / (t * t);
}

}  // namespace detail

inline Rotation exp_so3(const Vec3 & phi)
{
  const double t = phi.norm();
  const Mat3 k   = skew(phi);
  return Rotation(Mat3(Mat3::Identity() + detail::sinc(t) * k + detail::one_minus_cos_over_sq(t) * k * k));
}

/// Rotation vector of R, valid over the full range [0, pi] (axis sign at exactly pi is arbitrary).
inline Vec3 log_so3(const Rotation & rot)
{
  const Mat3 & r = rot.matrix();
  const Vec3 w   = vee_so3(r - r.transpose());  // 2 sin(t) * axis
  const double t = rot.angle();
  if (t < kSmallAngle) { return (0.5 + t * t / 12.0) * w; }
  if (t < std::numbers::pi - 1e-3) { return (0.5 * t / std::sin(t)) * w; }

  // Near pi the antisymmetric part vanishes; recover the axis from the symmetric part.
  const Mat3 s = 0.5 * (r + r.transpose()) - std::cos(t) * Mat3::Identity();  // (1-cos t) n n^T
  Eigen::Index i;
  s.diagonal().maxCoeff(&i);
  Vec3 n = s.col(i) / std::sqrt(s(i, i));
  n.normalize();
  if (n.dot(w) < 0.0) { n = -n; }
  return t * n;
}

/// Left Jacobian of SO(3): J_l(phi) = I + (1-cos t)/t^2 phi^ + (t-sin t)/t^3 phi^^.
inline Mat3 left_jacobian_so3(const Vec3 & phi)
{
  const double t = phi.norm();
  const Mat3 k   = skew(phi);
  return Mat3::Identity() + detail::one_minus_cos_over_sq(t) * k + detail::t_minus_sin_over_cube(t) * k * k;
}

inline Mat3 left_jacobian_inv_so3(const Vec3 & phi)
{
  const double t = phi.norm();
  const Mat3 k   = skew(phi);
  return Mat3::Identity() - 0.5 * k + detail::jl_inv_coeff(t) * k * k;
}

inline ExtendedPose exp_se23(const TangentVector & xi)
{
  const Mat3 jl = left_jacobian_so3(xi.theta);
  return {exp_so3(xi.theta), jl * xi.v, jl * xi.p};
}

/// Throws LogSingularity when the rotation angle is within kLogSingularityMargin of pi.
inline TangentVector log_se23(const ExtendedPose & x)
{
  const double angle = x.rot.angle();
  if (angle >= std::numbers::pi - kLogSingularityMargin) {
    throw LogSingularity("log_se23: rotation angle " + std::to_string(angle) + " rad is at the pi singularity");
  }
  const Vec3 phi    = log_so3(x.rot);
  const Mat3 jl_inv = left_jacobian_inv_so3(phi);
  return {phi, jl_inv * x.vel, jl_inv * x.pos};
}

}  // namespace geoquad
