#pragma once

// Feedforward generation from a position/yaw trajectory by differential flatness.

#include <Eigen/Dense>

#include <cmath>
#include <numbers>
#include <string>
#include <vector>

#include "geoquad/dynamics.hpp"
#include "geoquad/errors.hpp"
#include "geoquad/lie.hpp"

namespace geoquad {

enum class TrajectoryKind { circle, hover, waypoint_polynomial };
enum class YawMode { fixed, tangent };

struct TrajectorySpec
{
  TrajectoryKind kind = TrajectoryKind::circle;
  double radius       = 1.0;   // m
  double period       = 30.0;  // s
  Vec3 center         = Vec3::Zero();
  double altitude     = 1.0;   // m, added to center.z
  YawMode yaw_mode    = YawMode::fixed;
  double yaw          = 0.0;   // rad, fixed yaw (and fallback for tangent yaw at rest)
  double duration     = 30.0;  // s
  std::vector<Vec3> waypoints;  // waypoint_polynomial only

  void validate() const
  {
    if (!(period > 0.0)) { throw InvalidArgument("TrajectorySpec: period must be > 0"); }
    if (!(radius >= 0.0)) { throw InvalidArgument("TrajectorySpec: radius must be >= 0"); }
    if (!(duration > 0.0)) { throw InvalidArgument("TrajectorySpec: duration must be > 0"); }
    if (kind == TrajectoryKind::waypoint_polynomial && waypoints.size() < 2) {
      throw InvalidArgument("TrajectorySpec: waypoint_polynomial needs at least 2 waypoints");
    }
  }
};

struct ReferencePoint
{
  double t = 0.0;
  Vec3 p   = Vec3::Zero();
  Vec3 v   = Vec3::Zero();
  Vec3 a   = Vec3::Zero();
  Rotation rot;
  double thrust = 0.0;
  Vec3 omega    = Vec3::Zero();  // reference frame

  ExtendedPose pose() const { return {rot, v, p}; }
};

using ReferenceTable = std::vector<ReferencePoint>;

/// Position and its first three time derivatives.
struct Kinematics
{
  Vec3 p = Vec3::Zero();
  Vec3 v = Vec3::Zero();
  Vec3 a = Vec3::Zero();
  Vec3 j = Vec3::Zero();
};

/// Analytic position derivatives. Polynomial segments extrapolate past the ends.
inline Kinematics trajectory_kinematics(const TrajectorySpec & spec, double t)
{
  Kinematics k;
  switch (spec.kind) {
    case TrajectoryKind::hover:
      k.p = spec.center + Vec3(0.0, 0.0, spec.altitude);
      break;
    case TrajectoryKind::circle: {
      const double w  = 2.0 * std::numbers::pi / spec.period;
      const double r  = spec.radius;
      const double c  = std::cos(w * t);
      const double s  = std::sin(w * t);
      k.p = spec.center + Vec3(r * c, r * s, spec.altitude);
      k.v = r * w * Vec3(-s, c, 0.0);
      k.a = -r * w * w * Vec3(c, s, 0.0);
      k.j = r * w * w * w * Vec3(s, -c, 0.0);
      break;
    }
    case TrajectoryKind::waypoint_polynomial: {
      // Rest-to-rest quintic (minimum-jerk) blend between consecutive waypoints.
      const auto & wp          = spec.waypoints;
      const auto segments      = static_cast<double>(wp.size() - 1);
      const double seg_time    = spec.duration / segments;
      const double idx         = std::clamp(std::floor(t / seg_time), 0.0, segments - 1.0);
      const auto i             = static_cast<std::size_t>(idx);
      const double tau         = (t - idx * seg_time) / seg_time;
      const Vec3 delta         = wp[i + 1] - wp[i];
      const double t2 = tau * tau, t3 = t2 * tau, t4 = t3 * tau, t5 = t4 * tau;
      const double s0 = 10.0 * t3 - 15.0 * t4 + 6.0 * t5;
      const double s1 = (30.0 * t2 - 60.0 * t3 + 30.0 * t4) / seg_time;
      const double s2 = (60.0 * tau - 180.0 * t2 + 120.0 * t3) / (seg_time * seg_time);
      const double s3 = (60.0 - 360.0 * tau + 360.0 * t2) / (seg_time * seg_time * seg_time);
      k.p = wp[i] + s0 * delta;
      k.v = s1 * delta;
      k.a = s2 * delta;
      k.j = s3 * delta;
      break;
    }
  }
  return k;
}

/// Yaw angle and its rate.
inline std::pair<double, double> yaw_profile(const TrajectorySpec & spec, const Kinematics & k)
{
  if (spec.yaw_mode == YawMode::tangent) {
    const double sp2 = k.v.x() * k.v.x() + k.v.y() * k.v.y();
    if (sp2 > 1e-12) {
      return {std::atan2(k.v.y(), k.v.x()), (k.v.x() * k.a.y() - k.v.y() * k.a.x()) / sp2};
    }
  }
  return {spec.yaw, 0.0};
}

/// Attitude whose body z-axis is along `thrust_dir` (unit) with heading `yaw`.
inline Rotation attitude_from_thrust_direction(const Vec3 & thrust_dir, double yaw)
{
  const Vec3 x_c(std::cos(yaw), std::sin(yaw), 0.0);
  const Vec3 c  = thrust_dir.cross(x_c);
  const double cn = c.norm();
  if (cn < 1e-6) { throw FeasibilityError("thrust direction is parallel to the heading vector"); }
  const Vec3 y = c / cn;
  const Vec3 x = y.cross(thrust_dir);
  Mat3 r;
  r << x, y, thrust_dir;
  return Rotation(r);
}

/// Specific-force vector a + g z_w, rejecting magnitudes below 0.1 g.
inline Vec3 checked_specific_force(const Vec3 & a, double g)
{
  const Vec3 n = a + g * kUnitZ;
  if (n.norm() < 0.1 * g) {
    throw FeasibilityError("reference specific force " + std::to_string(n.norm()) +
                           " m/s^2 is below 0.1 g; thrust direction undefined");
  }
  return n;
}

namespace detail {

inline Rotation reference_attitude(const TrajectorySpec & spec, double t, double g)
{
  const Kinematics k = trajectory_kinematics(spec, t);
  const Vec3 n       = checked_specific_force(k.a, g);
  return attitude_from_thrust_direction(n.normalized(), yaw_profile(spec, k).first);
}

}  // namespace detail

/// Samples the full feedforward tuple at time t in [0, duration].
inline ReferencePoint sample(const TrajectorySpec & spec, double t, const QuadParams & params)
{
  if (t < -1e-12 || t > spec.duration + 1e-9) {
    throw InvalidArgument("sample: t = " + std::to_string(t) + " outside [0, duration]");
  }
  const Kinematics k = trajectory_kinematics(spec, t);
  const Vec3 n       = checked_specific_force(k.a, params.g);
  const double nn    = n.norm();
  const Vec3 z       = n / nn;
  const auto [yaw, yaw_rate] = yaw_profile(spec, k);

  ReferencePoint ref;
  ref.t      = t;
  ref.p      = k.p;
  ref.v      = k.v;
  ref.a      = k.a;
  ref.thrust = params.mass * nn;
  ref.rot    = attitude_from_thrust_direction(z, yaw);

  Mat3 r_dot;
  if (spec.kind == TrajectoryKind::waypoint_polynomial) {
    constexpr double h = 1e-5;
    r_dot = (detail::reference_attitude(spec, t + h, params.g).matrix() -
             detail::reference_attitude(spec, t - h, params.g).matrix()) /
            (2.0 * h);
  } else {
    // Differentiate the flatness construction through the jerk.
    const Vec3 z_dot  = (Mat3::Identity() - z * z.transpose()) * k.j / nn;
    const Vec3 x_c(std::cos(yaw), std::sin(yaw), 0.0);
    const Vec3 xc_dot = yaw_rate * Vec3(-std::sin(yaw), std::cos(yaw), 0.0);
    const Vec3 c      = z.cross(x_c);
    const Vec3 c_dot  = z_dot.cross(x_c) + z.cross(xc_dot);
    const Vec3 y      = c.normalized();
    const Vec3 y_dot  = (Mat3::Identity() - y * y.transpose()) * c_dot / c.norm();
    const Vec3 x_dot  = y_dot.cross(z) + y.cross(z_dot);
    r_dot << x_dot, y_dot, z_dot;
  }
  const Mat3 w = ref.rot.matrix().transpose() * r_dot;
  ref.omega    = vee_so3(0.5 * (w - w.transpose()));
  return ref;
}

/// Samples k*dt for k = 0..steps (steps + 1 points), the last clamped to duration.
inline ReferenceTable build_reference_table(const TrajectorySpec & spec, const QuadParams & params, double dt,
                                            std::size_t steps)
{
  spec.validate();
  if (!(dt > 0.0)) { throw InvalidArgument("build_reference_table: dt must be > 0"); }
  ReferenceTable table;
  table.reserve(steps + 1);
  for (std::size_t k = 0; k <= steps; ++k) {
    table.push_back(sample(spec, std::min(static_cast<double>(k) * dt, spec.duration), params));
  }
  return table;
}

}  // namespace geoquad
