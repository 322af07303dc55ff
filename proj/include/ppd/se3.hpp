#pragma once

#include <Eigen/Dense>
#include <array>

namespace ppd {

using Eigen::Matrix3d;
using Eigen::Vector3d;
using Vector6d = Eigen::Matrix<double, 6, 1>;
using Matrix6d = Eigen::Matrix<double, 6, 6>;

/// Spatial velocity of a frame, world-aligned and hand-point referenced:
/// `angular` is the angular velocity about world axes, `translational` is the
/// linear velocity of the frame origin (the TCP for hand twists) expressed in
/// world.  Stacked order is angular first, matching the weight-matrix indexing
/// used throughout (components 1-3 angular, 4-6 translational, 1-based).
struct Twist {
  Vector3d angular = Vector3d::Zero();
  Vector3d translational = Vector3d::Zero();

  Vector6d stacked() const {
    Vector6d v;
    v << angular, translational;
    return v;
  }
  static Twist from_stacked(const Vector6d& v) {
    return Twist{v.head<3>(), v.tail<3>()};
  }
  static Twist zero() { return Twist{}; }

  Twist operator*(double s) const { return Twist{angular * s, translational * s}; }
  Twist operator+(const Twist& o) const {
    return Twist{angular + o.angular, translational + o.translational};
  }
};

/// Rigid transform: world_point = rotation * local_point + translation.
struct Pose {
  Matrix3d rotation = Matrix3d::Identity();
  Vector3d translation = Vector3d::Zero();

  static Pose identity() { return Pose{}; }

  Pose compose(const Pose& other) const {
    return Pose{rotation * other.rotation,
                rotation * other.translation + translation};
  }
  Pose operator*(const Pose& other) const { return compose(other); }

  Pose inverse() const {
    Matrix3d rt = rotation.transpose();
    return Pose{rt, -(rt * translation)};
  }

  Vector3d apply(const Vector3d& p) const { return rotation * p + translation; }

  /// Largest deviation of R^T R from identity plus |det - 1|.
  double orthonormality_error() const;

  /// Snap the rotation back onto SO(3) (nearest orthonormal matrix).
  void renormalize();
};

Matrix3d skew(const Vector3d& v);

/// SO(3) exponential, small-angle branch below 1e-8 rad.
Matrix3d so3_exp(const Vector3d& w);

/// SO(3) log via quaternion extraction; stable through angle pi.
/// `degenerate` (optional) is set when the angle is within ~1e-7 of pi and the
/// axis was recovered from the symmetric part.
Vector3d so3_log(const Matrix3d& r, bool* degenerate = nullptr);

/// Displacement produced by holding twist `xi` for `dt` seconds: the frame
/// origin translates by v*dt while the orientation integrates exp([w]*dt).
/// Apply with `apply_twist` / `apply_displacement`.
Pose exp_twist(const Twist& xi, double dt);

/// Apply the displacement `d = exp_twist(xi, dt)` to a pose: rotation composes
/// on the left (world frame), translation adds at the frame origin.
Pose apply_displacement(const Pose& d, const Pose& pose);

/// One Euler step of the frame ODE  Rdot = [w] R,  pdot = v.
Pose apply_twist(const Pose& pose, const Twist& xi, double dt);

/// Twist error such that apply_displacement(exp_twist(err, 1), current)
/// equals target: angular part is the world-frame rotation log of
/// R_t * R_c^T, translational part is p_t - p_c.
Twist pose_error(const Pose& current, const Pose& target, bool* degenerate = nullptr);

/// Nine-point encoding of a pose: the eight corners of a 2 m cube centered on
/// the TCP plus the center itself, rigidly attached to the frame, world
/// coordinates.  Column k of the result is point k; the center is column 8.
Eigen::Matrix<double, 3, 9> encode_pose_points(const Pose& pose);

/// Canonical local-frame points behind encode_pose_points.
const Eigen::Matrix<double, 3, 9>& pose_encoding_points();

/// Half-width of the nine-point encoding cube, meters.
constexpr double pose_encoding_half_width() { return 1.0; }

/// Weighted SE(3) distance  |log R_ab| + lambda * |p_a - p_b|  used for
/// nearest-grasp queries. lambda defaults to 2 (1/m), the inverse of the
/// 1 m half-width of the nine-point cube.
double se3_distance(const Pose& a, const Pose& b, double lambda = 2.0);

}  // namespace ppd
