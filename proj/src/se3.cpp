#include "ppd/se3.hpp"

#include <Eigen/Geometry>
#include <cmath>

namespace ppd {

Matrix3d skew(const Vector3d& v) {
  Matrix3d s;
  // clang-format off
  s <<     0, -v.z(),  v.y(),
       v.z(),      0, -v.x(),
      -v.y(),  v.x(),      0;
  // clang-format on
  return s;
}

Matrix3d so3_exp(const Vector3d& w) {
  const double angle = w.norm();
  if (angle < 1e-8) {
    // second-order series keeps the result orthonormal to ~1e-16 here
    Matrix3d s = skew(w);
    return Matrix3d::Identity() + s + 0.5 * (s * s);
  }
  const Vector3d axis = w / angle;
  return Eigen::AngleAxisd(angle, axis).toRotationMatrix();
}

Vector3d so3_log(const Matrix3d& r, bool* degenerate) {
  if (degenerate) *degenerate = false;
  // Quaternion route: stable for all angles including pi, where the direct
  // (R - R^T) extraction loses the axis.
  Eigen::Quaterniond q(r);
  q.normalize();
  if (q.w() < 0) q.coeffs() *= -1.0;  // angle in [0, pi]
  const double sin_half = q.vec().norm();
  const double cos_half = q.w();
  if (sin_half < 1e-12) return 2.0 * q.vec();  // angle ~ 0
  const double angle = 2.0 * std::atan2(sin_half, cos_half);
  if (degenerate && angle > M_PI - 1e-7) *degenerate = true;
  return (angle / sin_half) * q.vec();
}

double Pose::orthonormality_error() const {
  const Matrix3d e = rotation.transpose() * rotation - Matrix3d::Identity();
  return e.cwiseAbs().maxCoeff() + std::abs(rotation.determinant() - 1.0);
}

void Pose::renormalize() {
  Eigen::Quaterniond q(rotation);
  q.normalize();
  rotation = q.toRotationMatrix();
}

Pose exp_twist(const Twist& xi, double dt) {
  return Pose{so3_exp(xi.angular * dt), xi.translational * dt};
}

Pose apply_displacement(const Pose& d, const Pose& pose) {
  return Pose{d.rotation * pose.rotation, pose.translation + d.translation};
}

Pose apply_twist(const Pose& pose, const Twist& xi, double dt) {
  return apply_displacement(exp_twist(xi, dt), pose);
}

Twist pose_error(const Pose& current, const Pose& target, bool* degenerate) {
  Twist e;
  e.angular = so3_log(target.rotation * current.rotation.transpose(), degenerate);
  e.translational = target.translation - current.translation;
  return e;
}

const Eigen::Matrix<double, 3, 9>& pose_encoding_points() {
  static const Eigen::Matrix<double, 3, 9> pts = [] {
    Eigen::Matrix<double, 3, 9> p;
    int col = 0;
    for (double x : {-1.0, 1.0})
      for (double y : {-1.0, 1.0})
        for (double z : {-1.0, 1.0}) p.col(col++) = Vector3d(x, y, z);
    p.col(8).setZero();
    return p;
  }();
  return pts;
}

Eigen::Matrix<double, 3, 9> encode_pose_points(const Pose& pose) {
  const auto& local = pose_encoding_points();
  Eigen::Matrix<double, 3, 9> out;
  for (int k = 0; k < 9; ++k) out.col(k) = pose.apply(local.col(k));
  return out;
}

double se3_distance(const Pose& a, const Pose& b, double lambda) {
  return so3_log(b.rotation * a.rotation.transpose()).norm() +
         lambda * (a.translation - b.translation).norm();
}

}  // namespace ppd
