#pragma once

#include <string>
#include <vector>

#include "ppd/se3.hpp"

namespace ppd {

using JointConfig = Eigen::VectorXd;

/// One revolute joint: a fixed transform from the parent link frame followed
/// by a rotation of q about `axis` (unit vector in the post-fixed frame).
struct JointDescriptor {
  Pose fixed;
  Vector3d axis = Vector3d::UnitZ();
  double q_min = 0.0;
  double q_max = 0.0;
};

/// Collision sphere attached to a link frame (or to the TCP frame when
/// `tcp_frame` is set; such spheres ride on the last link).
struct LinkSphere {
  int link = 0;
  bool tcp_frame = false;
  Vector3d center = Vector3d::Zero();
  double radius = 0.0;
};

/// All link frames plus the TCP for one configuration.
struct ChainState {
  std::vector<Pose> link_frames;  // frame after each joint's rotation
  std::vector<Vector3d> joint_axes_world;
  std::vector<Vector3d> joint_origins_world;
  Pose tcp;
};

/// World-frame sphere produced by posing the chain's collision geometry.
struct PosedSphere {
  Vector3d center;
  double radius;
  int link;  // link index for Jacobian purposes (tcp spheres map to n-1)
};

/// Serial chain of revolute joints with sphere collision geometry and a TCP
/// offset.  Immutable after construction; all queries are const and
/// thread-safe.
class KinematicChain {
 public:
  KinematicChain(std::string name, std::vector<JointDescriptor> joints,
                 Pose tcp_offset, std::vector<LinkSphere> spheres);

  /// Load from the JSON chain description format (see docs/file_formats.md).
  static KinematicChain load(const std::string& path);
  void save(const std::string& path) const;

  int joint_count() const { return static_cast<int>(joints_.size()); }
  const std::string& name() const { return name_; }
  const std::vector<JointDescriptor>& joints() const { return joints_; }
  const Pose& tcp_offset() const { return tcp_offset_; }
  const std::vector<LinkSphere>& spheres() const { return spheres_; }

  const JointConfig& lower_limits() const { return q_min_; }
  const JointConfig& upper_limits() const { return q_max_; }
  bool inside_limits(const JointConfig& q, double tol = 0.0) const;
  JointConfig clamp_to_limits(const JointConfig& q) const;

  /// Named configurations bundled with the chain file ("ready", ...).
  const std::vector<std::pair<std::string, JointConfig>>& named_configs() const {
    return named_configs_;
  }
  JointConfig named_config(const std::string& name) const;

  ChainState compute(const JointConfig& q) const;

  /// TCP pose in world frame.
  Pose forward_kinematics(const JointConfig& q) const;

  /// 6 x n spatial Jacobian mapping joint velocities to the TCP twist
  /// (world-aligned, TCP-point referenced; rows 1-3 angular, 4-6
  /// translational).
  Eigen::MatrixXd spatial_jacobian(const JointConfig& q) const;
  Eigen::MatrixXd spatial_jacobian(const ChainState& state) const;

  /// 3 x n Jacobian of a world point rigidly attached to `link`.
  Eigen::MatrixXd point_jacobian(const ChainState& state, int link,
                                 const Vector3d& world_point) const;

  /// Pose all collision spheres at configuration `state`.
  std::vector<PosedSphere> posed_spheres(const ChainState& state) const;

  void set_named_config(const std::string& name, const JointConfig& q);

 private:
  std::string name_;
  std::vector<JointDescriptor> joints_;
  Pose tcp_offset_;
  std::vector<LinkSphere> spheres_;
  JointConfig q_min_, q_max_;
  std::vector<std::pair<std::string, JointConfig>> named_configs_;
};

}  // namespace ppd
