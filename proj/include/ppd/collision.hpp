#pragma once

#include <ppd/chain.hpp>
#include <ppd/pointcloud.hpp>
#include <ppd/se3.hpp>

#include <Eigen/Core>
#include <memory>
#include <string>
#include <vector>

namespace ppd {

/// One world or robot-mounted obstacle. `pose` places the body's local frame
/// in the world; for bodies with `attached_link >= 0` it is expressed in that
/// link's frame instead and the body rides the robot (a held object). Attached
/// bodies collide against world-fixed bodies only, never against robot links.
struct CollisionBody {
  enum class Kind { sphere, capsule, box, cloud };

  Kind kind = Kind::sphere;
  std::string name;
  Pose pose;
  double radius = 0.0;                                  // sphere, capsule
  double half_length = 0.0;                             // capsule, axis = local z
  Eigen::Vector3d half_extents = Eigen::Vector3d::Zero();  // box
  std::shared_ptr<const PointCloud> cloud;              // cloud, local frame
  int attached_link = -1;                               // -1 = world-fixed

  static CollisionBody make_sphere(std::string name, const Eigen::Vector3d& center, double radius);
  static CollisionBody make_capsule(std::string name, const Pose& pose, double radius,
                                    double half_length);
  static CollisionBody make_box(std::string name, const Pose& pose,
                                const Eigen::Vector3d& half_extents);
  static CollisionBody make_cloud(std::string name, std::shared_ptr<const PointCloud> cloud,
                                  const Pose& pose = Pose::identity());
};

using Environment = std::vector<CollisionBody>;

/// Closest feature of a body to a world query point. `normal` points from the
/// body toward the query; `distance` is negative inside solid bodies.
struct BodyDistance {
  double distance = 0.0;
  Eigen::Vector3d witness = Eigen::Vector3d::Zero();
  Eigen::Vector3d normal = Eigen::Vector3d::UnitZ();
};

/// Distance from `body` (placed at `body_pose`, already resolved to world) to
/// a world point.
BodyDistance body_point_distance(const CollisionBody& body, const Pose& body_pose,
                                 const Eigen::Vector3d& point);

/// A proximal (link, body) pair. `normal` points from the environment toward
/// the robot; `distance` is the signed separation (negative = penetrating).
struct Contact {
  int link = 0;
  Eigen::Vector3d robot_point = Eigen::Vector3d::Zero();
  Eigen::Vector3d env_point = Eigen::Vector3d::Zero();
  Eigen::Vector3d normal = Eigen::Vector3d::UnitZ();
  double distance = 0.0;
};

using ContactSet = std::vector<Contact>;

/// All (link, world body) pairs closer than `threshold`, one contact each (the
/// closest witness pair). Bodies attached to the robot are treated as robot
/// geometry: they pair against world bodies and report their attachment link.
ContactSet query_proximal_contacts(const KinematicChain& chain, const JointConfig& q,
                                   const Environment& environment, double threshold);

/// Contacts of one attached body alone, posed by `q`, against the
/// world-fixed bodies of `environment` (one per world body, the closest
/// witness pair). The robot's own spheres are not probed; use this when the
/// attached body's motion is governed by its own twist rather than by the
/// carrying arm's joint velocities.
ContactSet query_attached_body_contacts(const KinematicChain& chain, const JointConfig& q,
                                        const CollisionBody& attached,
                                        const Environment& environment, double threshold);

/// m x n matrix whose row j maps joint velocity to the approach rate of
/// contact j (the negative time derivative of its signed distance), so
/// rows * qdot <= 0 keeps every proximal distance non-decreasing to first
/// order.
Eigen::MatrixXd contact_jacobian(const KinematicChain& chain, const JointConfig& q,
                                 const ContactSet& contacts);

/// Global minimum signed distance over all (robot sphere | attached body,
/// world body) pairs.
double min_clearance(const KinematicChain& chain, const JointConfig& q,
                     const Environment& environment);

/// Environment file: json listing primitives; point clouds are stored next to
/// it and referenced by file name.
Environment load_environment(const std::string& path);
void save_environment(const Environment& environment, const std::string& path);

}  // namespace ppd
