#pragma once

#include <array>
#include <optional>
#include <vector>

#include "ppd/chain.hpp"
#include "ppd/collision.hpp"
#include "ppd/qp.hpp"
#include "ppd/se3.hpp"

namespace ppd {

/// Where the placed object should end up.  Either a single pose, a discrete
/// set of alternatives (the closest one is chased), or a continuous family:
/// free yaw about world z, and/or free horizontal translation within a world
/// xy box.  `weights` is the diagonal of the 6x6 placing weight matrix,
/// angular components first; a zero entry makes that direction free.
struct PlacementTarget {
  Pose base;
  std::vector<Pose> candidates;  // empty = just `base`
  bool free_yaw = false;
  bool has_region = false;
  Eigen::Vector2d region_min = Eigen::Vector2d::Zero();  // world xy, has_region
  Eigen::Vector2d region_max = Eigen::Vector2d::Zero();
  Vector6d weights = Vector6d::Ones();

  static PlacementTarget single(const Pose& pose);
  static PlacementTarget discrete(std::vector<Pose> poses);
  PlacementTarget& with_free_yaw();
  PlacementTarget& with_region(const Eigen::Vector2d& lo, const Eigen::Vector2d& hi);

  /// Enforces the coupling between modes and weights: weights nonnegative,
  /// free yaw iff weights[2] = 0, region present iff weights[3] = weights[4] = 0.
  void validate() const;

  std::vector<Pose> candidate_poses() const;
};

/// Slot order of the six tracked configurations; it is also the block order
/// of the stacked decision vector [pick, place, pick approach, pick entry,
/// place approach, place entry, object twist].
enum ConfigSlot {
  kPickGrasp = 0,
  kPlaceGrasp = 1,
  kPickApproach = 2,
  kPickEntry = 3,
  kPlaceApproach = 4,
  kPlaceEntry = 5,
  kConfigSlots = 6,
};

struct PickPlaceConfigs {
  JointConfig pick, place, pick_approach, pick_entry, place_approach, place_entry;

  const JointConfig& slot(int i) const;
  JointConfig& slot(int i);
};

using ConfigContacts = std::array<ContactSet, kConfigSlots>;

/// Hand retreat along its own approach axis that defines the approach pose,
/// and the world-vertical rise from approach to entry pose.
constexpr double kApproachBack = 0.10;
constexpr double kEntryRise = 0.20;

/// Approach pose for a grasp: the hand backed off along its local z.
Pose approach_pose(const Pose& grasp);
/// Entry pose for an approach pose: same rotation, raised vertically.
Pose entry_pose(const Pose& approach);

struct PickPlaceQpOptions {
  bool include_aux_costs = true;  // approach/entry tracking terms
  bool include_coupling = true;   // the six relative-velocity equality rows
  double aux_weight = 10.0;
  /// Scale of the consistency-drift correction added to the equality
  /// right-hand side; the gain is drift_gain_scale / dt.
  double drift_gain_scale = 0.5;
  double ridge = 1e-9;  // diagonal regularization of the non-pick blocks
};

/// Pick-only tracking problem in the n joint velocities: minimize
/// ||hand_twist - J qdot||^2 subject to joint-limit boxes (scaled by dt) and
/// one non-approach row per proximal contact.
QpProblem build_pick_qp(const KinematicChain& chain, const JointConfig& q,
                        const Twist& hand_twist, const ContactSet& contacts, double dt);

/// Target velocity for the placed object: the pose error to the best target
/// candidate spread over the remaining k steps, with free directions (yaw,
/// horizontal region) projected out before the minimum-norm selection.
/// Rates are clipped to 1 rad/s angular and 0.5 m/s linear.
Twist place_target_twist(const Pose& current, const PlacementTarget& target, int k,
                         double dt);

/// Coupled pick-place problem over [qdot x6, object twist] (6n+6 variables):
/// grasp tracking cost, weighted placing cost, approach/entry tracking costs,
/// the six equality rows tying hand-object relative velocity on both sides,
/// joint-limit boxes and contact rows for every configuration, and the region
/// velocity box when the target has one.  `object_contacts` are pairs between
/// the carried object and the world; their separation rows act on the object
/// twist block, since the object's world motion is the twist variable, not
/// any single arm's joint rates.
QpProblem build_pickplace_qp(const KinematicChain& chain, const PickPlaceConfigs& configs,
                             const Twist& hand_twist, const Twist& place_twist,
                             const PlacementTarget& target, const Pose& pick_object_pose,
                             const Pose& place_object_pose, const ConfigContacts& contacts,
                             double dt, const PickPlaceQpOptions& options = {},
                             const ContactSet& object_contacts = {});

/// One solved step: velocities for every tracked configuration plus the
/// object twist, with solver diagnostics.  Velocities are zero when the QP
/// did not reach an optimum.
struct DiffIkStep {
  JointConfig qd_pick, qd_place;
  JointConfig qd_pick_approach, qd_pick_entry, qd_place_approach, qd_place_entry;
  Twist object_twist;

  bool ok = false;
  QpStatus status = QpStatus::infeasible;
  int iterations = 0;
  int active_limits = 0;
  int active_contacts = 0;
  double kkt = 0.0;
};

/// Stateful stepper: carries the previous solution as a warm start.  One
/// instance per denoising run; instances share nothing.
class DiffIkSolver {
 public:
  /// Pick-only when `target` is null (only configs.pick and contacts[0] are
  /// read); coupled otherwise. `place_twist` is the precomputed object target
  /// velocity and is ignored in pick-only mode.
  DiffIkStep step(const KinematicChain& chain, const PickPlaceConfigs& configs,
                  const Twist& hand_twist, const PlacementTarget* target,
                  const Twist& place_twist, const Pose& pick_object_pose,
                  const Pose& place_object_pose, const ConfigContacts& contacts, double dt,
                  const PickPlaceQpOptions& options = {},
                  const ContactSet& object_contacts = {});

  void reset();

 private:
  QpSolver solver_;
  std::optional<QpSolution> warm_pick_;
  std::optional<QpSolution> warm_place_;
};

}  // namespace ppd
