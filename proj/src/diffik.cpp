#include "ppd/diffik.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace ppd {

namespace {

// Rate limits applied to the place target twist.
constexpr double kMaxAngularRate = 1.0;  // rad/s
constexpr double kMaxLinearRate = 0.5;   // m/s

// Weight on joint motion inside the Jacobian null space; keeps the tracking
// cost strictly convex without biasing the range-space (task) solution.
// Null-space motion is task-invisible, so with too weak a penalty the active-set
// solver may return any point of a near-flat valley, including multi-radian
// excursions that wreck downstream integration. The weight leaves exact task
// solutions untouched (the projector annihilates them) but pins the flat
// directions decisively.
constexpr double kNullSpaceWeight = 1e-2;
constexpr double kPickBlockRidge = 1e-12;
// Approach/entry targets are chased at error/dt; after a disturbance that
// error can be large, and an uncapped chase rate lets the weight-10 terms
// drag the grasp hands through the residual coupling. Cap the commanded rates.
constexpr double kAuxAngularRateMax = 0.5;  // rad/s
constexpr double kAuxLinearRateMax = 0.1;   // m/s

/// I - V_r V_r^T over the right singular vectors of J with nonnegligible
/// singular value: projector onto motions the task cost cannot see.
Eigen::MatrixXd null_space_projector(const Eigen::MatrixXd& jac) {
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(jac, Eigen::ComputeFullV);
  const auto& sigma = svd.singularValues();
  const double cutoff = sigma.size() > 0 ? 1e-10 * sigma(0) : 0.0;
  int rank = 0;
  for (Eigen::Index i = 0; i < sigma.size(); ++i)
    if (sigma(i) > cutoff) ++rank;
  const Eigen::MatrixXd vr = svd.matrixV().leftCols(rank);
  return Eigen::MatrixXd::Identity(jac.cols(), jac.cols()) - vr * vr.transpose();
}

/// Accumulate the quadratic cost  w * ||E y - c||^2  into (H, g).
void add_residual_cost(Eigen::MatrixXd& H, Eigen::VectorXd& g, const Eigen::MatrixXd& E,
                       const Eigen::VectorXd& c, double w) {
  H.noalias() += 2.0 * w * E.transpose() * E;
  g.noalias() -= 2.0 * w * E.transpose() * c;
}

/// Norm-clip the angular / translational halves of a stacked rate target.
Vector6d clip_rates(Vector6d rate) {
  const double wn = rate.head<3>().norm();
  if (wn > kAuxAngularRateMax) rate.head<3>() *= kAuxAngularRateMax / wn;
  const double vn = rate.tail<3>().norm();
  if (vn > kAuxLinearRateMax) rate.tail<3>() *= kAuxLinearRateMax / vn;
  return rate;
}

/// Joint-limit box rows  +-dt e_j <= headroom, appended at column `offset`.
void append_box_rows(Eigen::MatrixXd& C, Eigen::VectorXd& d, int& row,
                     const KinematicChain& chain, const JointConfig& q, int offset,
                     double dt) {
  const int n = chain.joint_count();
  for (int j = 0; j < n; ++j) {
    C(row, offset + j) = dt;
    d(row) = chain.upper_limits()[j] - q[j];
    ++row;
    C(row, offset + j) = -dt;
    d(row) = q[j] - chain.lower_limits()[j];
    ++row;
  }
}

/// Transport of a hybrid twist from the hand origin to a point rigidly offset
/// by r (world): angular part unchanged, linear part gains w x r.
Matrix6d twist_transport(const Vector3d& r) {
  Matrix6d m = Matrix6d::Identity();
  m.block<3, 3>(3, 0) = -skew(r);
  return m;
}

Matrix3d yaw_rotation(double phi) { return so3_exp(Vector3d(0.0, 0.0, phi)); }

}  // namespace

PlacementTarget PlacementTarget::single(const Pose& pose) {
  PlacementTarget t;
  t.base = pose;
  return t;
}

PlacementTarget PlacementTarget::discrete(std::vector<Pose> poses) {
  if (poses.empty()) throw std::invalid_argument("placement target: empty pose set");
  PlacementTarget t;
  t.base = poses.front();
  t.candidates = std::move(poses);
  return t;
}

PlacementTarget& PlacementTarget::with_free_yaw() {
  free_yaw = true;
  weights[2] = 0.0;
  return *this;
}

PlacementTarget& PlacementTarget::with_region(const Eigen::Vector2d& lo,
                                              const Eigen::Vector2d& hi) {
  has_region = true;
  region_min = lo;
  region_max = hi;
  weights[3] = 0.0;
  weights[4] = 0.0;
  return *this;
}

void PlacementTarget::validate() const {
  if ((weights.array() < 0.0).any())
    throw std::invalid_argument("placement target: negative weight");
  if (free_yaw != (weights[2] == 0.0))
    throw std::invalid_argument("placement target: free yaw and weights[2] disagree");
  if (has_region != (weights[3] == 0.0 && weights[4] == 0.0))
    throw std::invalid_argument("placement target: region mode and weights disagree");
  if (has_region && ((region_max - region_min).array() < 0.0).any())
    throw std::invalid_argument("placement target: empty region box");
}

std::vector<Pose> PlacementTarget::candidate_poses() const {
  if (!candidates.empty()) return candidates;
  return {base};
}

const JointConfig& PickPlaceConfigs::slot(int i) const {
  switch (i) {
    case kPickGrasp: return pick;
    case kPlaceGrasp: return place;
    case kPickApproach: return pick_approach;
    case kPickEntry: return pick_entry;
    case kPlaceApproach: return place_approach;
    case kPlaceEntry: return place_entry;
  }
  throw std::out_of_range("config slot");
}

JointConfig& PickPlaceConfigs::slot(int i) {
  return const_cast<JointConfig&>(static_cast<const PickPlaceConfigs*>(this)->slot(i));
}

Pose approach_pose(const Pose& grasp) {
  Pose back;
  back.translation = Vector3d(0.0, 0.0, -kApproachBack);
  return grasp * back;
}

Pose entry_pose(const Pose& approach) {
  Pose raised = approach;
  raised.translation.z() += kEntryRise;
  return raised;
}

QpProblem build_pick_qp(const KinematicChain& chain, const JointConfig& q,
                        const Twist& hand_twist, const ContactSet& contacts, double dt) {
  if (dt <= 0.0) throw std::invalid_argument("build_pick_qp: dt must be positive");
  const int n = chain.joint_count();
  const Eigen::MatrixXd jac = chain.spatial_jacobian(q);

  QpProblem problem;
  problem.H = 2.0 * (jac.transpose() * jac + kNullSpaceWeight * null_space_projector(jac) +
                     kPickBlockRidge * Eigen::MatrixXd::Identity(n, n));
  problem.g = -2.0 * jac.transpose() * hand_twist.stacked();

  const int m = static_cast<int>(contacts.size());
  problem.C = Eigen::MatrixXd::Zero(2 * n + m, n);
  problem.d = Eigen::VectorXd::Zero(2 * n + m);
  int row = 0;
  append_box_rows(problem.C, problem.d, row, chain, q, 0, dt);
  if (m > 0) {
    problem.C.bottomRows(m) = contact_jacobian(chain, q, contacts);
    // d rows stay zero: contacts may not be approached
  }
  return problem;
}

Twist place_target_twist(const Pose& current, const PlacementTarget& target, int k,
                         double dt) {
  if (k < 1) throw std::invalid_argument("place_target_twist: k must be >= 1");
  target.validate();

  Vector6d best = Vector6d::Zero();
  double best_norm = std::numeric_limits<double>::infinity();
  for (const Pose& candidate : target.candidate_poses()) {
    const Matrix3d m = candidate.rotation * current.rotation.transpose();
    Vector3d ew;
    if (target.free_yaw) {
      const double phi = std::atan2(m(0, 1) - m(1, 0), m(0, 0) + m(1, 1));
      ew = so3_log(yaw_rotation(phi) * m);
    } else {
      ew = so3_log(m);
    }
    Vector3d ep = candidate.translation - current.translation;
    if (target.has_region) {
      ep.x() = std::clamp(current.translation.x(), target.region_min.x(),
                          target.region_max.x()) -
               current.translation.x();
      ep.y() = std::clamp(current.translation.y(), target.region_min.y(),
                          target.region_max.y()) -
               current.translation.y();
    }
    Vector6d e;
    e << ew, ep;
    const double norm = e.norm();
    if (norm < best_norm) {
      best_norm = norm;
      best = e;
    }
  }

  Twist xi = Twist::from_stacked(best / (k * dt));
  const double wn = xi.angular.norm();
  if (wn > kMaxAngularRate) xi.angular *= kMaxAngularRate / wn;
  const double vn = xi.translational.norm();
  if (vn > kMaxLinearRate) xi.translational *= kMaxLinearRate / vn;
  return xi;
}

QpProblem build_pickplace_qp(const KinematicChain& chain, const PickPlaceConfigs& configs,
                             const Twist& hand_twist, const Twist& place_twist,
                             const PlacementTarget& target, const Pose& pick_object_pose,
                             const Pose& place_object_pose, const ConfigContacts& contacts,
                             double dt, const PickPlaceQpOptions& options,
                             const ContactSet& object_contacts) {
  if (dt <= 0.0) throw std::invalid_argument("build_pickplace_qp: dt must be positive");
  target.validate();

  const int n = chain.joint_count();
  const int vars = kConfigSlots * n + 6;
  const int xi_col = kConfigSlots * n;

  std::array<ChainState, kConfigSlots> states;
  std::array<Eigen::MatrixXd, kConfigSlots> jacs;
  std::array<Eigen::MatrixXd, kConfigSlots> contact_rows;
  int total_contact_rows = 0;
  for (int s = 0; s < kConfigSlots; ++s) {
    states[s] = chain.compute(configs.slot(s));
    jacs[s] = chain.spatial_jacobian(states[s]);
    contact_rows[s] = contact_jacobian(chain, configs.slot(s), contacts[s]);
    total_contact_rows += static_cast<int>(contact_rows[s].rows());
  }

  QpProblem problem;
  problem.H = Eigen::MatrixXd::Zero(vars, vars);
  problem.g = Eigen::VectorXd::Zero(vars);

  // Grasp tracking term; its block regularization matches build_pick_qp so
  // the decoupled problem degrades to it exactly.
  {
    Eigen::MatrixXd E = Eigen::MatrixXd::Zero(6, vars);
    E.block(0, kPickGrasp * n, 6, n) = jacs[kPickGrasp];
    add_residual_cost(problem.H, problem.g, E, hand_twist.stacked(), 1.0);
    problem.H.block(0, 0, n, n) +=
        2.0 * (kNullSpaceWeight * null_space_projector(jacs[kPickGrasp]) +
               kPickBlockRidge * Eigen::MatrixXd::Identity(n, n));
  }

  // Placing term on the object-twist block.
  for (int i = 0; i < 6; ++i) {
    problem.H(xi_col + i, xi_col + i) += 2.0 * target.weights[i];
    problem.g(xi_col + i) -= 2.0 * target.weights[i] * place_twist.stacked()[i];
  }

  // Approach/entry tracking: the approach pose chases the (moving) grasp pose
  // backed off along the hand axis; the entry pose chases the approach pose
  // raised vertically.  Both enter as soft residuals in the joint velocities.
  if (options.include_aux_costs) {
    const int grasp_slot[2] = {kPickGrasp, kPlaceGrasp};
    const int approach_slot[2] = {kPickApproach, kPlaceApproach};
    const int entry_slot[2] = {kPickEntry, kPlaceEntry};
    for (int side = 0; side < 2; ++side) {
      const Pose& grasp = states[grasp_slot[side]].tcp;
      const Pose& app = states[approach_slot[side]].tcp;
      const Pose& ent = states[entry_slot[side]].tcp;

      const Vector3d r = grasp.rotation * Vector3d(0.0, 0.0, -kApproachBack);
      Eigen::MatrixXd ea = Eigen::MatrixXd::Zero(6, vars);
      ea.block(0, approach_slot[side] * n, 6, n) = jacs[approach_slot[side]];
      ea.block(0, grasp_slot[side] * n, 6, n) =
          -twist_transport(r) * jacs[grasp_slot[side]];
      const Vector6d ca =
          clip_rates(pose_error(app, approach_pose(grasp)).stacked() / dt);
      add_residual_cost(problem.H, problem.g, ea, ca, options.aux_weight);

      Eigen::MatrixXd ee = Eigen::MatrixXd::Zero(6, vars);
      ee.block(0, entry_slot[side] * n, 6, n) = jacs[entry_slot[side]];
      ee.block(0, approach_slot[side] * n, 6, n) = -jacs[approach_slot[side]];
      const Vector6d ce = clip_rates(pose_error(ent, entry_pose(app)).stacked() / dt);
      add_residual_cost(problem.H, problem.g, ee, ce, options.aux_weight);
    }
  }

  // Pin the task-invisible directions of every other block the same way the
  // pick block is pinned; each uses its own Jacobian's null space so exact
  // task solutions stay optimal.
  for (int s = 1; s < kConfigSlots; ++s)
    problem.H.block(s * n, s * n, n, n) +=
        2.0 * kNullSpaceWeight * null_space_projector(jacs[s]);

  // Every block except the pick one gets a small ridge so the Hessian is
  // positive definite (the place velocities otherwise appear only in the
  // constraints).
  problem.H.diagonal().tail(vars - n).array() += options.ridge;

  // Relative-velocity coupling: hand-object velocity expressed in the object
  // frame must match between the pick side (static object) and the place side
  // (moving object).  The right-hand side feeds back the pose-level
  // consistency drift so integration errors decay instead of accumulating.
  if (options.include_coupling) {
    const Matrix3d rat = pick_object_pose.rotation.transpose();
    const Matrix3d rbt = place_object_pose.rotation.transpose();
    const Pose& hand_b = states[kPlaceGrasp].tcp;

    problem.A = Eigen::MatrixXd::Zero(6, vars);
    problem.A.block(0, kPickGrasp * n, 3, n) = rat * jacs[kPickGrasp].topRows(3);
    problem.A.block(3, kPickGrasp * n, 3, n) = rat * jacs[kPickGrasp].bottomRows(3);
    problem.A.block(0, kPlaceGrasp * n, 3, n) = -rbt * jacs[kPlaceGrasp].topRows(3);
    problem.A.block(3, kPlaceGrasp * n, 3, n) = -rbt * jacs[kPlaceGrasp].bottomRows(3);
    problem.A.block(0, xi_col, 3, 3) = rbt;
    problem.A.block(3, xi_col, 3, 3) =
        -rbt * skew(hand_b.translation - place_object_pose.translation);
    problem.A.block(3, xi_col + 3, 3, 3) = rbt;

    const Pose rel_a = states[kPickGrasp].tcp.inverse() * pick_object_pose;
    const Pose rel_b = hand_b.inverse() * place_object_pose;
    const double gain = options.drift_gain_scale / dt;
    problem.b = Eigen::VectorXd::Zero(6);
    problem.b.head(3) = gain * so3_log(rel_b.rotation.transpose() * rel_a.rotation);
    problem.b.tail(3) =
        gain * rel_b.rotation.transpose() * (rel_a.translation - rel_b.translation);
  }

  const int region_rows = target.has_region ? 4 : 0;
  const int object_rows = static_cast<int>(object_contacts.size());
  problem.C = Eigen::MatrixXd::Zero(
      2 * n * kConfigSlots + total_contact_rows + object_rows + region_rows, vars);
  problem.d = Eigen::VectorXd::Zero(problem.C.rows());
  int row = 0;
  for (int s = 0; s < kConfigSlots; ++s)
    append_box_rows(problem.C, problem.d, row, chain, configs.slot(s), s * n, dt);
  for (int s = 0; s < kConfigSlots; ++s) {
    const int m = static_cast<int>(contact_rows[s].rows());
    if (m == 0) continue;
    problem.C.block(row, s * n, m, n) = contact_rows[s];
    row += m;  // d rows stay zero
  }
  for (const Contact& c : object_contacts) {
    // Witness velocity under the object twist: v + w x (p - o); requiring its
    // component along the outward normal to be non-negative mirrors the arm
    // contact rows.
    const Eigen::Vector3d r = c.robot_point - place_object_pose.translation;
    problem.C.block<1, 3>(row, xi_col) = -r.cross(c.normal).transpose();
    problem.C.block<1, 3>(row, xi_col + 3) = -c.normal.transpose();
    ++row;
  }
  if (target.has_region) {
    const Eigen::Vector2d p = place_object_pose.translation.head<2>();
    for (int axis = 0; axis < 2; ++axis) {
      problem.C(row, xi_col + 3 + axis) = dt;
      problem.d(row) = target.region_max[axis] - p[axis];
      ++row;
      problem.C(row, xi_col + 3 + axis) = -dt;
      problem.d(row) = p[axis] - target.region_min[axis];
      ++row;
    }
  }
  return problem;
}

DiffIkStep DiffIkSolver::step(const KinematicChain& chain, const PickPlaceConfigs& configs,
                              const Twist& hand_twist, const PlacementTarget* target,
                              const Twist& place_twist, const Pose& pick_object_pose,
                              const Pose& place_object_pose, const ConfigContacts& contacts,
                              double dt, const PickPlaceQpOptions& options,
                              const ContactSet& object_contacts) {
  const int n = chain.joint_count();
  DiffIkStep step;
  step.qd_pick = step.qd_place = Eigen::VectorXd::Zero(n);
  step.qd_pick_approach = step.qd_pick_entry = Eigen::VectorXd::Zero(n);
  step.qd_place_approach = step.qd_place_entry = Eigen::VectorXd::Zero(n);

  const bool coupled = target != nullptr;
  QpProblem problem =
      coupled ? build_pickplace_qp(chain, configs, hand_twist, place_twist, *target,
                                   pick_object_pose, place_object_pose, contacts, dt,
                                   options, object_contacts)
              : build_pick_qp(chain, configs.pick, hand_twist, contacts[kPickGrasp], dt);

  std::optional<QpSolution>& warm = coupled ? warm_place_ : warm_pick_;
  const QpSolution solution = solver_.solve(problem, warm ? &*warm : nullptr);

  step.status = solution.status;
  step.iterations = solution.iterations;
  step.ok = solution.status == QpStatus::optimal;
  if (!step.ok) {
    warm.reset();
    return step;
  }
  warm = solution;

  if (coupled) {
    for (int s = 0; s < kConfigSlots; ++s) {
      JointConfig* dst[kConfigSlots] = {&step.qd_pick,          &step.qd_place,
                                        &step.qd_pick_approach, &step.qd_pick_entry,
                                        &step.qd_place_approach, &step.qd_place_entry};
      *dst[s] = solution.x.segment(s * n, n);
    }
    step.object_twist =
        Twist::from_stacked(Vector6d(solution.x.segment(kConfigSlots * n, 6)));
  } else {
    step.qd_pick = solution.x;
  }

  const int box_rows = coupled ? 2 * n * kConfigSlots : 2 * n;
  const int contact_count =
      static_cast<int>(solution.ineq_multipliers.size()) - box_rows -
      (coupled && target->has_region ? 4 : 0);
  for (int i = 0; i < box_rows; ++i)
    if (solution.ineq_multipliers[i] > 1e-8) ++step.active_limits;
  for (int i = 0; i < contact_count; ++i)
    if (solution.ineq_multipliers[box_rows + i] > 1e-8) ++step.active_contacts;
  step.kkt = kkt_residuals(problem, solution).max();
  return step;
}

void DiffIkSolver::reset() {
  warm_pick_.reset();
  warm_place_.reset();
}

}  // namespace ppd
