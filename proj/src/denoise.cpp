#include "ppd/denoise.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <optional>
#include <stdexcept>
#include <utility>

#include "json.hpp"

namespace ppd {
namespace {

constexpr double kPi = 3.14159265358979323846;

Pose rot_z(double yaw) {
  Pose p;
  p.rotation = Eigen::AngleAxisd(yaw, Eigen::Vector3d::UnitZ()).toRotationMatrix();
  return p;
}

/// Hand frame looking straight down: approach (+z) along world -z, yawed
/// about the vertical.
Eigen::Matrix3d down_facing(double yaw) {
  return (Eigen::AngleAxisd(yaw, Eigen::Vector3d::UnitZ()) *
          Eigen::AngleAxisd(kPi, Eigen::Vector3d::UnitX()))
      .toRotationMatrix();
}

void clip_rate(Eigen::Vector3d& v, double cap) {
  double n = v.norm();
  if (n > cap) v *= cap / n;
}

/// Bound the per-step hand displacement so one Euler step can never carry a
/// sphere across the whole contact band.
Twist clip_step(const Twist& twist, double dt, double max_translation, double max_rotation) {
  Twist out = twist;
  clip_rate(out.angular, max_rotation / dt);
  clip_rate(out.translational, max_translation / dt);
  return out;
}

constexpr double kStepFarTranslation = 0.05;  // m, cap with plenty of room
constexpr double kStepFarRotation = 0.5;      // rad
constexpr double kHandLever = 0.09;           // m, sphere offset from the tool point

struct StepCaps {
  double translation;
  double rotation;
};

/// Clearance-adaptive per-step caps. Near obstacles the strides stay below
/// the contact band; with room to spare they grow so the hand is not starved
/// of progress. Translation and rotation-lever motion share the slack budget,
/// half each, so their sum never outruns the available clearance.
StepCaps step_caps(double clearance, const DenoiseOptions& options) {
  const double slack = std::max(0.0, clearance - 2.0 * options.contact_threshold);
  return {std::min(kStepFarTranslation, options.step_translation_max + 0.5 * slack),
          std::min(kStepFarRotation,
                   options.step_rotation_max + 0.5 * slack / kHandLever)};
}

/// Unconstrained velocity servo toward `target` under joint-limit boxes
/// only. Collisions are ignored here; callers re-check the endpoint.
std::optional<JointConfig> servo_to(const KinematicChain& chain, JointConfig q,
                                    const Pose& target) {
  QpSolver solver;
  for (int it = 0; it < 160; ++it) {
    Twist err = pose_error(chain.forward_kinematics(q), target);
    bool done = err.angular.norm() < 1e-3 && err.translational.norm() < 1e-4;
    if (done) return q;
    Twist step = err * 0.5;
    clip_rate(step.angular, 0.4);
    clip_rate(step.translational, 0.08);
    QpSolution sol = solver.solve(build_pick_qp(chain, q, step, ContactSet{}, 1.0));
    if (sol.status != QpStatus::optimal) return std::nullopt;
    // pinned against a limit with error left: this start cannot reach
    if (sol.x.lpNorm<Eigen::Infinity>() < 1e-10) return std::nullopt;
    q += sol.x;
  }
  return std::nullopt;
}

void refresh_poses(const PlanningScene& scene, DenoiseState& state) {
  const KinematicChain& chain = *scene.chain;
  state.hand_pick = chain.forward_kinematics(state.configs.pick);
  state.hand_place = chain.forward_kinematics(state.configs.place);
  state.grip = state.hand_pick.inverse() * scene.pick_object_pose;
  state.object_place = state.hand_place * state.grip;
}

double limit_violation(const KinematicChain& chain, const PickPlaceConfigs& configs) {
  double worst = 0.0;
  for (int s = 0; s < kConfigSlots; ++s) {
    const JointConfig& q = configs.slot(s);
    for (int j = 0; j < chain.joint_count(); ++j) {
      worst = std::max(worst, chain.lower_limits()[j] - q[j]);
      worst = std::max(worst, q[j] - chain.upper_limits()[j]);
    }
  }
  return std::max(worst, 0.0);
}

double pick_clearance(const KinematicChain& chain, const PickPlaceConfigs& configs,
                      const Environment& env) {
  static constexpr int slots[] = {kPickGrasp, kPickApproach, kPickEntry};
  double worst = std::numeric_limits<double>::infinity();
  for (int s : slots) worst = std::min(worst, min_clearance(chain, configs.slot(s), env));
  return worst;
}

// The carried object only exists in the grasp configuration's kinematic model;
// the approach and entry hands hover above an empty placement, so they are
// audited against the bare place-side world.
double place_clearance(const KinematicChain& chain, const PickPlaceConfigs& configs,
                       const Environment& place_base, const Environment& env_with_held) {
  double worst = min_clearance(chain, configs.place, env_with_held);
  worst = std::min(worst, min_clearance(chain, configs.place_approach, place_base));
  return std::min(worst, min_clearance(chain, configs.place_entry, place_base));
}

ConfigContacts gather_contacts(const KinematicChain& chain, const PickPlaceConfigs& configs,
                               const Environment& env_pick, const Environment& env_place,
                               double threshold) {
  ConfigContacts contacts;
  contacts[kPickGrasp] = query_proximal_contacts(chain, configs.pick, env_pick, threshold);
  contacts[kPickApproach] =
      query_proximal_contacts(chain, configs.pick_approach, env_pick, threshold);
  contacts[kPickEntry] = query_proximal_contacts(chain, configs.pick_entry, env_pick, threshold);
  contacts[kPlaceGrasp] = query_proximal_contacts(chain, configs.place, env_place, threshold);
  contacts[kPlaceApproach] =
      query_proximal_contacts(chain, configs.place_approach, env_place, threshold);
  contacts[kPlaceEntry] =
      query_proximal_contacts(chain, configs.place_entry, env_place, threshold);
  return contacts;
}

class RunLog {
 public:
  explicit RunLog(const std::string& path) {
    if (!path.empty()) {
      out_.open(path, std::ios::trunc);
      if (!out_) throw std::runtime_error("cannot open run log: " + path);
    }
  }

  void record(const StepRecord& r) {
    if (!out_.is_open()) return;
    nlohmann::json line{{"sample", r.sample},
                        {"k", r.k},
                        {"bin", score_bin_name(r.bin)},
                        {"ok", r.ok},
                        {"status", status_name(r.status)},
                        {"iterations", r.iterations},
                        {"kkt", r.kkt},
                        {"active_limits", r.active_limits},
                        {"active_contacts", r.active_contacts},
                        {"rejected", r.rejected},
                        {"limit_violation", r.limit_violation},
                        {"clearance_pick", r.clearance_pick},
                        {"clearance_place", r.clearance_place}};
    out_ << line.dump() << "\n";
  }

 private:
  static const char* status_name(QpStatus s) {
    switch (s) {
      case QpStatus::optimal: return "optimal";
      case QpStatus::infeasible: return "infeasible";
      default: return "max_iterations";
    }
  }

  std::ofstream out_;
};

/// Anneal one state from k = steps down to 0. BinExhausted propagates so the
/// caller can fall back to the next bin.
void run_state(const PlanningScene& scene, DenoiseState& state, GuidanceField& field,
               const NoiseSchedule& schedule, const DenoiseOptions& options, ScoreBin bin,
               const Environment& place_base, DenoiseResult& result, RunLog& log) {
  const KinematicChain& chain = *scene.chain;
  const double dt = schedule.dt;
  DiffIkSolver solver;
  for (int k = schedule.steps; k >= 0; --k) {
    state.k = k;
    refresh_poses(scene, state);
    Twist guidance = field.sample({state.hand_pick, k, bin, state.sample, scene.scene_ref});
    const StepCaps caps =
        step_caps(min_clearance(chain, state.configs.pick, scene.environment), options);
    guidance = clip_step(guidance, dt, caps.translation, caps.rotation);
    // k counts down to 0 inclusive, so k+1 steps remain before this update
    Twist place = place_target_twist(state.object_place, scene.target, k + 1, dt);

    // Arm rows act on joint rates against the world each side sees; the held
    // object's rows act on the object twist, since its world motion follows
    // the twist variable while the grip itself keeps reshaping.
    ConfigContacts contacts = gather_contacts(chain, state.configs, scene.environment,
                                              place_base, options.contact_threshold);
    const CollisionBody held = scene.held_body(state.grip);
    ContactSet object_contacts = query_attached_body_contacts(
        chain, state.configs.place, held, place_base, options.contact_threshold);
    DiffIkStep step = solver.step(chain, state.configs, guidance, &scene.target, place,
                                  scene.pick_object_pose, state.object_place, contacts, dt,
                                  options.qp, object_contacts);

    const PickPlaceConfigs previous = state.configs;
    state.configs.pick += dt * step.qd_pick;
    state.configs.place += dt * step.qd_place;
    state.configs.pick_approach += dt * step.qd_pick_approach;
    state.configs.pick_entry += dt * step.qd_pick_entry;
    state.configs.place_approach += dt * step.qd_place_approach;
    state.configs.place_entry += dt * step.qd_place_entry;
    // The solver meets the limit boxes to its own tolerance; snap the residue.
    for (int s = 0; s < kConfigSlots; ++s)
      state.configs.slot(s) = chain.clamp_to_limits(state.configs.slot(s));

    StepRecord record;
    record.sample = state.sample;
    record.k = k;
    record.bin = bin;
    record.ok = step.ok;
    record.status = step.status;
    record.iterations = step.iterations;
    record.kkt = step.kkt;
    record.active_limits = step.active_limits;
    record.active_contacts = step.active_contacts;
    record.clearance_pick = pick_clearance(chain, state.configs, scene.environment);
    Environment env_after = place_base;
    Pose grip_after =
        chain.forward_kinematics(state.configs.pick).inverse() * scene.pick_object_pose;
    env_after.push_back(scene.held_body(grip_after));
    record.clearance_place = place_clearance(chain, state.configs, place_base, env_after);

    // Constraint rows are first order, so a bad solve can still step through
    // geometry. Refuse any update that lands in penetration; states start
    // collision-free, so by induction every recorded state stays so.
    if (record.clearance_pick < 0.0 || record.clearance_place < 0.0) {
      state.configs = previous;
      record.rejected = true;
      record.clearance_pick = pick_clearance(chain, state.configs, scene.environment);
      Environment env_prev = place_base;
      env_prev.push_back(scene.held_body(state.grip));
      record.clearance_place = place_clearance(chain, state.configs, place_base, env_prev);
    }
    record.limit_violation = limit_violation(chain, state.configs);
    log.record(record);
    result.steps.push_back(record);
  }
  refresh_poses(scene, state);
}

bool same_pose_bits(const Pose& a, const Pose& b) {
  return (a.rotation.array() == b.rotation.array()).all() &&
         (a.translation.array() == b.translation.array()).all();
}

}  // namespace

Environment PlanningScene::place_environment() const {
  Environment env;
  env.reserve(environment.size());
  for (const CollisionBody& body : environment)
    if (body.name != target_body) env.push_back(body);
  return env;
}

CollisionBody PlanningScene::held_body(const Pose& grip) const {
  // The cloud keeps its pick-time world coordinates; the body pose maps them
  // into the last link's frame so the attached object tracks the hand.
  Pose in_link = chain->tcp_offset() * grip * pick_object_pose.inverse();
  CollisionBody body = CollisionBody::make_cloud(target_body + "_held", target_cloud, in_link);
  body.attached_link = chain->joint_count() - 1;
  return body;
}

PlanningScene make_planning_scene(const SynthesizedScene& scene, const KinematicChain& chain,
                                  int target_index, PlacementTarget target,
                                  std::string scene_ref) {
  if (target_index < 0 || target_index >= static_cast<int>(scene.objects.size()))
    throw std::invalid_argument("make_planning_scene: target index out of range");
  auto cloud = scene.clouds[static_cast<std::size_t>(target_index)];
  if (!cloud || cloud->empty())
    throw std::invalid_argument("make_planning_scene: target object has no visible cloud");
  target.validate();

  PlanningScene out;
  out.chain = &chain;
  out.environment = scene.environment;
  out.target_body = scene.objects[static_cast<std::size_t>(target_index)].name + "_cloud";
  out.pick_object_pose = scene.objects[static_cast<std::size_t>(target_index)].pose;
  out.target_cloud = std::move(cloud);
  out.target = std::move(target);
  out.scene_ref = std::move(scene_ref);
  return out;
}

std::vector<DenoiseState> initialize(const PlanningScene& scene, const DenoiseOptions& options) {
  if (scene.chain == nullptr) throw std::invalid_argument("initialize: scene has no chain");
  if (options.batch < 1) throw std::invalid_argument("initialize: batch must be >= 1");
  scene.target.validate();

  const KinematicChain& chain = *scene.chain;
  const JointConfig home = chain.named_config("ready");
  const Environment place_base = scene.place_environment();
  const std::vector<Pose> goals = scene.target.candidate_poses();

  std::vector<DenoiseState> states;
  for (int s = 0; s < options.batch; ++s) {
    Rng rng(mix_seed(options.seed, 0xd0150 + static_cast<std::uint64_t>(s)));
    bool placed = false;
    for (int attempt = 0; attempt < options.init_retries && !placed; ++attempt) {
      Pose hand_target;
      hand_target.rotation = down_facing(rng.uniform(0.0, 2.0 * kPi));
      hand_target.translation =
          scene.pick_object_pose.translation +
          Eigen::Vector3d(rng.uniform(-0.03, 0.03), rng.uniform(-0.03, 0.03),
                          rng.uniform(0.16, 0.24));
      auto q_pick = servo_to(chain, home, hand_target);
      if (!q_pick) continue;
      if (min_clearance(chain, *q_pick, scene.environment) <= 0.0) continue;

      Pose hand_pick = chain.forward_kinematics(*q_pick);
      Pose grip = hand_pick.inverse() * scene.pick_object_pose;

      Pose object_goal = goals[rng.uniform_index(goals.size())];
      if (scene.target.has_region) {
        object_goal.translation.x() =
            rng.uniform(scene.target.region_min.x(), scene.target.region_max.x());
        object_goal.translation.y() =
            rng.uniform(scene.target.region_min.y(), scene.target.region_max.y());
      }
      double extra_yaw =
          scene.target.free_yaw ? rng.uniform(0.0, 2.0 * kPi) : rng.uniform(-0.3, 0.3);
      object_goal.rotation = rot_z(extra_yaw).rotation * object_goal.rotation;
      object_goal.translation.z() += rng.uniform(0.12, 0.18);

      auto q_place = servo_to(chain, home, object_goal * grip.inverse());
      if (!q_place) continue;
      Environment env_place = place_base;
      env_place.push_back(scene.held_body(grip));
      if (min_clearance(chain, *q_place, env_place) <= 0.0) continue;

      DenoiseState state;
      state.sample = s;
      state.configs.pick = *q_pick;
      state.configs.pick_approach = *q_pick;
      state.configs.pick_entry = *q_pick;
      state.configs.place = *q_place;
      state.configs.place_approach = *q_place;
      state.configs.place_entry = *q_place;
      state.rng = rng;
      refresh_poses(scene, state);
      states.push_back(std::move(state));
      placed = true;
    }
    if (!placed)
      throw std::runtime_error("initialization failed: no collision-free start for lane " +
                               std::to_string(s) + " after " +
                               std::to_string(options.init_retries) + " attempts");
  }
  return states;
}

DenoiseResult run(const PlanningScene& scene, std::vector<DenoiseState> states,
                  GuidanceField& field, const NoiseSchedule& schedule,
                  const SceneVolumes& volumes, const DenoiseOptions& options) {
  if (scene.chain == nullptr) throw std::invalid_argument("run: scene has no chain");
  if (states.empty()) throw std::invalid_argument("run: no states");
  if (options.bin_order.empty()) throw std::invalid_argument("run: empty bin order");
  schedule.validate();
  scene.target.validate();

  DenoiseResult result;
  RunLog log(options.run_log_path);
  const Environment place_base = scene.place_environment();
  std::vector<std::string> reasons;

  for (std::size_t bin_index = 0; bin_index < options.bin_order.size(); ++bin_index) {
    ScoreBin bin = options.bin_order[bin_index];
    std::vector<DenoiseState> lane;
    if (bin_index == 0) {
      lane = std::move(states);
    } else {
      DenoiseOptions restart = options;
      restart.seed = mix_seed(options.seed, 0xfa11 + bin_index);
      try {
        lane = initialize(scene, restart);
      } catch (const std::runtime_error& err) {
        reasons.push_back(std::string(score_bin_name(bin)) + ": " + err.what());
        continue;
      }
    }

    bool exhausted = false;
    for (DenoiseState& state : lane) {
      try {
        run_state(scene, state, field, schedule, options, bin, place_base, result, log);
      } catch (const BinExhausted& err) {
        reasons.push_back(std::string(score_bin_name(bin)) + ": " + err.what());
        exhausted = true;
        break;
      }
    }
    if (exhausted) continue;

    std::vector<Pose> finals;
    finals.reserve(lane.size());
    for (const DenoiseState& state : lane) finals.push_back(state.hand_pick);
    auto ranked = filter_and_sort(finals, volumes, options.validity_threshold);
    if (ranked.empty()) {
      reasons.push_back(std::string(score_bin_name(bin)) +
                        ": no final pose passed the validity filter");
      continue;
    }

    std::vector<char> used(lane.size(), 0);
    for (const auto& [pose, score] : ranked) {
      for (std::size_t i = 0; i < lane.size(); ++i) {
        if (used[i] || !same_pose_bits(pose, lane[i].hand_pick)) continue;
        used[i] = 1;
        DenoiseCandidate candidate;
        candidate.state = lane[i];
        candidate.score = score;
        candidate.validity = lookup_trilinear(volumes.grasp_validity, pose.translation).value;
        result.candidates.push_back(std::move(candidate));
        break;
      }
    }
    result.bin = bin;
    result.failure_reason.clear();
    return result;
  }

  std::string joined;
  for (const std::string& reason : reasons) {
    if (!joined.empty()) joined += "; ";
    joined += reason;
  }
  result.failure_reason = joined.empty() ? "no bins attempted" : joined;
  return result;
}

ValidationReport validate_result(const PlanningScene& scene, const DenoiseResult& result) {
  const KinematicChain& chain = *scene.chain;
  const Environment place_base = scene.place_environment();
  ValidationReport report;

  for (std::size_t i = 0; i < result.candidates.size(); ++i) {
    const DenoiseState& state = result.candidates[i].state;
    CandidateAudit audit;
    audit.limit_violation = limit_violation(chain, state.configs);

    Pose hand_pick = chain.forward_kinematics(state.configs.pick);
    Pose hand_place = chain.forward_kinematics(state.configs.place);
    Pose rel_pick = hand_pick.inverse() * scene.pick_object_pose;
    Pose rel_place = hand_place.inverse() * state.object_place;
    Pose rel_err = rel_pick.inverse() * rel_place;
    audit.consistency_rot = so3_log(rel_err.rotation).norm();
    audit.consistency_trans = rel_err.translation.norm();

    audit.clearance_pick = pick_clearance(chain, state.configs, scene.environment);
    Environment env_place = place_base;
    env_place.push_back(scene.held_body(rel_pick));
    audit.clearance_place = place_clearance(chain, state.configs, place_base, env_place);

    // Placement error against the nearest admissible target, with the free
    // directions projected out before comparison.
    Pose object = hand_place * rel_pick;
    double best_key = std::numeric_limits<double>::infinity();
    for (const Pose& goal : scene.target.candidate_poses()) {
      double rot;
      if (scene.target.free_yaw) {
        double c = goal.rotation.col(2).dot(object.rotation.col(2));
        rot = std::acos(std::clamp(c, -1.0, 1.0));
      } else {
        rot = so3_log(goal.rotation * object.rotation.transpose()).norm();
      }
      Eigen::Vector2d xy = object.translation.head<2>();
      double xy_err;
      if (scene.target.has_region) {
        Eigen::Vector2d clamped = xy.cwiseMax(scene.target.region_min)
                                      .cwiseMin(scene.target.region_max);
        xy_err = (xy - clamped).norm();
      } else {
        xy_err = (xy - goal.translation.head<2>()).norm();
      }
      double key = rot + 2.0 * xy_err;
      if (key < best_key) {
        best_key = key;
        audit.placement_rot = rot;
        audit.placement_xy = xy_err;
        audit.placement_z = std::abs(object.translation.z() - goal.translation.z());
      }
    }

    auto flag = [&](const char* kind, double magnitude, const std::string& detail) {
      report.issues.push_back(
          {static_cast<int>(i), kind, magnitude, "candidate " + std::to_string(i) + ": " + detail});
    };
    if (audit.limit_violation > 1e-9)
      flag("joint_limits", audit.limit_violation,
           "joint limit exceeded by " + std::to_string(audit.limit_violation));
    if (audit.clearance_pick < 0.0)
      flag("clearance_pick", audit.clearance_pick,
           "pick-side clearance " + std::to_string(audit.clearance_pick) + " m");
    if (audit.clearance_place < 0.0)
      flag("clearance_place", audit.clearance_place,
           "place-side clearance " + std::to_string(audit.clearance_place) + " m");
    if (audit.consistency_rot > 1e-3)
      flag("consistency_rot", audit.consistency_rot,
           "hand-object rotation mismatch " + std::to_string(audit.consistency_rot) + " rad");
    if (audit.consistency_trans > 1e-3)
      flag("consistency_trans", audit.consistency_trans,
           "hand-object translation mismatch " + std::to_string(audit.consistency_trans) + " m");
    if (audit.placement_rot > 1e-2)
      flag("placement_rot", audit.placement_rot,
           "placement rotation error " + std::to_string(audit.placement_rot) + " rad");
    if (audit.placement_xy > 2e-2)
      flag("placement_xy", audit.placement_xy,
           "placement horizontal error " + std::to_string(audit.placement_xy) + " m");

    report.audits.push_back(audit);
  }
  return report;
}

}  // namespace ppd
