#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "ppd/collision.hpp"
#include "ppd/diffik.hpp"
#include "ppd/guidance.hpp"
#include "ppd/rng.hpp"
#include "ppd/scene.hpp"
#include "ppd/volume.hpp"

namespace ppd {

/// Planning view of one synthesized scene: the world geometry, the object to
/// pick, and where it has to go. The pick side plans against `environment`
/// as-is; the place side plans against the same world with the picked
/// object's own cloud removed and re-attached to the hand instead.
struct PlanningScene {
  const KinematicChain* chain = nullptr;
  Environment environment;  // table (and walls) plus one cloud body per object
  std::string target_body;  // environment name of the picked object's cloud
  Pose pick_object_pose;    // object frame at pick time
  std::shared_ptr<const PointCloud> target_cloud;  // world-frame surface points
  PlacementTarget target;
  std::string scene_ref;  // forwarded to guidance queries, may be empty

  /// `environment` with the picked object's own body removed.
  Environment place_environment() const;

  /// The picked object as a collision body riding the last link. `grip` maps
  /// hand (TCP) frame to object frame; the body pose is expressed in the
  /// link frame as required for attached bodies.
  CollisionBody held_body(const Pose& grip) const;
};

/// Planning scene for `scene.objects[target_index]`. Throws
/// std::invalid_argument when the index is out of range or the object left
/// no visible cloud to plan against.
PlanningScene make_planning_scene(const SynthesizedScene& scene, const KinematicChain& chain,
                                  int target_index, PlacementTarget target,
                                  std::string scene_ref = "");

struct DenoiseOptions {
  int batch = 4;
  int init_retries = 50;  // per batch lane, then initialization fails
  std::uint64_t seed = 0;

  /// Distance band of the hard contact rows. Pairs outside it are
  /// unconstrained, so per-step strides near geometry must stay smaller than
  /// this band or a single Euler step could jump from unconstrained straight
  /// into penetration. The rotation cap matters too: a point 90 mm off the
  /// tool axis moves ~9 mm under a 0.10 rad turn, and the two motions add.
  /// The caps below apply at zero clearance and relax linearly once the
  /// pick hand has more room than twice the band.
  double contact_threshold = 0.02;      // m
  double step_translation_max = 0.010;  // near-field hand translation per step, m
  double step_rotation_max = 0.10;      // near-field hand rotation per step, rad

  double validity_threshold = 0.5;
  std::vector<ScoreBin> bin_order = {ScoreBin::high, ScoreBin::mid, ScoreBin::low};
  PickPlaceQpOptions qp;
  std::string run_log_path;  // one JSON line per (state, step) when set
};

/// One batch lane of the anneal: the six tracked configurations plus the
/// poses derived from them at the latest refresh. `grip` is the hand-frame
/// object pose implied by the pick side; the place-side object pose is
/// always recomputed through it, never integrated on its own, so the two
/// sides cannot drift apart between steps.
struct DenoiseState {
  int sample = 0;  // batch lane, salts the guidance noise stream
  int k = 0;       // current anneal step, counts down to 0
  PickPlaceConfigs configs;
  Pose hand_pick;
  Pose hand_place;
  Pose grip;          // hand frame -> object frame
  Pose object_place;  // hand_place * grip
  Rng rng;
};

struct DenoiseCandidate {
  DenoiseState state;
  double validity = 0.0;  // trilinear validity at the final pick TCP
  double score = 0.0;     // trilinear gravity score, the ranking key
};

/// Per-step diagnostics of one state, recorded after the Euler update.
struct StepRecord {
  int sample = 0;
  int k = 0;
  ScoreBin bin = ScoreBin::high;
  bool ok = false;
  QpStatus status = QpStatus::infeasible;
  int iterations = 0;
  double kkt = 0.0;
  int active_limits = 0;
  int active_contacts = 0;
  bool rejected = false;          // update refused (would have penetrated), state kept
  double limit_violation = 0.0;   // max over the six configurations
  double clearance_pick = 0.0;    // min over the three pick-side configs
  double clearance_place = 0.0;   // min over the three place-side configs
};

struct DenoiseResult {
  std::vector<DenoiseCandidate> candidates;  // descending score
  ScoreBin bin = ScoreBin::high;             // bin that produced them
  std::string failure_reason;                // set when candidates is empty
  std::vector<StepRecord> steps;

  bool ok() const { return !candidates.empty(); }
};

/// Sample `options.batch` independent starting states: pick hand above the
/// object facing down, place hand holding the implied grip over the
/// placement, both solved by unconstrained velocity servoing from the
/// chain's "ready" config and accepted only when strictly collision-free.
/// Aux configurations start equal to their grasp configurations. Throws
/// std::runtime_error when a lane exhausts `options.init_retries`.
std::vector<DenoiseState> initialize(const PlanningScene& scene, const DenoiseOptions& options);

/// Run the full anneal from k = schedule.steps down to 0 over every state:
/// query the guidance field, clip the twist, chase the placement, solve the
/// coupled differential-IK step under joint-limit and contact rows, and
/// Euler-integrate all six configurations. Final pick poses are filtered
/// through the validity volume and ranked by gravity score. When a bin
/// yields nothing (exhausted dataset, no survivor, failed re-init) the next
/// bin in `options.bin_order` restarts from freshly initialized states.
DenoiseResult run(const PlanningScene& scene, std::vector<DenoiseState> states,
                  GuidanceField& field, const NoiseSchedule& schedule,
                  const SceneVolumes& volumes, const DenoiseOptions& options);

struct ValidationIssue {
  int candidate = 0;
  std::string kind;  // "joint_limits", "clearance_pick", ...
  double magnitude = 0.0;
  std::string detail;
};

/// Independent re-derivation of everything a candidate claims, one entry per
/// candidate in result order.
struct CandidateAudit {
  double limit_violation = 0.0;
  double clearance_pick = 0.0;
  double clearance_place = 0.0;
  double consistency_rot = 0.0;    // rad between the two hand-object transforms
  double consistency_trans = 0.0;  // m
  double placement_rot = 0.0;      // rad, yaw projected out for free-yaw targets
  double placement_xy = 0.0;       // m, distance outside the region when one is set
  double placement_z = 0.0;        // m, reported only: the contact band keeps the
                                   // planned object one band above its support
};

struct ValidationReport {
  std::vector<CandidateAudit> audits;
  std::vector<ValidationIssue> issues;

  bool clean() const { return issues.empty(); }
};

/// Flags joint-limit violations (> 1e-9), negative clearance on either side,
/// pick/place consistency residuals above 1e-3 (m or rad), and placement
/// errors above 1e-2 rad / 2e-2 m against the nearest admissible target.
ValidationReport validate_result(const PlanningScene& scene, const DenoiseResult& result);

}  // namespace ppd
