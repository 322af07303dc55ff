#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <Eigen/Dense>
#include <cmath>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "json.hpp"
#include "ppd/denoise.hpp"
#include "ppd/grasps.hpp"
#include "ppd/guidance.hpp"
#include "ppd/scene.hpp"

using namespace ppd;

namespace {

const KinematicChain& arm() {
  static KinematicChain chain =
      KinematicChain::load(std::string(PPD_DATA_DIR) + "/chains/tabletop7.json");
  return chain;
}

struct Fixture {
  SynthesizedScene scene;
  std::vector<GraspCandidate> grasps;
  SceneVolumes volumes;
  PlanningScene planning;
};

/// Placement corner of the synthesis region farthest from the object, at the
/// object's own resting height, so the place side does not fight the pick
/// side's geometry.
Pose far_placement(const SynthesizedScene& scene) {
  const Eigen::Vector3d obj = scene.objects[0].pose.translation;
  Pose best;
  double best_dist = -1.0;
  for (double x : {0.36, 0.54}) {
    for (double y : {-0.10, 0.10}) {
      const double d = (Eigen::Vector2d(x, y) - obj.head<2>()).norm();
      if (d > best_dist) {
        best_dist = d;
        best.translation = Eigen::Vector3d(x, y, obj.z());
      }
    }
  }
  return best;
}

/// Scene + grasps + volumes for one seed, built once and shared: the target
/// is a single far placement unless the caller overrides planning.target.
const Fixture& make_fixture(std::uint64_t scene_seed) {
  static std::map<std::uint64_t, Fixture> cache;
  auto it = cache.find(scene_seed);
  if (it != cache.end()) return it->second;

  Fixture f;
  SceneSpec spec;
  spec.seed = scene_seed;
  spec.object_count = 1;
  f.scene = synthesize_scene(spec);

  Environment obstacles;
  const std::string own = f.scene.objects[0].name + "_cloud";
  for (const CollisionBody& body : f.scene.environment)
    if (body.name != own) obstacles.push_back(body);
  f.grasps = synthesize_grasps(f.scene.objects[0], arm(), obstacles);

  auto [validity, gravity] = bake_decoder_volumes(f.grasps, f.scene.grid);
  VoxelVolume tsdf_full = depth_to_tsdf(f.scene.depth, f.scene.camera, f.scene.grid, "tsdf_full");
  auto mask = object_mask(f.scene.depth, 0);
  VoxelVolume tsdf_object =
      depth_to_tsdf(f.scene.depth, f.scene.camera, f.scene.grid, "tsdf_object", &mask);
  f.volumes = SceneVolumes::assemble(std::move(tsdf_full), std::move(tsdf_object),
                                     std::move(validity), std::move(gravity));

  f.planning = make_planning_scene(f.scene, arm(), 0,
                                   PlacementTarget::single(far_placement(f.scene)));
  return cache.emplace(scene_seed, std::move(f)).first->second;
}

struct ZeroField : GuidanceField {
  Twist sample(const GuidanceQuery&) override { return Twist::zero(); }
};

bool same_config(const JointConfig& a, const JointConfig& b) {
  return a.size() == b.size() && (a.array() == b.array()).all();
}

bool same_pose(const Pose& a, const Pose& b) {
  return (a.rotation.array() == b.rotation.array()).all() &&
         (a.translation.array() == b.translation.array()).all();
}

double pose_gap(const Pose& a, const Pose& b) {
  return (a.rotation - b.rotation).norm() + (a.translation - b.translation).norm();
}

}  // namespace

TEST_CASE("planning scene splits the world around the picked object") {
  const Fixture& f = make_fixture(7);
  const PlanningScene& ps = f.planning;

  CHECK(ps.target_body == f.scene.objects[0].name + "_cloud");
  CHECK(ps.target_cloud == f.scene.clouds[0]);
  CHECK(same_pose(ps.pick_object_pose, f.scene.objects[0].pose));

  Environment place_env = ps.place_environment();
  CHECK(place_env.size() + 1 == ps.environment.size());
  for (const CollisionBody& body : place_env) CHECK(body.name != ps.target_body);

  // the held body rides the last link: posed there it reproduces exactly the
  // rigid motion that carries the object from its pick pose to the hand
  Pose hand;
  hand.rotation = so3_exp(Eigen::Vector3d(0.3, -0.1, 0.8));
  hand.translation = Eigen::Vector3d(0.4, 0.1, 0.2);
  Pose grip = hand.inverse() * ps.pick_object_pose;
  CollisionBody held = ps.held_body(grip);
  CHECK(held.attached_link == arm().joint_count() - 1);
  CHECK(held.cloud == ps.target_cloud);

  JointConfig q = arm().named_config("ready");
  ChainState state = arm().compute(q);
  Pose world = state.link_frames.back() * held.pose;
  Pose expect = state.tcp * grip * ps.pick_object_pose.inverse();
  CHECK(pose_gap(world, expect) < 1e-12);

  CHECK_THROWS_AS(make_planning_scene(f.scene, arm(), -1, {}), std::invalid_argument);
  CHECK_THROWS_AS(make_planning_scene(f.scene, arm(), 5, {}), std::invalid_argument);
  PlacementTarget broken;
  broken.free_yaw = true;  // weights[2] still 1: modes and weights disagree
  CHECK_THROWS_AS(make_planning_scene(f.scene, arm(), 0, broken), std::invalid_argument);
}

TEST_CASE("initialization is deterministic, collision free and down facing") {
  const Fixture& f = make_fixture(7);
  DenoiseOptions options;
  options.batch = 2;
  options.seed = 11;

  std::vector<DenoiseState> states = initialize(f.planning, options);
  REQUIRE(states.size() == 2);
  std::vector<DenoiseState> again = initialize(f.planning, options);

  const Environment place_base = f.planning.place_environment();
  const double object_top = f.scene.objects[0].top_height();
  for (int s = 0; s < 2; ++s) {
    const DenoiseState& st = states[s];
    CHECK(st.sample == s);
    for (int i = 0; i < kConfigSlots; ++i) CHECK(same_config(st.configs.slot(i), again[s].configs.slot(i)));

    // aux configurations start at their grasp configurations
    CHECK(same_config(st.configs.pick_approach, st.configs.pick));
    CHECK(same_config(st.configs.pick_entry, st.configs.pick));
    CHECK(same_config(st.configs.place_approach, st.configs.place));
    CHECK(same_config(st.configs.place_entry, st.configs.place));

    for (int i = 0; i < kConfigSlots; ++i) CHECK(arm().inside_limits(st.configs.slot(i)));
    CHECK(min_clearance(arm(), st.configs.pick, f.planning.environment) > 0.0);
    Environment env_place = place_base;
    env_place.push_back(f.planning.held_body(st.grip));
    CHECK(min_clearance(arm(), st.configs.place, env_place) > 0.0);

    // pick hand hovers above the object, approach axis pointing down
    CHECK(st.hand_pick.rotation.col(2).z() < -0.95);
    CHECK(st.hand_pick.translation.z() > object_top);
    CHECK((st.hand_pick.translation.head<2>() -
           f.planning.pick_object_pose.translation.head<2>())
              .norm() < 0.08);

    // implied grip closes the loop and the place side lifts the object
    CHECK(pose_gap(st.hand_pick * st.grip, f.planning.pick_object_pose) < 1e-12);
    CHECK(pose_gap(st.hand_place * st.grip, st.object_place) < 1e-15);
    const double lift =
        st.object_place.translation.z() - f.planning.target.base.translation.z();
    CHECK(lift > 0.10);
    CHECK(lift < 0.20);
  }

  // a different seed explores different starts
  DenoiseOptions other = options;
  other.seed = 12;
  std::vector<DenoiseState> moved = initialize(f.planning, other);
  CHECK(!same_config(moved[0].configs.pick, states[0].configs.pick));
}

TEST_CASE("initialization gives up on an impossible placement") {
  Pose far;
  far.translation = Eigen::Vector3d(2.0, 0.0, 0.05);
  const Fixture& f = make_fixture(7);
  PlanningScene planning = f.planning;
  planning.target = PlacementTarget::single(far);
  DenoiseOptions options;
  options.batch = 1;
  options.init_retries = 3;
  CHECK_THROWS_WITH_AS(initialize(planning, options),
                       doctest::Contains("initialization failed"), std::runtime_error);
}

TEST_CASE("zero guidance and a satisfied placement form a fixed point") {
  const Fixture& f = make_fixture(7);
  DenoiseOptions options;
  options.batch = 1;
  options.seed = 5;
  options.validity_threshold = 0.0;  // keep the hover pose through the filter
  options.bin_order = {ScoreBin::high};

  std::vector<DenoiseState> states = initialize(f.planning, options);
  PlanningScene pinned = f.planning;
  pinned.target = PlacementTarget::single(states[0].object_place);

  const JointConfig pick0 = states[0].configs.pick;
  const JointConfig place0 = states[0].configs.place;
  NoiseSchedule schedule;
  schedule.steps = 6;
  ZeroField field;
  DenoiseResult result = run(pinned, std::move(states), field, schedule, f.volumes, options);

  REQUIRE(result.ok());
  const DenoiseState& final_state = result.candidates[0].state;
  CHECK(same_config(final_state.configs.pick, pick0));
  CHECK(same_config(final_state.configs.place, place0));
  CHECK(same_pose(final_state.object_place, pinned.target.base));
  for (int i = 0; i < kConfigSlots; ++i) CHECK(arm().inside_limits(final_state.configs.slot(i)));
  for (const StepRecord& record : result.steps) CHECK(record.ok);
}

TEST_CASE("the anneal stays on the constraint manifold end to end") {
  const Fixture& f = make_fixture(7);
  NoiseSchedule schedule;
  schedule.steps = 40;
  DenoiseOptions options;
  options.batch = 2;
  options.seed = 21;
  OracleField field(f.grasps, schedule, options.seed);

  std::vector<DenoiseState> states = initialize(f.planning, options);
  DenoiseResult result = run(f.planning, states, field, schedule, f.volumes, options);

  REQUIRE(result.ok());
  CHECK(result.failure_reason.empty());
  CHECK(result.steps.size() == 2 * (schedule.steps + 1));
  for (const StepRecord& record : result.steps) {
    CHECK(record.limit_violation <= 1e-9);
    CHECK(record.clearance_pick >= -1e-3);
    CHECK(record.clearance_place >= -1e-3);
  }
  for (const DenoiseCandidate& candidate : result.candidates)
    CHECK(candidate.validity >= options.validity_threshold);

  ValidationReport report = validate_result(f.planning, result);
  REQUIRE(report.audits.size() == result.candidates.size());
  for (const ValidationIssue& issue : report.issues) MESSAGE(issue.detail);
  CHECK(report.clean());
  for (const CandidateAudit& audit : report.audits) {
    CHECK(audit.consistency_rot <= 1e-9);
    CHECK(audit.consistency_trans <= 1e-9);
  }

  // bitwise reproducible
  OracleField field2(f.grasps, schedule, options.seed);
  DenoiseResult rerun = run(f.planning, states, field2, schedule, f.volumes, options);
  REQUIRE(rerun.candidates.size() == result.candidates.size());
  for (std::size_t i = 0; i < result.candidates.size(); ++i) {
    CHECK(same_pose(rerun.candidates[i].state.hand_pick, result.candidates[i].state.hand_pick));
    CHECK(rerun.candidates[i].score == result.candidates[i].score);
  }
}

TEST_CASE("batch lanes do not interact") {
  const Fixture& f = make_fixture(7);
  NoiseSchedule schedule;
  schedule.steps = 25;
  DenoiseOptions wide;
  wide.batch = 2;
  wide.seed = 33;
  wide.validity_threshold = 0.0;  // keep every lane so both finals are visible
  OracleField field(f.grasps, schedule, 33);

  DenoiseResult both = run(f.planning, initialize(f.planning, wide), field, schedule, f.volumes, wide);
  REQUIRE(both.ok());

  DenoiseOptions solo = wide;
  solo.batch = 1;
  OracleField field2(f.grasps, schedule, 33);
  DenoiseResult one = run(f.planning, initialize(f.planning, solo), field2, schedule, f.volumes, solo);
  REQUIRE(one.ok());

  auto lane0 = [](const DenoiseResult& r) {
    for (const DenoiseCandidate& c : r.candidates)
      if (c.state.sample == 0) return c.state.hand_pick;
    REQUIRE(false);
    return Pose{};
  };
  CHECK(same_pose(lane0(both), lane0(one)));
}

TEST_CASE("free yaw placements spread while aligning the vertical axis") {
  const Fixture& f = make_fixture(9);
  PlanningScene planning = f.planning;
  planning.target = PlacementTarget::single(far_placement(f.scene)).with_free_yaw();

  NoiseSchedule schedule;
  schedule.steps = 30;
  std::vector<double> yaws;
  int aligned = 0;
  int successes = 0;
  for (std::uint64_t seed = 0; seed < 8; ++seed) {
    DenoiseOptions options;
    options.batch = 1;
    options.seed = 100 + seed;
    OracleField field(f.grasps, schedule, options.seed);
    DenoiseResult result =
        run(planning, initialize(planning, options), field, schedule, f.volumes, options);
    if (!result.ok()) continue;
    ++successes;
    const Pose& object = result.candidates[0].state.object_place;
    yaws.push_back(std::atan2(object.rotation(1, 0), object.rotation(0, 0)));
    ValidationReport report = validate_result(planning, result);
    if (report.audits[0].placement_rot < 1e-2) ++aligned;
  }
  REQUIRE(successes >= 6);
  CHECK(aligned == successes);

  double mean = 0.0;
  for (double y : yaws) mean += y;
  mean /= static_cast<double>(yaws.size());
  double var = 0.0;
  for (double y : yaws) var += (y - mean) * (y - mean);
  CHECK(std::sqrt(var / static_cast<double>(yaws.size())) > 0.1);
}

TEST_CASE("an exhausted high bin falls back to the next one") {
  const Fixture& f = make_fixture(7);
  std::vector<GraspCandidate> mid_only = f.grasps;
  for (GraspCandidate& grasp : mid_only) {
    grasp.bin = ScoreBin::mid;
    grasp.score = 20.0;
  }

  NoiseSchedule schedule;
  schedule.steps = 25;
  DenoiseOptions options;
  options.batch = 1;
  options.seed = 3;
  OracleField field(mid_only, schedule, options.seed);
  DenoiseResult result =
      run(f.planning, initialize(f.planning, options), field, schedule, f.volumes, options);

  REQUIRE(result.ok());
  CHECK(result.bin == ScoreBin::mid);
  CHECK(result.failure_reason.empty());
  for (const StepRecord& record : result.steps) CHECK(record.bin == ScoreBin::mid);

  // with no grasps at all every bin reports exhaustion
  OracleField empty({}, schedule, options.seed);
  DenoiseResult failed =
      run(f.planning, initialize(f.planning, options), empty, schedule, f.volumes, options);
  CHECK(!failed.ok());
  CHECK(failed.failure_reason.find("high") != std::string::npos);
  CHECK(failed.failure_reason.find("mid") != std::string::npos);
  CHECK(failed.failure_reason.find("low") != std::string::npos);
}

TEST_CASE("validation flags injected faults") {
  const Fixture& f = make_fixture(7);
  NoiseSchedule schedule;
  schedule.steps = 12;
  DenoiseOptions options;
  options.batch = 1;
  options.seed = 2;
  OracleField field(f.grasps, schedule, options.seed);
  DenoiseResult good =
      run(f.planning, initialize(f.planning, options), field, schedule, f.volumes, options);
  REQUIRE(good.ok());
  REQUIRE(validate_result(f.planning, good).clean());

  auto has_issue = [](const ValidationReport& report, const std::string& kind) {
    for (const ValidationIssue& issue : report.issues)
      if (issue.kind == kind) return true;
    return false;
  };

  {
    DenoiseResult bad = good;
    bad.candidates[0].state.configs.pick[2] = arm().upper_limits()[2] + 0.1;
    CHECK(has_issue(validate_result(f.planning, bad), "joint_limits"));
  }
  {
    DenoiseResult bad = good;
    bad.candidates[0].state.object_place.translation.z() += 0.005;
    CHECK(has_issue(validate_result(f.planning, bad), "consistency_trans"));
  }
  {
    PlanningScene shifted = f.planning;
    shifted.target.base.translation.x() += 0.05;
    CHECK(has_issue(validate_result(shifted, good), "placement_xy"));
  }
  {
    // drive the pick config into the table to trip the clearance audit
    DenoiseResult bad = good;
    JointConfig& q = bad.candidates[0].state.configs.pick;
    bool buried = false;
    for (int it = 0; it < 60 && !buried; ++it) {
      q[1] = std::min(q[1] + 0.05, arm().upper_limits()[1]);
      q[3] = std::min(q[3] + 0.05, arm().upper_limits()[3]);
      buried = min_clearance(arm(), q, f.planning.environment) < 0.0;
    }
    REQUIRE(buried);
    CHECK(has_issue(validate_result(f.planning, bad), "clearance_pick"));
  }
}

TEST_CASE("the run log mirrors the step records") {
  const Fixture& f = make_fixture(7);
  NoiseSchedule schedule;
  schedule.steps = 8;
  DenoiseOptions options;
  options.batch = 1;
  options.seed = 4;
  options.run_log_path = std::string(PPD_BUILD_DIR) + "/denoise_run_log.jsonl";
  OracleField field(f.grasps, schedule, options.seed);
  DenoiseResult result =
      run(f.planning, initialize(f.planning, options), field, schedule, f.volumes, options);

  std::ifstream in(options.run_log_path);
  REQUIRE(in.good());
  std::vector<std::string> lines;
  for (std::string line; std::getline(in, line);)
    if (!line.empty()) lines.push_back(line);
  CHECK(lines.size() == result.steps.size());

  nlohmann::json first = nlohmann::json::parse(lines.front());
  CHECK(first.at("k").get<int>() == schedule.steps);
  CHECK(first.at("sample").get<int>() == 0);
  CHECK(first.at("status").is_string());
  CHECK(first.at("clearance_pick").is_number());
}

TEST_CASE("run rejects malformed requests") {
  const Fixture& f = make_fixture(7);
  NoiseSchedule schedule;
  ZeroField field;
  DenoiseOptions options;

  CHECK_THROWS_AS(run(f.planning, {}, field, schedule, f.volumes, options),
                  std::invalid_argument);

  std::vector<DenoiseState> states = initialize(f.planning, [] {
    DenoiseOptions o;
    o.batch = 1;
    return o;
  }());
  DenoiseOptions no_bins = options;
  no_bins.bin_order.clear();
  CHECK_THROWS_AS(run(f.planning, states, field, schedule, f.volumes, no_bins),
                  std::invalid_argument);

  NoiseSchedule bad;
  bad.steps = 0;
  CHECK_THROWS_AS(run(f.planning, states, field, bad, f.volumes, options),
                  std::invalid_argument);
}
