#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <Eigen/Geometry>
#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include <ppd/chain.hpp>
#include <ppd/grasps.hpp>
#include <ppd/scene.hpp>

using namespace ppd;

namespace {

const KinematicChain& arm() {
  static KinematicChain chain =
      KinematicChain::load(std::string(PPD_DATA_DIR) + "/chains/tabletop7.json");
  return chain;
}

Pose resting_pose(double x, double y, double rise, double yaw = 0.0) {
  Pose pose;
  pose.rotation = Eigen::AngleAxisd(yaw, Eigen::Vector3d::UnitZ()).toRotationMatrix();
  pose.translation = Eigen::Vector3d(x, y, rise);
  return pose;
}

/// Target box flanked by an L of tall thin walls on its +x and +y sides.
/// The walls gate deep grasps in every approach family while leaving shallow
/// top-down grasps free.
std::vector<SceneObject> walled_target(double cx = 0.45, double cy = 0.0) {
  std::vector<SceneObject> objects;
  objects.push_back(make_box_object("target", Eigen::Vector3d(0.035, 0.035, 0.05),
                                    resting_pose(cx, cy, 0.05)));
  objects.push_back(make_box_object("wall_x", Eigen::Vector3d(0.005, 0.05, 0.0375),
                                    resting_pose(cx + 0.045, cy, 0.0375), false));
  objects.push_back(make_box_object("wall_y", Eigen::Vector3d(0.05, 0.005, 0.0375),
                                    resting_pose(cx, cy + 0.045, 0.0375), false));
  return objects;
}

}  // namespace

TEST_CASE("an isolated cube admits grasps on all three axis pairs") {
  const SceneObject cube =
      make_box_object("cube", Eigen::Vector3d(0.025, 0.025, 0.025), resting_pose(0.45, 0.0, 0.3));
  const std::vector<GraspCandidate> grasps = synthesize_grasps(cube, arm(), {});
  REQUIRE(!grasps.empty());

  bool closing_axis[3] = {false, false, false};
  for (const GraspCandidate& grasp : grasps) {
    const Eigen::Vector3d closing = grasp.hand_pose.rotation.col(0);
    for (int axis = 0; axis < 3; ++axis)
      if (std::abs(closing[axis]) > 0.99) closing_axis[axis] = true;

    CHECK(grasp.width == doctest::Approx(0.05));
    // no grasp approaches from below
    CHECK(grasp.hand_pose.rotation.col(2).z() <= 0.3 + 1e-12);
  }
  CHECK(closing_axis[0]);
  CHECK(closing_axis[1]);
  CHECK(closing_axis[2]);
}

TEST_CASE("grasp contacts are antipodal surface points") {
  const SceneObject cube =
      make_box_object("cube", Eigen::Vector3d(0.025, 0.02, 0.03), resting_pose(0.45, 0.0, 0.3, 0.7));
  for (const GraspCandidate& grasp : synthesize_grasps(cube, arm(), {})) {
    CHECK(grasp.normal_a.dot(grasp.normal_b) == doctest::Approx(-1.0).epsilon(1e-6));
    CHECK((grasp.contact_a - grasp.contact_b).norm() == doctest::Approx(grasp.width));

    // each contact lies on a face: one local coordinate at its half extent
    for (const Eigen::Vector3d& contact : {grasp.contact_a, grasp.contact_b}) {
      const Eigen::Vector3d local = cube.pose.inverse().apply(contact);
      bool on_face = false;
      const Eigen::Vector3d half = cube.box_half;
      for (int axis = 0; axis < 3; ++axis) {
        if (std::abs(std::abs(local[axis]) - half[axis]) < 1e-9) on_face = true;
        CHECK(std::abs(local[axis]) <= half[axis] + 1e-9);
      }
      CHECK(on_face);
    }
  }
}

TEST_CASE("a wide cylinder yields no grasps") {
  const SceneObject keg = make_cylinder_object("keg", 0.05, 0.05, resting_pose(0.45, 0.0, 0.05));
  CHECK(synthesize_grasps(keg, arm(), {table_body()}).empty());
}

TEST_CASE("cylinder grasps close across the diameter") {
  const SceneObject can = make_cylinder_object("can", 0.03, 0.055, resting_pose(0.45, 0.0, 0.055));
  const std::vector<GraspCandidate> grasps = synthesize_grasps(can, arm(), {table_body()});
  REQUIRE(!grasps.empty());
  for (const GraspCandidate& grasp : grasps) {
    CHECK(grasp.width == doctest::Approx(0.06));
    for (const Eigen::Vector3d& contact : {grasp.contact_a, grasp.contact_b}) {
      const double radial = (contact.head<2>() - can.pose.translation.head<2>()).norm();
      CHECK(radial == doctest::Approx(0.03).epsilon(1e-9));
    }
  }
}

TEST_CASE("horizontal cylinder grasps survive only when the wrist clears the table") {
  // mid-height horizontal approach puts the wrist sphere at the grasp height
  const SceneObject tall = make_cylinder_object("tall", 0.03, 0.055, resting_pose(0.45, 0.0, 0.055));
  const SceneObject squat = make_cylinder_object("squat", 0.03, 0.03, resting_pose(0.45, 0.0, 0.03));

  auto horizontal_count = [](const std::vector<GraspCandidate>& grasps) {
    return std::count_if(grasps.begin(), grasps.end(), [](const GraspCandidate& g) {
      return std::abs(g.hand_pose.rotation.col(2).z()) < 1e-9;
    });
  };
  CHECK(horizontal_count(synthesize_grasps(tall, arm(), {table_body()})) > 0);
  CHECK(horizontal_count(synthesize_grasps(squat, arm(), {table_body()})) == 0);
}

TEST_CASE("scores decrease with distance from the centroid and stay in range") {
  const SceneObject box =
      make_box_object("box", Eigen::Vector3d(0.03, 0.03, 0.05), resting_pose(0.45, 0.0, 0.05));
  const std::vector<GraspCandidate> grasps = synthesize_grasps(box, arm(), {table_body()});
  REQUIRE(grasps.size() >= 2);

  std::vector<std::pair<double, double>> by_distance;  // (centroid distance, score)
  for (const GraspCandidate& grasp : grasps) {
    CHECK(grasp.score >= 0.0);
    CHECK(grasp.score <= 45.0);
    by_distance.emplace_back((grasp.hand_pose.translation - box.centroid()).norm(), grasp.score);
  }
  std::sort(by_distance.begin(), by_distance.end());
  for (std::size_t i = 1; i < by_distance.size(); ++i)
    CHECK(by_distance[i].second <= by_distance[i - 1].second + 1e-12);
}

TEST_CASE("walls beside the target gate out every deep grasp") {
  const std::vector<SceneObject> objects = walled_target();
  Environment obstacles = {table_body()};
  for (std::size_t i = 1; i < objects.size(); ++i)
    obstacles.push_back(objects[i].collision_body());

  const std::vector<GraspCandidate> grasps = synthesize_grasps(objects[0], arm(), obstacles);
  REQUIRE(!grasps.empty());

  bool any_mid = false;
  for (const GraspCandidate& grasp : grasps) {
    CHECK(grasp.bin != ScoreBin::high);
    if (grasp.bin == ScoreBin::mid) any_mid = true;
    // survivors are shallow top-down grasps near the top of the object
    CHECK(grasp.hand_pose.translation.z() > 0.08);
  }
  CHECK(any_mid);

  // without the walls the deep high-bin grasps exist
  const std::vector<GraspCandidate> open = synthesize_grasps(objects[0], arm(), {table_body()});
  CHECK(std::any_of(open.begin(), open.end(),
                    [](const GraspCandidate& g) { return g.bin == ScoreBin::high; }));
}

TEST_CASE("hand collision checks see world bodies but never attached ones") {
  Pose above;
  above.rotation.col(0) = Eigen::Vector3d::UnitX();
  above.rotation.col(1) = -Eigen::Vector3d::UnitY();
  above.rotation.col(2) = -Eigen::Vector3d::UnitZ();
  above.translation = Eigen::Vector3d(0.45, 0.0, 0.3);
  CHECK(!hand_pose_collides(arm(), above, {table_body()}));

  Pose low = above;
  low.translation.z() = 0.002;  // fingertip spheres dip under the clearance
  CHECK(hand_pose_collides(arm(), low, {table_body()}));

  Environment attached = {table_body()};
  attached.back().attached_link = 3;
  CHECK(!hand_pose_collides(arm(), low, attached));
}

TEST_CASE("baked validity peaks at the grasp and decays over two voxels") {
  GridSpec grid;
  grid.resolution = 16;
  grid.origin = Eigen::Vector3d(0.0, 0.0, 0.0);
  grid.voxel_size = 0.01;

  GraspCandidate grasp;
  grasp.hand_pose.translation = grid.voxel_center(8, 8, 8);
  grasp.score = 37.0;
  grasp.bin = score_to_bin(grasp.score);

  auto [validity, score] = bake_decoder_volumes({grasp}, grid);
  CHECK(validity.grid == grid);

  CHECK(validity.at(8, 8, 8) == doctest::Approx(1.0));
  CHECK(validity.at(9, 8, 8) == doctest::Approx(1.0));          // one voxel away
  CHECK(validity.at(10, 8, 8) == doctest::Approx(0.0));         // two voxels away
  CHECK(validity.at(12, 8, 8) == doctest::Approx(0.0));
  const double diag = std::sqrt(2.0);                           // ~1.414 voxels away
  CHECK(validity.at(9, 9, 8) == doctest::Approx(2.0 - diag).epsilon(1e-6));

  CHECK(score.at(8, 8, 8) == doctest::Approx(37.0));
  CHECK(score.at(9, 9, 8) == doctest::Approx(37.0));            // within two voxels
  CHECK(score.at(12, 8, 8) == doctest::Approx(0.0));

  // a second, better grasp dominates where their supports overlap
  GraspCandidate better = grasp;
  better.hand_pose.translation = grid.voxel_center(9, 8, 8);
  better.score = 44.0;
  auto [validity2, score2] = bake_decoder_volumes({grasp, better}, grid);
  CHECK(score2.at(8, 8, 8) == doctest::Approx(44.0));
  CHECK(validity2.at(8, 8, 8) == doctest::Approx(1.0));
}

TEST_CASE("grasp lists roundtrip through disk") {
  const SceneObject box =
      make_box_object("box", Eigen::Vector3d(0.03, 0.03, 0.05), resting_pose(0.45, 0.0, 0.05, 0.4));
  const std::vector<GraspCandidate> grasps = synthesize_grasps(box, arm(), {table_body()});
  REQUIRE(!grasps.empty());

  const std::string path = std::string(PPD_BUILD_DIR) + "/grasps_roundtrip.json";
  save_grasps(grasps, path);
  const std::vector<GraspCandidate> loaded = load_grasps(path);

  REQUIRE(loaded.size() == grasps.size());
  for (std::size_t i = 0; i < grasps.size(); ++i) {
    CHECK((loaded[i].hand_pose.translation - grasps[i].hand_pose.translation).norm() < 1e-12);
    CHECK((loaded[i].hand_pose.rotation - grasps[i].hand_pose.rotation).norm() < 1e-12);
    CHECK(loaded[i].score == grasps[i].score);
    CHECK(loaded[i].bin == grasps[i].bin);
    CHECK((loaded[i].contact_a - grasps[i].contact_a).norm() < 1e-12);
  }
}
