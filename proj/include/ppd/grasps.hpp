#pragma once

#include <Eigen/Core>
#include <string>
#include <utility>
#include <vector>

#include "ppd/chain.hpp"
#include "ppd/collision.hpp"
#include "ppd/scene.hpp"
#include "ppd/se3.hpp"
#include "ppd/volume.hpp"

namespace ppd {

/// One parallel-jaw grasp. The hand frame's +z is the approach direction
/// (pointing from palm toward fingertips), +x the closing direction; the TCP
/// sits between the fingertips. Contacts are the antipodal surface points
/// with their outward surface normals, in world frame.
struct GraspCandidate {
  Pose hand_pose;
  double width = 0.0;
  double score = 0.0;
  ScoreBin bin = ScoreBin::low;
  Eigen::Vector3d contact_a = Eigen::Vector3d::Zero();
  Eigen::Vector3d contact_b = Eigen::Vector3d::Zero();
  Eigen::Vector3d normal_a = Eigen::Vector3d::Zero();
  Eigen::Vector3d normal_b = Eigen::Vector3d::Zero();
};

/// Maximum object width the fingers can close around.
constexpr double max_grasp_width() { return 0.085; }

/// True when any of the chain's hand spheres, posed at `hand_pose`, comes
/// closer than `clearance` to a world-fixed body of `environment`.
bool hand_pose_collides(const KinematicChain& chain, const Pose& hand_pose,
                        const Environment& environment, double clearance = 0.001);

/// Enumerate antipodal grasps of one object primitive and drop every
/// candidate whose hand geometry collides with the object itself or with
/// `obstacles` (other primitives, table, walls). Scores decrease with the
/// TCP-to-centroid distance, scaled to [0, 45] N, and each grasp carries its
/// score bin. The list may come back empty.
std::vector<GraspCandidate> synthesize_grasps(const SceneObject& object,
                                              const KinematicChain& chain,
                                              const Environment& obstacles,
                                              double clearance = 0.001);

/// Bake a grasp list into decoder volumes on `grid`: a validity field that is
/// 1 within one voxel of a TCP and decays linearly to 0 at two voxels, and a
/// score field holding the best grasp score within two voxels (0 elsewhere).
std::pair<VoxelVolume, VoxelVolume> bake_decoder_volumes(
    const std::vector<GraspCandidate>& grasps, const GridSpec& grid);

void save_grasps(const std::vector<GraspCandidate>& grasps, const std::string& path);
std::vector<GraspCandidate> load_grasps(const std::string& path);

}  // namespace ppd
