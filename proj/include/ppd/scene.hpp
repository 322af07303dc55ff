#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "ppd/collision.hpp"
#include "ppd/se3.hpp"
#include "ppd/volume.hpp"

namespace ppd {

/// Pinhole camera. `pose` maps camera coordinates to world; depth images
/// store z in camera frame (not ray length).
struct PinholeCamera {
  int width = 256;
  int height = 256;
  double fx = 460.0;
  double fy = 460.0;
  double cx = 127.5;
  double cy = 127.5;
  Pose pose;

  /// Unnormalized ray direction in world frame for pixel center (u, v);
  /// scaled so that camera-frame z advances at unit rate along it.
  Eigen::Vector3d pixel_ray(double u, double v) const;
};

/// Camera used throughout: straight down over `center_xy` from `height`,
/// with camera x along world +x and camera y along world -y.
PinholeCamera top_down_camera(const Eigen::Vector2d& center_xy, double height = 0.9);

enum class ObjectShape { box, cylinder };

/// One rigid tabletop object. Boxes store half extents; cylinders stand
/// upright in their local frame with the given radius and half height.
/// `pose` places the local centroid in the world.
struct SceneObject {
  std::string name;
  ObjectShape shape = ObjectShape::box;
  Eigen::Vector3d box_half = Eigen::Vector3d::Zero();
  double cyl_radius = 0.0;
  double cyl_half_height = 0.0;
  Pose pose;
  bool graspable = true;

  Eigen::Vector3d centroid() const { return pose.translation; }
  double top_height() const;
  /// Circumscribed radius of the footprint in the xy plane.
  double footprint_radius() const;
  CollisionBody collision_body() const;
};

SceneObject make_box_object(const std::string& name, const Eigen::Vector3d& half,
                            const Pose& pose, bool graspable = true);
SceneObject make_cylinder_object(const std::string& name, double radius, double half_height,
                                 const Pose& pose, bool graspable = true);

struct DepthImage {
  int width = 0;
  int height = 0;
  std::vector<float> depth;        // z in camera frame; <= 0 means no return
  std::vector<std::int32_t> label; // object index per pixel, -1 table, -2 none

  float at(int u, int v) const { return depth[static_cast<std::size_t>(v) * width + u]; }
  std::int32_t label_at(int u, int v) const {
    return label[static_cast<std::size_t>(v) * width + u];
  }
};

/// Render the table plus objects into a depth image by ray casting.
DepthImage render_depth(const std::vector<SceneObject>& objects, const PinholeCamera& camera,
                        double table_top_z = 0.0);

/// Binary mask selecting the pixels of one object label.
std::vector<std::uint8_t> object_mask(const DepthImage& image, int object_index);

/// Back-project the masked pixels to a world-frame point cloud, keeping at
/// most `max_points` by deterministic striding.
PointCloud depth_to_cloud(const DepthImage& image, const PinholeCamera& camera,
                          const std::vector<std::uint8_t>& mask, std::size_t max_points = 1200);

/// Integrate a depth image into a truncated signed distance volume over
/// `grid`. Distances are signed along the view direction, expressed in units
/// of the truncation band and clamped to [-1, 1]; unobserved voxels hold +1.
/// With `mask`, pixels outside it are dropped before integration. If no pixel
/// contributes a measurement, `all_unobserved` (when given) is set.
VoxelVolume depth_to_tsdf(const DepthImage& image, const PinholeCamera& camera,
                          const GridSpec& grid, std::string semantics,
                          const std::vector<std::uint8_t>* mask = nullptr,
                          bool* all_unobserved = nullptr, double truncation_voxels = 4.0);

/// Scene synthesis request. Objects are sampled inside a square region of
/// half width `region_half` about `region_center`, resting on the table.
struct SceneSpec {
  std::uint64_t seed = 0;
  int object_count = 3;
  Eigen::Vector2d region_center = Eigen::Vector2d(0.45, 0.0);
  double region_half = 0.15;
  double table_top_z = 0.0;
  int max_placement_retries = 200;
};

struct SynthesizedScene {
  SceneSpec spec;
  std::vector<SceneObject> objects;
  PinholeCamera camera;
  DepthImage depth;
  GridSpec grid;
  /// World-frame visible-surface cloud per object, aligned with `objects`.
  std::vector<std::shared_ptr<const PointCloud>> clouds;
  /// Table box plus one cloud body per object, ready for planning.
  Environment environment;
};

/// Sample a scene with non-overlapping objects, render it, and back-project
/// per-object clouds. Deterministic in `spec.seed`. Throws when rejection
/// sampling cannot place an object within the retry budget.
SynthesizedScene synthesize_scene(const SceneSpec& spec);

/// Grid covering the sampling region: `resolution` voxels spanning twice
/// `region_half` from the table top upward.
GridSpec region_grid(const SceneSpec& spec, int resolution = 40);

/// The table as a collision box. The top face sits at `top_z`.
CollisionBody table_body(double top_z = 0.0);

void save_depth(const DepthImage& image, const std::string& path);
DepthImage load_depth(const std::string& path);

void save_scene_manifest(const SynthesizedScene& scene, const std::string& directory);
SynthesizedScene load_scene_manifest(const std::string& directory);

}  // namespace ppd
