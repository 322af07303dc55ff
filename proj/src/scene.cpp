#include "ppd/scene.hpp"

#include <Eigen/Geometry>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "ppd/jsonio.hpp"
#include "ppd/kern.hpp"
#include "ppd/rng.hpp"

namespace ppd {

using nlohmann::json;
using jsonio::pose_from_json;
using jsonio::pose_to_json;
using jsonio::vec3_from_json;
using jsonio::vec3_to_json;

Eigen::Vector3d PinholeCamera::pixel_ray(double u, double v) const {
  const Eigen::Vector3d dir_cam((u - cx) / fx, (v - cy) / fy, 1.0);
  return pose.rotation * dir_cam;
}

PinholeCamera top_down_camera(const Eigen::Vector2d& center_xy, double height) {
  PinholeCamera camera;
  camera.pose.rotation.col(0) = Eigen::Vector3d::UnitX();
  camera.pose.rotation.col(1) = -Eigen::Vector3d::UnitY();
  camera.pose.rotation.col(2) = -Eigen::Vector3d::UnitZ();
  camera.pose.translation = Eigen::Vector3d(center_xy.x(), center_xy.y(), height);
  return camera;
}

double SceneObject::top_height() const {
  const double rise = shape == ObjectShape::box ? box_half.z() : cyl_half_height;
  return pose.translation.z() + rise;
}

double SceneObject::footprint_radius() const {
  if (shape == ObjectShape::box) return std::hypot(box_half.x(), box_half.y());
  return cyl_radius;
}

CollisionBody SceneObject::collision_body() const {
  if (shape == ObjectShape::box) return CollisionBody::make_box(name, pose, box_half);
  // Inscribed capsule of the flat-capped cylinder: exact on the side wall away
  // from the rims, rounded at the rims.
  const double hl = std::max(cyl_half_height - cyl_radius, 0.0);
  return CollisionBody::make_capsule(name, pose, cyl_radius, hl);
}

SceneObject make_box_object(const std::string& name, const Eigen::Vector3d& half,
                            const Pose& pose, bool graspable) {
  SceneObject object;
  object.name = name;
  object.shape = ObjectShape::box;
  object.box_half = half;
  object.pose = pose;
  object.graspable = graspable;
  return object;
}

SceneObject make_cylinder_object(const std::string& name, double radius, double half_height,
                                 const Pose& pose, bool graspable) {
  SceneObject object;
  object.name = name;
  object.shape = ObjectShape::cylinder;
  object.cyl_radius = radius;
  object.cyl_half_height = half_height;
  object.pose = pose;
  object.graspable = graspable;
  return object;
}

namespace {

constexpr double kNoHit = std::numeric_limits<double>::infinity();

/// First positive ray parameter hitting an axis-aligned box of the given half
/// extents at the origin, or kNoHit.
double ray_box(const Eigen::Vector3d& origin, const Eigen::Vector3d& dir,
               const Eigen::Vector3d& half) {
  double t_near = -kNoHit;
  double t_far = kNoHit;
  for (int axis = 0; axis < 3; ++axis) {
    if (std::abs(dir[axis]) < 1e-15) {
      if (std::abs(origin[axis]) > half[axis]) return kNoHit;
      continue;
    }
    double t0 = (-half[axis] - origin[axis]) / dir[axis];
    double t1 = (half[axis] - origin[axis]) / dir[axis];
    if (t0 > t1) std::swap(t0, t1);
    t_near = std::max(t_near, t0);
    t_far = std::min(t_far, t1);
  }
  if (t_near > t_far || t_far < 0.0) return kNoHit;
  return t_near > 0.0 ? t_near : kNoHit;
}

/// First positive ray parameter hitting an upright flat-capped cylinder at the
/// origin (axis = local z), or kNoHit.
double ray_cylinder(const Eigen::Vector3d& origin, const Eigen::Vector3d& dir, double radius,
                    double half_height) {
  double best = kNoHit;

  const double a = dir.x() * dir.x() + dir.y() * dir.y();
  if (a > 1e-15) {
    const double b = 2.0 * (origin.x() * dir.x() + origin.y() * dir.y());
    const double c = origin.x() * origin.x() + origin.y() * origin.y() - radius * radius;
    const double disc = b * b - 4.0 * a * c;
    if (disc >= 0.0) {
      const double root = std::sqrt(disc);
      for (double t : {(-b - root) / (2.0 * a), (-b + root) / (2.0 * a)}) {
        if (t <= 0.0 || t >= best) continue;
        if (std::abs(origin.z() + t * dir.z()) <= half_height) best = t;
      }
    }
  }
  if (std::abs(dir.z()) > 1e-15) {
    for (double cap_z : {half_height, -half_height}) {
      const double t = (cap_z - origin.z()) / dir.z();
      if (t <= 0.0 || t >= best) continue;
      const double hx = origin.x() + t * dir.x();
      const double hy = origin.y() + t * dir.y();
      if (hx * hx + hy * hy <= radius * radius) best = t;
    }
  }
  return best;
}

double ray_object(const SceneObject& object, const Eigen::Vector3d& world_origin,
                  const Eigen::Vector3d& world_dir) {
  const Pose inv = object.pose.inverse();
  const Eigen::Vector3d o = inv.apply(world_origin);
  const Eigen::Vector3d d = inv.rotation * world_dir;
  if (object.shape == ObjectShape::box) return ray_box(o, d, object.box_half);
  return ray_cylinder(o, d, object.cyl_radius, object.cyl_half_height);
}

}  // namespace

DepthImage render_depth(const std::vector<SceneObject>& objects, const PinholeCamera& camera,
                        double table_top_z) {
  DepthImage image;
  image.width = camera.width;
  image.height = camera.height;
  image.depth.assign(static_cast<std::size_t>(camera.width) * camera.height, 0.0f);
  image.label.assign(image.depth.size(), -2);

  const Eigen::Vector3d origin = camera.pose.translation;
  for (int v = 0; v < camera.height; ++v) {
    for (int u = 0; u < camera.width; ++u) {
      // pixel_ray is scaled so camera-frame z advances at unit rate, so the
      // hit parameter is directly the stored depth.
      const Eigen::Vector3d dir = camera.pixel_ray(u, v);
      double best = kNoHit;
      std::int32_t label = -2;

      if (std::abs(dir.z()) > 1e-15) {
        const double t = (table_top_z - origin.z()) / dir.z();
        if (t > 0.0) {
          best = t;
          label = -1;
        }
      }
      for (std::size_t i = 0; i < objects.size(); ++i) {
        const double t = ray_object(objects[i], origin, dir);
        if (t < best) {
          best = t;
          label = static_cast<std::int32_t>(i);
        }
      }
      if (label != -2) {
        const std::size_t p = static_cast<std::size_t>(v) * camera.width + u;
        image.depth[p] = static_cast<float>(best);
        image.label[p] = label;
      }
    }
  }
  return image;
}

std::vector<std::uint8_t> object_mask(const DepthImage& image, int object_index) {
  std::vector<std::uint8_t> mask(image.label.size(), 0);
  for (std::size_t i = 0; i < image.label.size(); ++i)
    if (image.label[i] == object_index) mask[i] = 1;
  return mask;
}

PointCloud depth_to_cloud(const DepthImage& image, const PinholeCamera& camera,
                          const std::vector<std::uint8_t>& mask, std::size_t max_points) {
  if (mask.size() != image.depth.size())
    throw std::invalid_argument("mask size does not match depth image");

  std::size_t selected = 0;
  for (std::size_t i = 0; i < mask.size(); ++i)
    if (mask[i] && image.depth[i] > 0.0f) ++selected;
  const std::size_t stride = selected <= max_points ? 1 : (selected + max_points - 1) / max_points;

  std::vector<Eigen::Vector3d> points;
  points.reserve(std::min(selected, max_points) + 1);
  const Eigen::Vector3d origin = camera.pose.translation;
  std::size_t seen = 0;
  for (int v = 0; v < image.height; ++v) {
    for (int u = 0; u < image.width; ++u) {
      const std::size_t p = static_cast<std::size_t>(v) * image.width + u;
      if (!mask[p] || image.depth[p] <= 0.0f) continue;
      if (seen++ % stride == 0)
        points.push_back(origin + static_cast<double>(image.depth[p]) * camera.pixel_ray(u, v));
    }
  }
  return PointCloud(points);
}

namespace {

bool is_straight_down(const PinholeCamera& camera) {
  Eigen::Matrix3d expected;
  expected.col(0) = Eigen::Vector3d::UnitX();
  expected.col(1) = -Eigen::Vector3d::UnitY();
  expected.col(2) = -Eigen::Vector3d::UnitZ();
  return (camera.pose.rotation - expected).cwiseAbs().maxCoeff() < 1e-12;
}

}  // namespace

VoxelVolume depth_to_tsdf(const DepthImage& image, const PinholeCamera& camera,
                          const GridSpec& grid, std::string semantics,
                          const std::vector<std::uint8_t>* mask, bool* all_unobserved,
                          double truncation_voxels) {
  if (mask && mask->size() != image.depth.size())
    throw std::invalid_argument("mask size does not match depth image");

  // Masking happens before integration: dropped pixels become non-returns.
  const float* depth_ptr = image.depth.data();
  std::vector<float> masked;
  if (mask) {
    masked = image.depth;
    for (std::size_t i = 0; i < masked.size(); ++i)
      if (!(*mask)[i]) masked[i] = 0.0f;
    depth_ptr = masked.data();
  }

  bool any_return = false;
  for (std::size_t i = 0; i < image.depth.size() && !any_return; ++i)
    if (depth_ptr[i] > 0.0f) any_return = true;
  if (all_unobserved) *all_unobserved = !any_return;

  VoxelVolume volume(grid, std::move(semantics), 1.0f);
  const int d = grid.resolution;
  const double trunc = truncation_voxels * grid.voxel_size;

  if (is_straight_down(camera)) {
    for (int ix = 0; ix < d; ++ix) {
      for (int iy = 0; iy < d; ++iy) {
        const Eigen::Vector3d base = grid.voxel_center(ix, iy, 0);
        kern::tsdf_column(depth_ptr, image.width, image.height, static_cast<float>(camera.fx),
                          static_cast<float>(camera.fy), static_cast<float>(camera.cx),
                          static_cast<float>(camera.cy),
                          static_cast<float>(camera.pose.translation.x()),
                          static_cast<float>(camera.pose.translation.y()),
                          static_cast<float>(camera.pose.translation.z()),
                          static_cast<float>(base.x()), static_cast<float>(base.y()),
                          static_cast<float>(base.z()), static_cast<float>(grid.voxel_size),
                          static_cast<float>(trunc), static_cast<std::size_t>(d),
                          &volume.values[volume.index(ix, iy, 0)]);
      }
    }
    return volume;
  }

  // General camera: per-voxel projective distance in double precision.
  const Pose inv = camera.pose.inverse();
  for (int ix = 0; ix < d; ++ix) {
    for (int iy = 0; iy < d; ++iy) {
      for (int iz = 0; iz < d; ++iz) {
        const Eigen::Vector3d pc = inv.apply(grid.voxel_center(ix, iy, iz));
        if (pc.z() <= 0.0) continue;
        const int u = static_cast<int>(std::floor(camera.fx * pc.x() / pc.z() + camera.cx + 0.5));
        const int v = static_cast<int>(std::floor(camera.fy * pc.y() / pc.z() + camera.cy + 0.5));
        if (u < 0 || u >= image.width || v < 0 || v >= image.height) continue;
        const float measured = depth_ptr[static_cast<std::size_t>(v) * image.width + u];
        if (measured <= 0.0f) continue;
        const double sdf = (static_cast<double>(measured) - pc.z()) / trunc;
        volume.at(ix, iy, iz) = static_cast<float>(std::clamp(sdf, -1.0, 1.0));
      }
    }
  }
  return volume;
}

GridSpec region_grid(const SceneSpec& spec, int resolution) {
  GridSpec grid;
  grid.resolution = resolution;
  grid.voxel_size = 2.0 * spec.region_half / resolution;
  grid.origin = Eigen::Vector3d(spec.region_center.x() - spec.region_half + 0.5 * grid.voxel_size,
                                spec.region_center.y() - spec.region_half + 0.5 * grid.voxel_size,
                                spec.table_top_z + 0.5 * grid.voxel_size);
  return grid;
}

CollisionBody table_body(double top_z) {
  Pose pose;
  pose.translation = Eigen::Vector3d(0.55, 0.0, top_z - 0.025);
  return CollisionBody::make_box("table", pose, Eigen::Vector3d(0.40, 0.5, 0.025));
}

SynthesizedScene synthesize_scene(const SceneSpec& spec) {
  if (spec.object_count < 1 || spec.object_count > 5)
    throw std::invalid_argument("scene object count must be in [1,5]");

  Rng rng(mix_seed(spec.seed, 0x5ce9eULL));
  SynthesizedScene scene;
  scene.spec = spec;

  for (int i = 0; i < spec.object_count; ++i) {
    bool placed = false;
    for (int attempt = 0; attempt < spec.max_placement_retries && !placed; ++attempt) {
      SceneObject candidate;
      candidate.name = "object_" + std::to_string(i);
      const bool box = rng.uniform() < 0.5;
      double rise;
      if (box) {
        candidate.shape = ObjectShape::box;
        candidate.box_half = Eigen::Vector3d(rng.uniform(0.015, 0.041), rng.uniform(0.015, 0.05),
                                             rng.uniform(0.02, 0.06));
        rise = candidate.box_half.z();
      } else {
        candidate.shape = ObjectShape::cylinder;
        candidate.cyl_radius = rng.uniform(0.015, 0.0375);
        candidate.cyl_half_height = rng.uniform(0.025, 0.06);
        rise = candidate.cyl_half_height;
      }

      const double margin = candidate.footprint_radius();
      const double x = rng.uniform(spec.region_center.x() - spec.region_half + margin,
                                   spec.region_center.x() + spec.region_half - margin);
      const double y = rng.uniform(spec.region_center.y() - spec.region_half + margin,
                                   spec.region_center.y() + spec.region_half - margin);
      const double yaw = rng.uniform(0.0, 2.0 * M_PI);
      candidate.pose.rotation = Eigen::AngleAxisd(yaw, Eigen::Vector3d::UnitZ()).toRotationMatrix();
      candidate.pose.translation = Eigen::Vector3d(x, y, spec.table_top_z + rise);

      // Conservative footprint-circle separation guarantees the primitives do
      // not interpenetrate.
      bool clear = true;
      for (const SceneObject& other : scene.objects) {
        const double dist = (candidate.pose.translation.head<2>() -
                             other.pose.translation.head<2>())
                                .norm();
        if (dist < candidate.footprint_radius() + other.footprint_radius() + 0.005) {
          clear = false;
          break;
        }
      }
      if (clear) {
        scene.objects.push_back(std::move(candidate));
        placed = true;
      }
    }
    if (!placed)
      throw std::runtime_error("scene synthesis: placement region too crowded for object " +
                               std::to_string(i));
  }

  scene.camera = top_down_camera(spec.region_center);
  scene.depth = render_depth(scene.objects, scene.camera, spec.table_top_z);
  scene.grid = region_grid(spec);

  scene.environment.push_back(table_body(spec.table_top_z));
  for (std::size_t i = 0; i < scene.objects.size(); ++i) {
    auto cloud = std::make_shared<PointCloud>(
        depth_to_cloud(scene.depth, scene.camera, object_mask(scene.depth, static_cast<int>(i))));
    scene.clouds.push_back(cloud);
    // A fully occluded object leaves nothing to plan against; the top-down
    // camera and the non-overlap constraint keep this from happening.
    if (!cloud->empty())
      scene.environment.push_back(
          CollisionBody::make_cloud(scene.objects[i].name + "_cloud", cloud));
  }
  return scene;
}

void save_depth(const DepthImage& image, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open depth file for writing: " + path);
  out << "ppd_depth 1\n";
  out << "width " << image.width << "\n";
  out << "height " << image.height << "\n";
  out << "data\n";
  out.write(reinterpret_cast<const char*>(image.depth.data()),
            static_cast<std::streamsize>(image.depth.size() * sizeof(float)));
  out.write(reinterpret_cast<const char*>(image.label.data()),
            static_cast<std::streamsize>(image.label.size() * sizeof(std::int32_t)));
  if (!out) throw std::runtime_error("short write on depth file: " + path);
}

DepthImage load_depth(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open depth file: " + path);
  std::string line;
  if (!std::getline(in, line) || line != "ppd_depth 1")
    throw std::runtime_error("bad depth header in " + path);
  DepthImage image;
  while (std::getline(in, line)) {
    if (line == "data") break;
    std::istringstream fields(line);
    std::string key;
    fields >> key;
    if (key == "width")
      fields >> image.width;
    else if (key == "height")
      fields >> image.height;
    else
      throw std::runtime_error("unknown depth header field '" + key + "' in " + path);
    if (!fields) throw std::runtime_error("malformed depth header line in " + path);
  }
  if (image.width <= 0 || image.height <= 0)
    throw std::runtime_error("depth header missing image size in " + path);
  const std::size_t n = static_cast<std::size_t>(image.width) * image.height;
  image.depth.resize(n);
  image.label.resize(n);
  in.read(reinterpret_cast<char*>(image.depth.data()),
          static_cast<std::streamsize>(n * sizeof(float)));
  in.read(reinterpret_cast<char*>(image.label.data()),
          static_cast<std::streamsize>(n * sizeof(std::int32_t)));
  if (!in) throw std::runtime_error("truncated depth payload in " + path);
  return image;
}

namespace {

json object_to_json(const SceneObject& object) {
  json j;
  j["name"] = object.name;
  j["graspable"] = object.graspable;
  j["pose"] = pose_to_json(object.pose);
  if (object.shape == ObjectShape::box) {
    j["shape"] = "box";
    j["half_extents"] = vec3_to_json(object.box_half);
  } else {
    j["shape"] = "cylinder";
    j["radius"] = object.cyl_radius;
    j["half_height"] = object.cyl_half_height;
  }
  return j;
}

SceneObject object_from_json(const json& j) {
  SceneObject object;
  object.name = j.at("name").get<std::string>();
  object.graspable = j.value("graspable", true);
  object.pose = pose_from_json(j.at("pose"));
  const std::string shape = j.at("shape").get<std::string>();
  if (shape == "box") {
    object.shape = ObjectShape::box;
    object.box_half = vec3_from_json(j.at("half_extents"));
  } else if (shape == "cylinder") {
    object.shape = ObjectShape::cylinder;
    object.cyl_radius = j.at("radius").get<double>();
    object.cyl_half_height = j.at("half_height").get<double>();
  } else {
    throw std::runtime_error("unknown object shape: " + shape);
  }
  return object;
}

}  // namespace

void save_scene_manifest(const SynthesizedScene& scene, const std::string& directory) {
  namespace fs = std::filesystem;
  fs::create_directories(directory);

  json j;
  j["format_version"] = 1;
  j["spec"] = {{"seed", scene.spec.seed},
               {"object_count", scene.spec.object_count},
               {"region_center", {scene.spec.region_center.x(), scene.spec.region_center.y()}},
               {"region_half", scene.spec.region_half},
               {"table_top_z", scene.spec.table_top_z}};
  j["camera"] = {{"width", scene.camera.width},   {"height", scene.camera.height},
                 {"fx", scene.camera.fx},         {"fy", scene.camera.fy},
                 {"cx", scene.camera.cx},         {"cy", scene.camera.cy},
                 {"pose", pose_to_json(scene.camera.pose)}};
  j["grid"] = {{"resolution", scene.grid.resolution},
               {"origin", vec3_to_json(scene.grid.origin)},
               {"voxel_size", scene.grid.voxel_size}};
  j["objects"] = json::array();
  for (const SceneObject& object : scene.objects) j["objects"].push_back(object_to_json(object));
  j["depth_file"] = "depth.bin";

  save_depth(scene.depth, (fs::path(directory) / "depth.bin").string());
  std::ofstream out(fs::path(directory) / "scene.json");
  if (!out) throw std::runtime_error("cannot write scene manifest in " + directory);
  out << j.dump(2) << "\n";
}

SynthesizedScene load_scene_manifest(const std::string& directory) {
  namespace fs = std::filesystem;
  std::ifstream in(fs::path(directory) / "scene.json");
  if (!in) throw std::runtime_error("cannot open scene manifest in " + directory);
  json j = json::parse(in);
  if (j.value("format_version", 0) != 1)
    throw std::runtime_error("unsupported scene manifest version in " + directory);

  SynthesizedScene scene;
  const json& spec = j.at("spec");
  scene.spec.seed = spec.at("seed").get<std::uint64_t>();
  scene.spec.object_count = spec.at("object_count").get<int>();
  scene.spec.region_center = Eigen::Vector2d(spec.at("region_center")[0].get<double>(),
                                             spec.at("region_center")[1].get<double>());
  scene.spec.region_half = spec.at("region_half").get<double>();
  scene.spec.table_top_z = spec.at("table_top_z").get<double>();

  const json& cam = j.at("camera");
  scene.camera.width = cam.at("width").get<int>();
  scene.camera.height = cam.at("height").get<int>();
  scene.camera.fx = cam.at("fx").get<double>();
  scene.camera.fy = cam.at("fy").get<double>();
  scene.camera.cx = cam.at("cx").get<double>();
  scene.camera.cy = cam.at("cy").get<double>();
  scene.camera.pose = pose_from_json(cam.at("pose"));

  scene.grid.resolution = j.at("grid").at("resolution").get<int>();
  scene.grid.origin = vec3_from_json(j.at("grid").at("origin"));
  scene.grid.voxel_size = j.at("grid").at("voxel_size").get<double>();

  for (const json& object : j.at("objects")) scene.objects.push_back(object_from_json(object));
  scene.depth = load_depth((fs::path(directory) / j.at("depth_file").get<std::string>()).string());

  scene.environment.push_back(table_body(scene.spec.table_top_z));
  for (std::size_t i = 0; i < scene.objects.size(); ++i) {
    auto cloud = std::make_shared<PointCloud>(
        depth_to_cloud(scene.depth, scene.camera, object_mask(scene.depth, static_cast<int>(i))));
    scene.clouds.push_back(cloud);
    if (!cloud->empty())
      scene.environment.push_back(
          CollisionBody::make_cloud(scene.objects[i].name + "_cloud", cloud));
  }
  return scene;
}

}  // namespace ppd
