#include "ppd/grasps.hpp"

#include <Eigen/Geometry>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

#include "ppd/jsonio.hpp"
#include "ppd/kern.hpp"

namespace ppd {

using nlohmann::json;
using jsonio::pose_from_json;
using jsonio::pose_to_json;
using jsonio::vec3_from_json;
using jsonio::vec3_to_json;

namespace {

constexpr double kScoreScale = 45.0;      // newtons at zero centroid distance
constexpr double kScoreFalloff = 0.075;   // meters to reach zero
constexpr double kMaxApproachUp = 0.3;    // world-z component; rejects from-below grasps
const double kInsertDepths[] = {0.012, 0.026, 0.040};

double grasp_score(const Eigen::Vector3d& tcp, const Eigen::Vector3d& centroid) {
  const double d = (tcp - centroid).norm();
  return kScoreScale * std::max(0.0, 1.0 - d / kScoreFalloff);
}

Pose hand_frame(const Eigen::Vector3d& closing, const Eigen::Vector3d& approach,
                const Eigen::Vector3d& tcp) {
  Pose pose;
  pose.rotation.col(0) = closing;
  pose.rotation.col(1) = approach.cross(closing);
  pose.rotation.col(2) = approach;
  pose.translation = tcp;
  return pose;
}

void push_candidate(std::vector<GraspCandidate>& out, const Eigen::Vector3d& closing,
                    const Eigen::Vector3d& approach, const Eigen::Vector3d& tcp, double width,
                    const Eigen::Vector3d& centroid) {
  GraspCandidate grasp;
  grasp.hand_pose = hand_frame(closing, approach, tcp);
  grasp.width = width;
  grasp.score = grasp_score(tcp, centroid);
  grasp.bin = score_to_bin(grasp.score);
  grasp.contact_a = tcp + 0.5 * width * closing;
  grasp.contact_b = tcp - 0.5 * width * closing;
  grasp.normal_a = closing;
  grasp.normal_b = -closing;
  out.push_back(std::move(grasp));
}

void enumerate_box_grasps(const SceneObject& object, std::vector<GraspCandidate>& out) {
  const Eigen::Matrix3d& axes = object.pose.rotation;
  const Eigen::Vector3d half = object.box_half;
  const Eigen::Vector3d centroid = object.centroid();

  for (int ci = 0; ci < 3; ++ci) {
    const double width = 2.0 * half[ci];
    if (width > max_grasp_width()) continue;
    const Eigen::Vector3d closing = axes.col(ci);

    for (int aj = 0; aj < 3; ++aj) {
      if (aj == ci) continue;
      const int ek = 3 - ci - aj;  // remaining axis, for lateral offsets
      for (int sign : {1, -1}) {
        const Eigen::Vector3d approach = -sign * axes.col(aj);
        if (approach.z() > kMaxApproachUp) continue;

        std::vector<double> offsets = {0.0};
        if (half[ek] > 0.02) {
          offsets.push_back(0.5 * half[ek]);
          offsets.push_back(-0.5 * half[ek]);
        }
        for (double depth : kInsertDepths) {
          if (depth > 2.0 * half[aj] - 0.005) continue;
          const Eigen::Vector3d face = centroid + sign * axes.col(aj) * half[aj];
          for (double offset : offsets) {
            const Eigen::Vector3d tcp = face + approach * depth + axes.col(ek) * offset;
            push_candidate(out, closing, approach, tcp, width, centroid);
          }
        }
      }
    }
  }
}

void enumerate_cylinder_grasps(const SceneObject& object, std::vector<GraspCandidate>& out) {
  const double width = 2.0 * object.cyl_radius;
  if (width > max_grasp_width()) return;  // only radial closings exist
  const Eigen::Vector3d centroid = object.centroid();
  const Eigen::Vector3d axis = object.pose.rotation.col(2);
  const double top = object.top_height();

  // Top-down grasps along the axis, free in yaw.
  for (int k = 0; k < 12; ++k) {
    const double yaw = k * (M_PI / 6.0);
    const Eigen::Vector3d closing(std::cos(yaw), std::sin(yaw), 0.0);
    const Eigen::Vector3d approach(0.0, 0.0, -1.0);
    for (double depth : kInsertDepths) {
      if (depth > 2.0 * object.cyl_half_height - 0.005) continue;
      Eigen::Vector3d tcp = centroid;
      tcp.z() = top - depth;
      push_candidate(out, closing, approach, tcp, width, centroid);
    }
  }

  // Horizontal radial grasps at mid height (tall objects; short ones fall to
  // the collision filter when the wrist reaches the table).
  if (std::abs(axis.z()) > 0.99) {
    for (int k = 0; k < 8; ++k) {
      const double psi = k * (M_PI / 4.0);
      const Eigen::Vector3d approach(std::cos(psi), std::sin(psi), 0.0);
      const Eigen::Vector3d closing(-std::sin(psi), std::cos(psi), 0.0);
      push_candidate(out, closing, approach, centroid, width, centroid);
    }
  }
}

}  // namespace

bool hand_pose_collides(const KinematicChain& chain, const Pose& hand_pose,
                        const Environment& environment, double clearance) {
  for (const LinkSphere& sphere : chain.spheres()) {
    if (!sphere.tcp_frame) continue;
    const Eigen::Vector3d center = hand_pose.apply(sphere.center);
    for (const CollisionBody& body : environment) {
      if (body.attached_link >= 0) continue;
      const double d = body_point_distance(body, body.pose, center).distance - sphere.radius;
      if (d < clearance) return true;
    }
  }
  return false;
}

std::vector<GraspCandidate> synthesize_grasps(const SceneObject& object,
                                              const KinematicChain& chain,
                                              const Environment& obstacles, double clearance) {
  std::vector<GraspCandidate> raw;
  if (object.shape == ObjectShape::box)
    enumerate_box_grasps(object, raw);
  else
    enumerate_cylinder_grasps(object, raw);

  Environment check = obstacles;
  check.push_back(object.collision_body());

  std::vector<GraspCandidate> kept;
  for (GraspCandidate& grasp : raw)
    if (!hand_pose_collides(chain, grasp.hand_pose, check, clearance))
      kept.push_back(std::move(grasp));
  return kept;
}

std::pair<VoxelVolume, VoxelVolume> bake_decoder_volumes(
    const std::vector<GraspCandidate>& grasps, const GridSpec& grid) {
  VoxelVolume validity(grid, "grasp_validity", 0.0f);
  VoxelVolume score(grid, "gravity_score", 0.0f);

  const int d = grid.resolution;
  const double s = grid.voxel_size;
  const float radius_sq = static_cast<float>((2.0 * s) * (2.0 * s));

  std::vector<float> min_sq(static_cast<std::size_t>(d));
  std::vector<float> best_score(static_cast<std::size_t>(d));

  for (int ix = 0; ix < d; ++ix) {
    for (int iy = 0; iy < d; ++iy) {
      std::fill(min_sq.begin(), min_sq.end(), kern::pad_value);
      std::fill(best_score.begin(), best_score.end(), 0.0f);
      const Eigen::Vector3d base = grid.voxel_center(ix, iy, 0);
      for (const GraspCandidate& grasp : grasps) {
        const Eigen::Vector3d& tcp = grasp.hand_pose.translation;
        const float dx = static_cast<float>(base.x() - tcp.x());
        const float dy = static_cast<float>(base.y() - tcp.y());
        kern::bake_column(dx * dx + dy * dy, static_cast<float>(base.z()),
                          static_cast<float>(s), static_cast<float>(tcp.z()),
                          static_cast<float>(grasp.score), radius_sq,
                          static_cast<std::size_t>(d), min_sq.data(), best_score.data());
      }
      for (int iz = 0; iz < d; ++iz) {
        const double dist = std::sqrt(static_cast<double>(min_sq[iz]));
        const double v = std::clamp((2.0 * s - dist) / s, 0.0, 1.0);
        validity.at(ix, iy, iz) = static_cast<float>(v);
        score.at(ix, iy, iz) = best_score[iz];
      }
    }
  }
  return {std::move(validity), std::move(score)};
}

void save_grasps(const std::vector<GraspCandidate>& grasps, const std::string& path) {
  json j;
  j["format_version"] = 1;
  j["grasps"] = json::array();
  for (const GraspCandidate& grasp : grasps) {
    json g;
    g["pose"] = pose_to_json(grasp.hand_pose);
    g["width"] = grasp.width;
    g["score"] = grasp.score;
    g["bin"] = score_bin_name(grasp.bin);
    g["contact_a"] = vec3_to_json(grasp.contact_a);
    g["contact_b"] = vec3_to_json(grasp.contact_b);
    g["normal_a"] = vec3_to_json(grasp.normal_a);
    g["normal_b"] = vec3_to_json(grasp.normal_b);
    j["grasps"].push_back(std::move(g));
  }
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write grasp file: " + path);
  out << j.dump(2) << "\n";
}

std::vector<GraspCandidate> load_grasps(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open grasp file: " + path);
  json j = json::parse(in);
  if (j.value("format_version", 0) != 1)
    throw std::runtime_error("unsupported grasp file version: " + path);

  std::vector<GraspCandidate> grasps;
  for (const json& g : j.at("grasps")) {
    GraspCandidate grasp;
    grasp.hand_pose = pose_from_json(g.at("pose"));
    grasp.width = g.at("width").get<double>();
    grasp.score = g.at("score").get<double>();
    grasp.bin = score_to_bin(grasp.score);
    grasp.contact_a = vec3_from_json(g.at("contact_a"));
    grasp.contact_b = vec3_from_json(g.at("contact_b"));
    grasp.normal_a = vec3_from_json(g.at("normal_a"));
    grasp.normal_b = vec3_from_json(g.at("normal_b"));
    grasps.push_back(std::move(grasp));
  }
  return grasps;
}

}  // namespace ppd
