#pragma once

#include <ppd/se3.hpp>

#include <Eigen/Core>
#include <cstddef>
#include <string>
#include <vector>

namespace ppd {

/// Immutable point set with an exact nearest-neighbor accelerator.
///
/// Points live in structure-of-arrays float storage (padded for the vector
/// kernels) and are bucketed into a uniform grid at construction; queries scan
/// grid cells in expanding rings and refine candidates in double precision, so
/// results match a brute-force double-precision scan of the stored points.
class PointCloud {
 public:
  PointCloud() = default;
  explicit PointCloud(const std::vector<Eigen::Vector3d>& points);

  /// Text header ("ppd_cloud 1", count, frame) followed by binary
  /// little-endian float32 xyz triples.
  static PointCloud load(const std::string& path);
  void save(const std::string& path, const std::string& frame = "world") const;

  std::size_t size() const { return count_; }
  bool empty() const { return count_ == 0; }
  Eigen::Vector3d point(std::size_t i) const;
  std::vector<Eigen::Vector3d> points() const;

  struct Nearest {
    std::size_t index = 0;  // index into the original point order
    Eigen::Vector3d point = Eigen::Vector3d::Zero();
    double distance = 0.0;
  };
  /// Exact nearest stored point to `q`. Cloud must be non-empty.
  Nearest nearest(const Eigen::Vector3d& q) const;
  double min_distance(const Eigen::Vector3d& q) const { return nearest(q).distance; }

  Eigen::Vector3d centroid() const { return centroid_; }
  Eigen::Vector3d aabb_min() const { return aabb_min_; }
  Eigen::Vector3d aabb_max() const { return aabb_max_; }
  /// Bounding sphere (centroid-centered), for coarse distance lower bounds.
  Eigen::Vector3d bound_center() const { return centroid_; }
  double bound_radius() const { return bound_radius_; }

  /// Lower bound on min_distance(q), from the bounding sphere.
  double distance_lower_bound(const Eigen::Vector3d& q) const;

  /// New cloud with `pose` applied to every point.
  PointCloud transformed(const Pose& pose) const;

  /// Deterministic subsample (every k-th point) down to at most max_points.
  PointCloud subsampled(std::size_t max_points) const;

 private:
  void build(const std::vector<Eigen::Vector3d>& points);
  std::size_t cell_of(int cx, int cy, int cz) const;

  std::size_t count_ = 0;
  // SoA storage, grid-ordered, padded with kern::pad_value.
  std::vector<float> xs_, ys_, zs_;
  std::vector<std::size_t> original_index_;  // grid order -> original order
  std::vector<double> px_, py_, pz_;         // original order, double precision

  // Uniform grid over the AABB; cell c holds grid-ordered range
  // [cell_begin_[c], cell_begin_[c+1]).
  double cell_size_ = 1.0;
  Eigen::Vector3d grid_origin_ = Eigen::Vector3d::Zero();
  int dims_[3] = {0, 0, 0};
  std::vector<std::size_t> cell_begin_;

  Eigen::Vector3d centroid_ = Eigen::Vector3d::Zero();
  Eigen::Vector3d aabb_min_ = Eigen::Vector3d::Zero();
  Eigen::Vector3d aabb_max_ = Eigen::Vector3d::Zero();
  double bound_radius_ = 0.0;
};

}  // namespace ppd
