#pragma once

#include <Eigen/Core>
#include <cstddef>
#include <string>
#include <vector>

namespace ppd {

/// Axis-aligned voxel grid geometry. `origin` is the world position of the
/// center of voxel (0,0,0); centers step by `voxel_size` along +x/+y/+z.
struct GridSpec {
  int resolution = 40;
  Eigen::Vector3d origin = Eigen::Vector3d::Zero();
  double voxel_size = 0.0075;

  Eigen::Vector3d voxel_center(int ix, int iy, int iz) const {
    return origin + voxel_size * Eigen::Vector3d(ix, iy, iz);
  }
  bool operator==(const GridSpec& other) const {
    return resolution == other.resolution && voxel_size == other.voxel_size &&
           origin == other.origin;
  }
};

/// Scalar field on a GridSpec. Values are stored z-fastest:
/// index (ix * D + iy) * D + iz.
struct VoxelVolume {
  GridSpec grid;
  std::string semantics;  // e.g. "tsdf_full", "grasp_validity"
  std::vector<float> values;

  VoxelVolume() = default;
  VoxelVolume(const GridSpec& g, std::string sem, float fill = 0.0f);

  int resolution() const { return grid.resolution; }
  std::size_t index(int ix, int iy, int iz) const {
    return (static_cast<std::size_t>(ix) * grid.resolution + iy) * grid.resolution + iz;
  }
  float at(int ix, int iy, int iz) const { return values[index(ix, iy, iz)]; }
  float& at(int ix, int iy, int iz) { return values[index(ix, iy, iz)]; }

  /// Text header + binary little-endian float32 payload, z-fastest.
  static VoxelVolume load(const std::string& path);
  void save(const std::string& path) const;
};

struct TrilinearSample {
  double value = 0.0;
  bool out_of_bounds = false;
};

/// Trilinear interpolation of `volume` at a world point. Points beyond the
/// outermost voxel centers are clamped to the boundary value and flagged when
/// they leave the grid's half-voxel apron.
TrilinearSample lookup_trilinear(const VoxelVolume& volume, const Eigen::Vector3d& point);

/// Gravity rejection score bins.
enum class ScoreBin { low, mid, high };

/// Bin edges: low [0,15), mid [15,30], high (30,inf). Negative scores are
/// rejected.
ScoreBin score_to_bin(double score_newtons);

/// One-hot encoding in bin order (low, mid, high).
Eigen::Vector3d score_bin_one_hot(ScoreBin bin);

const char* score_bin_name(ScoreBin bin);

/// The four conditioning/decoder volumes of one scene on a shared grid.
struct SceneVolumes {
  VoxelVolume tsdf_full;
  VoxelVolume tsdf_object;
  VoxelVolume grasp_validity;
  VoxelVolume gravity_score;

  /// Throws unless all four volumes share grid geometry and validity values
  /// lie in [0,1].
  static SceneVolumes assemble(VoxelVolume tsdf_full, VoxelVolume tsdf_object,
                               VoxelVolume grasp_validity, VoxelVolume gravity_score);
};

}  // namespace ppd
