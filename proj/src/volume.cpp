#include "ppd/volume.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace ppd {

VoxelVolume::VoxelVolume(const GridSpec& g, std::string sem, float fill)
    : grid(g), semantics(std::move(sem)) {
  if (grid.resolution < 2) throw std::invalid_argument("volume resolution must be >= 2");
  if (!(grid.voxel_size > 0.0)) throw std::invalid_argument("voxel size must be positive");
  const std::size_t n = static_cast<std::size_t>(grid.resolution);
  values.assign(n * n * n, fill);
}

TrilinearSample lookup_trilinear(const VoxelVolume& volume, const Eigen::Vector3d& point) {
  const int d = volume.grid.resolution;
  const Eigen::Vector3d g = (point - volume.grid.origin) / volume.grid.voxel_size;

  TrilinearSample sample;
  Eigen::Vector3d clamped = g;
  for (int axis = 0; axis < 3; ++axis) {
    // The grid owns a half-voxel apron beyond the outermost centers.
    if (g[axis] < -0.5 || g[axis] > d - 0.5) sample.out_of_bounds = true;
    clamped[axis] = std::clamp(g[axis], 0.0, static_cast<double>(d - 1));
  }

  int i0[3];
  double f[3];
  for (int axis = 0; axis < 3; ++axis) {
    i0[axis] = std::min(static_cast<int>(std::floor(clamped[axis])), d - 2);
    i0[axis] = std::max(i0[axis], 0);
    f[axis] = clamped[axis] - i0[axis];
  }

  double value = 0.0;
  for (int cx = 0; cx < 2; ++cx) {
    for (int cy = 0; cy < 2; ++cy) {
      for (int cz = 0; cz < 2; ++cz) {
        const double w = (cx ? f[0] : 1.0 - f[0]) * (cy ? f[1] : 1.0 - f[1]) *
                         (cz ? f[2] : 1.0 - f[2]);
        value += w * volume.at(i0[0] + cx, i0[1] + cy, i0[2] + cz);
      }
    }
  }
  sample.value = value;
  return sample;
}

ScoreBin score_to_bin(double score_newtons) {
  if (score_newtons < 0.0) throw std::invalid_argument("gravity score must be non-negative");
  if (score_newtons < 15.0) return ScoreBin::low;
  if (score_newtons <= 30.0) return ScoreBin::mid;
  return ScoreBin::high;
}

Eigen::Vector3d score_bin_one_hot(ScoreBin bin) {
  Eigen::Vector3d v = Eigen::Vector3d::Zero();
  v[static_cast<int>(bin)] = 1.0;
  return v;
}

const char* score_bin_name(ScoreBin bin) {
  switch (bin) {
    case ScoreBin::low: return "low";
    case ScoreBin::mid: return "mid";
    case ScoreBin::high: return "high";
  }
  return "?";
}

void VoxelVolume::save(const std::string& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open volume file for writing: " + path);
  out.precision(17);
  out << "ppd_volume 1\n";
  out << "semantics " << (semantics.empty() ? "unknown" : semantics) << "\n";
  out << "resolution " << grid.resolution << "\n";
  out << "origin " << grid.origin.x() << " " << grid.origin.y() << " " << grid.origin.z()
      << "\n";
  out << "voxel_size " << grid.voxel_size << "\n";
  out << "layout z_fastest float32_le\n";
  out << "data\n";
  out.write(reinterpret_cast<const char*>(values.data()),
            static_cast<std::streamsize>(values.size() * sizeof(float)));
  if (!out) throw std::runtime_error("short write on volume file: " + path);
}

VoxelVolume VoxelVolume::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open volume file: " + path);
  std::string line;
  if (!std::getline(in, line) || line != "ppd_volume 1")
    throw std::runtime_error("bad volume header in " + path);

  VoxelVolume volume;
  volume.grid.resolution = 0;
  while (std::getline(in, line)) {
    if (line == "data") break;
    std::istringstream fields(line);
    std::string key;
    fields >> key;
    if (key == "semantics") {
      fields >> volume.semantics;
    } else if (key == "resolution") {
      fields >> volume.grid.resolution;
    } else if (key == "origin") {
      fields >> volume.grid.origin.x() >> volume.grid.origin.y() >> volume.grid.origin.z();
    } else if (key == "voxel_size") {
      fields >> volume.grid.voxel_size;
    } else if (key == "layout") {
      // informative only; the format is fixed
    } else {
      throw std::runtime_error("unknown volume header field '" + key + "' in " + path);
    }
    if (!fields) throw std::runtime_error("malformed volume header line in " + path);
  }
  if (volume.grid.resolution < 2 || !(volume.grid.voxel_size > 0.0))
    throw std::runtime_error("volume header missing grid geometry in " + path);

  const std::size_t n = static_cast<std::size_t>(volume.grid.resolution);
  volume.values.resize(n * n * n);
  in.read(reinterpret_cast<char*>(volume.values.data()),
          static_cast<std::streamsize>(volume.values.size() * sizeof(float)));
  if (in.gcount() != static_cast<std::streamsize>(volume.values.size() * sizeof(float)))
    throw std::runtime_error("truncated volume payload in " + path);
  return volume;
}

SceneVolumes SceneVolumes::assemble(VoxelVolume tsdf_full, VoxelVolume tsdf_object,
                                    VoxelVolume grasp_validity, VoxelVolume gravity_score) {
  const GridSpec& g = tsdf_full.grid;
  if (!(tsdf_object.grid == g) || !(grasp_validity.grid == g) || !(gravity_score.grid == g))
    throw std::invalid_argument("scene volumes must share one grid");
  for (float v : grasp_validity.values)
    if (!(v >= 0.0f && v <= 1.0f))
      throw std::invalid_argument("grasp validity values must lie in [0,1]");
  SceneVolumes out;
  out.tsdf_full = std::move(tsdf_full);
  out.tsdf_object = std::move(tsdf_object);
  out.grasp_validity = std::move(grasp_validity);
  out.gravity_score = std::move(gravity_score);
  return out;
}

}  // namespace ppd
