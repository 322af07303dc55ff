#include <ppd/pointcloud.hpp>

#include <ppd/kern.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>
#include <stdexcept>

namespace ppd {

namespace {

struct ScannedRange {
  std::size_t begin;
  std::size_t end;
};

}  // namespace

PointCloud::PointCloud(const std::vector<Eigen::Vector3d>& points) { build(points); }

void PointCloud::build(const std::vector<Eigen::Vector3d>& points) {
  count_ = points.size();
  px_.resize(count_);
  py_.resize(count_);
  pz_.resize(count_);
  for (std::size_t i = 0; i < count_; ++i) {
    px_[i] = points[i].x();
    py_[i] = points[i].y();
    pz_[i] = points[i].z();
  }

  if (count_ == 0) {
    xs_.clear();
    ys_.clear();
    zs_.clear();
    original_index_.clear();
    cell_begin_.assign(2, 0);
    dims_[0] = dims_[1] = dims_[2] = 1;
    centroid_.setZero();
    aabb_min_.setZero();
    aabb_max_.setZero();
    bound_radius_ = 0.0;
    return;
  }

  aabb_min_ = points[0];
  aabb_max_ = points[0];
  Eigen::Vector3d sum = Eigen::Vector3d::Zero();
  for (const Eigen::Vector3d& p : points) {
    aabb_min_ = aabb_min_.cwiseMin(p);
    aabb_max_ = aabb_max_.cwiseMax(p);
    sum += p;
  }
  centroid_ = sum / static_cast<double>(count_);
  bound_radius_ = 0.0;
  for (const Eigen::Vector3d& p : points)
    bound_radius_ = std::max(bound_radius_, (p - centroid_).norm());

  // Cell size targets a few points per cell; capped so the table stays small.
  Eigen::Vector3d extent = aabb_max_ - aabb_min_;
  double max_extent = std::max({extent.x(), extent.y(), extent.z()});
  cell_size_ = std::max(5e-3, max_extent / 64.0);
  grid_origin_ = aabb_min_;
  std::size_t ncells = 1;
  for (int a = 0; a < 3; ++a) {
    dims_[a] = std::max(1, static_cast<int>(std::floor(extent[a] / cell_size_)) + 1);
    ncells *= static_cast<std::size_t>(dims_[a]);
  }

  auto cell_coord = [&](const Eigen::Vector3d& p, int a) {
    int c = static_cast<int>(std::floor((p[a] - grid_origin_[a]) / cell_size_));
    return std::clamp(c, 0, dims_[a] - 1);
  };

  std::vector<std::size_t> cell_index(count_);
  std::vector<std::size_t> counts(ncells, 0);
  for (std::size_t i = 0; i < count_; ++i) {
    std::size_t c = cell_of(cell_coord(points[i], 0), cell_coord(points[i], 1),
                            cell_coord(points[i], 2));
    cell_index[i] = c;
    ++counts[c];
  }

  cell_begin_.assign(ncells + 1, 0);
  for (std::size_t c = 0; c < ncells; ++c) cell_begin_[c + 1] = cell_begin_[c] + counts[c];

  std::size_t padded = kern::padded_size(count_);
  xs_.assign(padded, kern::pad_value);
  ys_.assign(padded, kern::pad_value);
  zs_.assign(padded, kern::pad_value);
  original_index_.resize(count_);
  std::vector<std::size_t> cursor(cell_begin_.begin(), cell_begin_.end() - 1);
  for (std::size_t i = 0; i < count_; ++i) {
    std::size_t slot = cursor[cell_index[i]]++;
    xs_[slot] = static_cast<float>(points[i].x());
    ys_[slot] = static_cast<float>(points[i].y());
    zs_[slot] = static_cast<float>(points[i].z());
    original_index_[slot] = i;
  }
}

std::size_t PointCloud::cell_of(int cx, int cy, int cz) const {
  return (static_cast<std::size_t>(cx) * dims_[1] + cy) * dims_[2] + cz;
}

Eigen::Vector3d PointCloud::point(std::size_t i) const { return {px_[i], py_[i], pz_[i]}; }

std::vector<Eigen::Vector3d> PointCloud::points() const {
  std::vector<Eigen::Vector3d> out(count_);
  for (std::size_t i = 0; i < count_; ++i) out[i] = point(i);
  return out;
}

PointCloud::Nearest PointCloud::nearest(const Eigen::Vector3d& q) const {
  if (count_ == 0) throw std::runtime_error("nearest query on an empty point cloud");

  const float qx = static_cast<float>(q.x());
  const float qy = static_cast<float>(q.y());
  const float qz = static_cast<float>(q.z());
  const double slack = 1e-5;

  std::vector<ScannedRange> scanned;
  float best_f = kern::pad_value;

  auto scan_cell = [&](int cx, int cy, int cz) {
    std::size_t c = cell_of(cx, cy, cz);
    std::size_t begin = cell_begin_[c];
    std::size_t end = cell_begin_[c + 1];
    if (begin == end) return;
    scanned.push_back({begin, end});
    float d = kern::min_dist_sq(xs_.data(), ys_.data(), zs_.data(), begin, end, qx, qy, qz);
    best_f = std::min(best_f, d);
  };

  if (count_ <= 64) {
    scanned.push_back({0, count_});
    best_f = kern::min_dist_sq(xs_.data(), ys_.data(), zs_.data(), 0, count_, qx, qy, qz);
  } else {
    int qc[3];
    for (int a = 0; a < 3; ++a) {
      int c = static_cast<int>(std::floor((q[a] - grid_origin_[a]) / cell_size_));
      qc[a] = std::clamp(c, 0, dims_[a] - 1);
    }
    int max_ring = 0;
    for (int a = 0; a < 3; ++a)
      max_ring = std::max({max_ring, qc[a], dims_[a] - 1 - qc[a]});

    for (int r = 0; r <= max_ring; ++r) {
      // Cells whose Chebyshev distance from the query cell is exactly r.
      for (int dx = -r; dx <= r; ++dx) {
        int cx = qc[0] + dx;
        if (cx < 0 || cx >= dims_[0]) continue;
        for (int dy = -r; dy <= r; ++dy) {
          int cy = qc[1] + dy;
          if (cy < 0 || cy >= dims_[1]) continue;
          for (int dz = -r; dz <= r; ++dz) {
            if (std::max({std::abs(dx), std::abs(dy), std::abs(dz)}) != r) continue;
            int cz = qc[2] + dz;
            if (cz < 0 || cz >= dims_[2]) continue;
            scan_cell(cx, cy, cz);
          }
        }
      }
      // Any cell in ring r+1 or beyond lies at least r*cell_size from q, so
      // once the best candidate beats that bound the search is complete.
      // `slack` absorbs float storage and arithmetic error (valid for
      // coordinates up to tens of meters).
      if (best_f < kern::pad_value &&
          std::sqrt(static_cast<double>(best_f)) + slack <= r * cell_size_)
        break;
    }
  }

  // Refine in double precision: every point whose float distance is within
  // `slack` of the float minimum is a candidate for the true minimum.
  const double limit = std::sqrt(static_cast<double>(best_f)) + slack;
  const float threshold = static_cast<float>(limit * limit);
  Nearest best;
  best.distance = std::numeric_limits<double>::infinity();
  for (const ScannedRange& range : scanned) {
    for (std::size_t i = range.begin; i < range.end; ++i) {
      float dx = xs_[i] - qx;
      float dy = ys_[i] - qy;
      float dz = zs_[i] - qz;
      float d = dx * dx + dy * dy + dz * dz;
      if (d > threshold) continue;
      std::size_t orig = original_index_[i];
      Eigen::Vector3d p(px_[orig], py_[orig], pz_[orig]);
      double exact = (p - q).squaredNorm();
      if (exact < best.distance) {
        best.distance = exact;
        best.index = orig;
        best.point = p;
      }
    }
  }
  best.distance = std::sqrt(best.distance);
  return best;
}

double PointCloud::distance_lower_bound(const Eigen::Vector3d& q) const {
  return (q - centroid_).norm() - bound_radius_;
}

PointCloud PointCloud::transformed(const Pose& pose) const {
  std::vector<Eigen::Vector3d> moved(count_);
  for (std::size_t i = 0; i < count_; ++i) moved[i] = pose.apply(point(i));
  return PointCloud(moved);
}

PointCloud PointCloud::subsampled(std::size_t max_points) const {
  if (count_ <= max_points || max_points == 0) return *this;
  std::size_t stride = (count_ + max_points - 1) / max_points;
  std::vector<Eigen::Vector3d> kept;
  kept.reserve(count_ / stride + 1);
  for (std::size_t i = 0; i < count_; i += stride) kept.push_back(point(i));
  return PointCloud(kept);
}

PointCloud PointCloud::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open point cloud file: " + path);
  std::string magic;
  int version = 0;
  in >> magic >> version;
  if (magic != "ppd_cloud" || version != 1)
    throw std::runtime_error("bad point cloud header in " + path);
  std::string key;
  std::size_t count = 0;
  std::string frame;
  in >> key >> count;
  if (key != "count") throw std::runtime_error("bad point cloud header in " + path);
  in >> key >> frame;
  if (key != "frame") throw std::runtime_error("bad point cloud header in " + path);
  in.ignore(2, '\n');

  std::vector<float> raw(count * 3);
  in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size() * 4));
  if (!in) throw std::runtime_error("truncated point cloud data in " + path);

  std::vector<Eigen::Vector3d> points(count);
  for (std::size_t i = 0; i < count; ++i)
    points[i] = Eigen::Vector3d(raw[3 * i], raw[3 * i + 1], raw[3 * i + 2]);
  return PointCloud(points);
}

void PointCloud::save(const std::string& path, const std::string& frame) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write point cloud file: " + path);
  out << "ppd_cloud 1\n";
  out << "count " << count_ << "\n";
  out << "frame " << frame << "\n";
  std::vector<float> raw(count_ * 3);
  for (std::size_t i = 0; i < count_; ++i) {
    raw[3 * i] = static_cast<float>(px_[i]);
    raw[3 * i + 1] = static_cast<float>(py_[i]);
    raw[3 * i + 2] = static_cast<float>(pz_[i]);
  }
  out.write(reinterpret_cast<const char*>(raw.data()),
            static_cast<std::streamsize>(raw.size() * 4));
  if (!out) throw std::runtime_error("failed writing point cloud file: " + path);
}

}  // namespace ppd
