#pragma once

#include <cstddef>

/// Runtime-dispatched compute kernels. Every kernel has a scalar reference
/// implementation and, on x86-64 builds that support it, an AVX2 variant
/// selected at startup. `set_backend` forces one (tests compare the two).
/// All float arrays are structure-of-arrays and padded to a multiple of 8
/// entries with `pad_value` so vector loops never read past real data into
/// uninitialized memory.
namespace ppd::kern {

enum class Backend { scalar, avx2 };

/// Sentinel stored in array padding; far enough away to never win a min.
constexpr float pad_value = 1e30f;

/// Round `n` up to the padded storage size.
std::size_t padded_size(std::size_t n);

bool backend_supported(Backend backend);
Backend active_backend();

/// Force a backend; throws std::runtime_error if unsupported on this host.
void set_backend(Backend backend);

/// Minimum squared distance from (qx,qy,qz) to points [begin,end) of an SoA
/// cloud. Returns pad_value*pad_value-ish large value when the range is empty.
float min_dist_sq(const float* xs, const float* ys, const float* zs, std::size_t begin,
                  std::size_t end, float qx, float qy, float qz);

/// One grasp's contribution to a z-contiguous voxel column during decoder
/// volume baking. Lane k lies at world z = z0 + k*dz; dxy_sq is the squared
/// horizontal distance from the column to the grasp. Updates, per lane:
///   d           = dxy_sq + (z0 + k*dz - gz)^2
///   min_sq[k]   = min(min_sq[k], d)
///   best_score[k] = max(best_score[k], score)   where d <= radius_sq
void bake_column(float dxy_sq, float z0, float dz, float gz, float score, float radius_sq,
                 std::size_t count, float* min_sq, float* best_score);

/// Projective truncated signed distance for one z-contiguous voxel column
/// seen by a straight-down camera (camera axes: x_c = +x_w, y_c = -y_w,
/// z_c = -z_w, centered at (cam_x, cam_y, cam_z)). Lane k sits at world
/// z = z0 + k*dz. Depth is sampled nearest-neighbor; lanes that project
/// outside the image or hit a non-positive depth read as unobserved (+1).
/// Output is (depth - z_cam) / trunc clamped to [-1, 1].
void tsdf_column(const float* depth, int width, int height, float fx, float fy, float cx, float cy,
                 float cam_x, float cam_y, float cam_z, float wx, float wy, float z0, float dz,
                 float trunc, std::size_t count, float* out);

namespace detail {
using MinDistSqFn = float (*)(const float*, const float*, const float*, std::size_t, std::size_t,
                              float, float, float);
using BakeColumnFn = void (*)(float, float, float, float, float, float, std::size_t, float*,
                              float*);
using TsdfColumnFn = void (*)(const float*, int, int, float, float, float, float, float, float,
                              float, float, float, float, float, float, std::size_t, float*);

float min_dist_sq_scalar(const float* xs, const float* ys, const float* zs, std::size_t begin,
                         std::size_t end, float qx, float qy, float qz);
void bake_column_scalar(float dxy_sq, float z0, float dz, float gz, float score, float radius_sq,
                        std::size_t count, float* min_sq, float* best_score);
void tsdf_column_scalar(const float* depth, int width, int height, float fx, float fy, float cx,
                        float cy, float cam_x, float cam_y, float cam_z, float wx, float wy,
                        float z0, float dz, float trunc, std::size_t count, float* out);

#if defined(PPD_KERNELS_AVX2)
float min_dist_sq_avx2(const float* xs, const float* ys, const float* zs, std::size_t begin,
                       std::size_t end, float qx, float qy, float qz);
void bake_column_avx2(float dxy_sq, float z0, float dz, float gz, float score, float radius_sq,
                      std::size_t count, float* min_sq, float* best_score);
void tsdf_column_avx2(const float* depth, int width, int height, float fx, float fy, float cx,
                      float cy, float cam_x, float cam_y, float cam_z, float wx, float wy,
                      float z0, float dz, float trunc, std::size_t count, float* out);
#endif
}  // namespace detail

}  // namespace ppd::kern
