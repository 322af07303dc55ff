#include <ppd/kern.hpp>

#include <stdexcept>

namespace ppd::kern {

namespace {

bool avx2_available() {
#if defined(PPD_KERNELS_AVX2)
  return __builtin_cpu_supports("avx2") != 0;
#else
  return false;
#endif
}

struct Dispatch {
  Backend backend = Backend::scalar;
  detail::MinDistSqFn min_dist_sq = &detail::min_dist_sq_scalar;
  detail::BakeColumnFn bake_column = &detail::bake_column_scalar;
  detail::TsdfColumnFn tsdf_column = &detail::tsdf_column_scalar;

  void select(Backend b) {
    backend = b;
#if defined(PPD_KERNELS_AVX2)
    if (b == Backend::avx2) {
      min_dist_sq = &detail::min_dist_sq_avx2;
      bake_column = &detail::bake_column_avx2;
      tsdf_column = &detail::tsdf_column_avx2;
      return;
    }
#endif
    min_dist_sq = &detail::min_dist_sq_scalar;
    bake_column = &detail::bake_column_scalar;
    tsdf_column = &detail::tsdf_column_scalar;
  }
};

Dispatch& dispatch() {
  static Dispatch d = [] {
    Dispatch init;
    init.select(avx2_available() ? Backend::avx2 : Backend::scalar);
    return init;
  }();
  return d;
}

}  // namespace

std::size_t padded_size(std::size_t n) { return (n + 7) / 8 * 8; }

bool backend_supported(Backend backend) {
  return backend == Backend::scalar || (backend == Backend::avx2 && avx2_available());
}

Backend active_backend() { return dispatch().backend; }

void set_backend(Backend backend) {
  if (!backend_supported(backend)) throw std::runtime_error("kern backend not supported on this host");
  dispatch().select(backend);
}

float min_dist_sq(const float* xs, const float* ys, const float* zs, std::size_t begin,
                  std::size_t end, float qx, float qy, float qz) {
  return dispatch().min_dist_sq(xs, ys, zs, begin, end, qx, qy, qz);
}

void bake_column(float dxy_sq, float z0, float dz, float gz, float score, float radius_sq,
                 std::size_t count, float* min_sq, float* best_score) {
  dispatch().bake_column(dxy_sq, z0, dz, gz, score, radius_sq, count, min_sq, best_score);
}

void tsdf_column(const float* depth, int width, int height, float fx, float fy, float cx, float cy,
                 float cam_x, float cam_y, float cam_z, float wx, float wy, float z0, float dz,
                 float trunc, std::size_t count, float* out) {
  dispatch().tsdf_column(depth, width, height, fx, fy, cx, cy, cam_x, cam_y, cam_z, wx, wy, z0, dz,
                         trunc, count, out);
}

}  // namespace ppd::kern
