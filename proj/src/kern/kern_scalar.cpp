#include <ppd/kern.hpp>

#include <algorithm>
#include <cmath>

namespace ppd::kern::detail {

float min_dist_sq_scalar(const float* xs, const float* ys, const float* zs, std::size_t begin,
                         std::size_t end, float qx, float qy, float qz) {
  float best = pad_value;
  for (std::size_t i = begin; i < end; ++i) {
    float dx = xs[i] - qx;
    float dy = ys[i] - qy;
    float dz = zs[i] - qz;
    float d = dx * dx + dy * dy + dz * dz;
    best = std::min(best, d);
  }
  return best;
}

void bake_column_scalar(float dxy_sq, float z0, float dz, float gz, float score, float radius_sq,
                        std::size_t count, float* min_sq, float* best_score) {
  for (std::size_t k = 0; k < count; ++k) {
    float t = z0 + static_cast<float>(k) * dz - gz;
    float d = dxy_sq + t * t;
    min_sq[k] = std::min(min_sq[k], d);
    if (d <= radius_sq) best_score[k] = std::max(best_score[k], score);
  }
}

void tsdf_column_scalar(const float* depth, int width, int height, float fx, float fy, float cx,
                        float cy, float cam_x, float cam_y, float cam_z, float wx, float wy,
                        float z0, float dz, float trunc, std::size_t count, float* out) {
  float xc = wx - cam_x;
  float yc = -(wy - cam_y);
  for (std::size_t k = 0; k < count; ++k) {
    float zc = cam_z - (z0 + static_cast<float>(k) * dz);
    float value = 1.0f;
    if (zc > 0.0f) {
      // Bounds-check before the int cast; a grazing ray can project far
      // outside the image.
      float uf = std::floor(fx * xc / zc + cx + 0.5f);
      float vf = std::floor(fy * yc / zc + cy + 0.5f);
      if (uf >= 0.0f && uf < static_cast<float>(width) && vf >= 0.0f &&
          vf < static_cast<float>(height)) {
        int u = static_cast<int>(uf);
        int v = static_cast<int>(vf);
        float d = depth[static_cast<std::size_t>(v) * width + u];
        if (d > 0.0f) value = std::clamp((d - zc) / trunc, -1.0f, 1.0f);
      }
    }
    out[k] = value;
  }
}

}  // namespace ppd::kern::detail
