#include <ppd/kern.hpp>

#if defined(PPD_KERNELS_AVX2)

#include <immintrin.h>

#include <algorithm>
#include <cmath>

// Bitwise equivalence with the scalar kernels is part of the contract, so the
// vector code mirrors the scalar expression trees exactly: same operations in
// the same order per lane, lane indices taken from the global counter, no fused
// multiply-add, and rounding via floor(x + 0.5) in both paths. Tails shorter
// than a vector run the identical scalar expressions inline.
namespace ppd::kern::detail {

float min_dist_sq_avx2(const float* xs, const float* ys, const float* zs, std::size_t begin,
                       std::size_t end, float qx, float qy, float qz) {
  __m256 best8 = _mm256_set1_ps(pad_value);
  __m256 qx8 = _mm256_set1_ps(qx);
  __m256 qy8 = _mm256_set1_ps(qy);
  __m256 qz8 = _mm256_set1_ps(qz);
  std::size_t i = begin;
  for (; i + 8 <= end; i += 8) {
    __m256 dx = _mm256_sub_ps(_mm256_loadu_ps(xs + i), qx8);
    __m256 dy = _mm256_sub_ps(_mm256_loadu_ps(ys + i), qy8);
    __m256 dz = _mm256_sub_ps(_mm256_loadu_ps(zs + i), qz8);
    __m256 d = _mm256_add_ps(_mm256_add_ps(_mm256_mul_ps(dx, dx), _mm256_mul_ps(dy, dy)),
                             _mm256_mul_ps(dz, dz));
    best8 = _mm256_min_ps(best8, d);
  }
  alignas(32) float lanes[8];
  _mm256_store_ps(lanes, best8);
  float best = pad_value;
  for (float lane : lanes) best = std::min(best, lane);
  for (; i < end; ++i) {
    float dx = xs[i] - qx;
    float dy = ys[i] - qy;
    float dz = zs[i] - qz;
    float d = dx * dx + dy * dy + dz * dz;
    best = std::min(best, d);
  }
  return best;
}

void bake_column_avx2(float dxy_sq, float z0, float dz, float gz, float score, float radius_sq,
                      std::size_t count, float* min_sq, float* best_score) {
  const __m256 lane_offsets = _mm256_setr_ps(0, 1, 2, 3, 4, 5, 6, 7);
  __m256 z08 = _mm256_set1_ps(z0);
  __m256 dz8 = _mm256_set1_ps(dz);
  __m256 gz8 = _mm256_set1_ps(gz);
  __m256 dxy8 = _mm256_set1_ps(dxy_sq);
  __m256 score8 = _mm256_set1_ps(score);
  __m256 radius8 = _mm256_set1_ps(radius_sq);
  std::size_t k = 0;
  for (; k + 8 <= count; k += 8) {
    __m256 kf = _mm256_add_ps(_mm256_set1_ps(static_cast<float>(k)), lane_offsets);
    __m256 t = _mm256_sub_ps(_mm256_add_ps(z08, _mm256_mul_ps(kf, dz8)), gz8);
    __m256 d = _mm256_add_ps(dxy8, _mm256_mul_ps(t, t));
    __m256 old_min = _mm256_loadu_ps(min_sq + k);
    _mm256_storeu_ps(min_sq + k, _mm256_min_ps(old_min, d));
    __m256 within = _mm256_cmp_ps(d, radius8, _CMP_LE_OQ);
    __m256 old_best = _mm256_loadu_ps(best_score + k);
    __m256 raised = _mm256_max_ps(old_best, score8);
    _mm256_storeu_ps(best_score + k, _mm256_blendv_ps(old_best, raised, within));
  }
  for (; k < count; ++k) {
    float t = z0 + static_cast<float>(k) * dz - gz;
    float d = dxy_sq + t * t;
    min_sq[k] = std::min(min_sq[k], d);
    if (d <= radius_sq) best_score[k] = std::max(best_score[k], score);
  }
}

void tsdf_column_avx2(const float* depth, int width, int height, float fx, float fy, float cx,
                      float cy, float cam_x, float cam_y, float cam_z, float wx, float wy,
                      float z0, float dz, float trunc, std::size_t count, float* out) {
  const float xc = wx - cam_x;
  const float yc = -(wy - cam_y);
  const __m256 lane_offsets = _mm256_setr_ps(0, 1, 2, 3, 4, 5, 6, 7);
  const __m256 one = _mm256_set1_ps(1.0f);
  const __m256 neg_one = _mm256_set1_ps(-1.0f);
  const __m256 half = _mm256_set1_ps(0.5f);
  const __m256 zero = _mm256_setzero_ps();
  const __m256 fxxc = _mm256_set1_ps(fx * xc);
  const __m256 fyyc = _mm256_set1_ps(fy * yc);
  const __m256 cx8 = _mm256_set1_ps(cx);
  const __m256 cy8 = _mm256_set1_ps(cy);
  const __m256 camz8 = _mm256_set1_ps(cam_z);
  const __m256 z08 = _mm256_set1_ps(z0);
  const __m256 dz8 = _mm256_set1_ps(dz);
  const __m256 trunc8 = _mm256_set1_ps(trunc);
  const __m256i width8 = _mm256_set1_epi32(width);
  const __m256i height8 = _mm256_set1_epi32(height);
  std::size_t k = 0;
  for (; k + 8 <= count; k += 8) {
    __m256 kf = _mm256_add_ps(_mm256_set1_ps(static_cast<float>(k)), lane_offsets);
    __m256 zc = _mm256_sub_ps(camz8, _mm256_add_ps(z08, _mm256_mul_ps(kf, dz8)));
    __m256 in_front = _mm256_cmp_ps(zc, zero, _CMP_GT_OQ);
    __m256 uf = _mm256_floor_ps(_mm256_add_ps(_mm256_add_ps(_mm256_div_ps(fxxc, zc), cx8), half));
    __m256 vf = _mm256_floor_ps(_mm256_add_ps(_mm256_add_ps(_mm256_div_ps(fyyc, zc), cy8), half));
    __m256i u = _mm256_cvttps_epi32(uf);
    __m256i v = _mm256_cvttps_epi32(vf);
    __m256i in_u = _mm256_and_si256(_mm256_cmpgt_epi32(u, _mm256_set1_epi32(-1)),
                                    _mm256_cmpgt_epi32(width8, u));
    __m256i in_v = _mm256_and_si256(_mm256_cmpgt_epi32(v, _mm256_set1_epi32(-1)),
                                    _mm256_cmpgt_epi32(height8, v));
    __m256i valid_i =
        _mm256_and_si256(_mm256_and_si256(in_u, in_v), _mm256_castps_si256(in_front));
    __m256i idx = _mm256_add_epi32(_mm256_mullo_epi32(v, width8), u);
    idx = _mm256_and_si256(idx, valid_i);
    __m256 d = _mm256_i32gather_ps(depth, idx, 4);
    __m256 observed = _mm256_cmp_ps(d, zero, _CMP_GT_OQ);
    __m256 sdf = _mm256_div_ps(_mm256_sub_ps(d, zc), trunc8);
    __m256 clamped = _mm256_min_ps(_mm256_max_ps(sdf, neg_one), one);
    __m256 use = _mm256_and_ps(_mm256_castsi256_ps(valid_i), observed);
    _mm256_storeu_ps(out + k, _mm256_blendv_ps(one, clamped, use));
  }
  for (; k < count; ++k) {
    float zc = cam_z - (z0 + static_cast<float>(k) * dz);
    float value = 1.0f;
    if (zc > 0.0f) {
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

#endif  // PPD_KERNELS_AVX2
