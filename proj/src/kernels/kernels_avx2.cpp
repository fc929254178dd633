// Compiled with -mavx2. Only reached after a runtime CPU check.

#include <immintrin.h>

#include <cstdint>

#include "mfseg/kernels.hpp"

namespace mfseg::kernels {

namespace {

inline __m256d abs_pd(__m256d v) {
  const __m256d mask = _mm256_castsi256_pd(_mm256_set1_epi64x(0x7fffffffffffffffLL));
  return _mm256_and_pd(v, mask);
}

}  // namespace

ArgminHit windowed_argmin_avx2(const Location4& s, double value, const CandidateBlock& b,
                               const WindowMetric& m) {
  const __m256d sx = _mm256_set1_pd(s.x);
  const __m256d sy = _mm256_set1_pd(s.y);
  const __m256d sz = _mm256_set1_pd(s.z);
  const __m256d st = _mm256_set1_pd(s.t);
  const __m256d sv = _mm256_set1_pd(value);
  const __m256d hx = _mm256_set1_pd(m.half_width[0]);
  const __m256d hy = _mm256_set1_pd(m.half_width[1]);
  const __m256d hz = _mm256_set1_pd(m.half_width[2]);
  const __m256d ht = _mm256_set1_pd(m.half_width[3]);
  const __m256d cf = _mm256_set1_pd(m.cf);
  const __m256d wd = _mm256_set1_pd(m.wd);
  const __m256d wv = _mm256_set1_pd(m.wv);
  const __m256d step = _mm256_set1_pd(static_cast<double>(kLanes));

  __m256d best = _mm256_set1_pd(std::numeric_limits<double>::infinity());
  __m256d best_idx = _mm256_set1_pd(-1.0);
  __m256d idx = _mm256_setr_pd(0.0, 1.0, 2.0, 3.0);

  for (std::size_t j = 0; j < b.count; j += kLanes) {
    const __m256d dx = _mm256_sub_pd(sx, _mm256_loadu_pd(b.x + j));
    const __m256d dy = _mm256_sub_pd(sy, _mm256_loadu_pd(b.y + j));
    const __m256d dz = _mm256_sub_pd(sz, _mm256_loadu_pd(b.z + j));
    const __m256d dtr = _mm256_sub_pd(st, _mm256_loadu_pd(b.t + j));
    __m256d in = _mm256_cmp_pd(abs_pd(dx), hx, _CMP_LE_OQ);
    in = _mm256_and_pd(in, _mm256_cmp_pd(abs_pd(dy), hy, _CMP_LE_OQ));
    in = _mm256_and_pd(in, _mm256_cmp_pd(abs_pd(dz), hz, _CMP_LE_OQ));
    in = _mm256_and_pd(in, _mm256_cmp_pd(abs_pd(dtr), ht, _CMP_LE_OQ));
    if (_mm256_movemask_pd(in) == 0) {
      idx = _mm256_add_pd(idx, step);
      continue;
    }
    const __m256d dt = _mm256_mul_pd(dtr, cf);
    __m256d sum = _mm256_add_pd(_mm256_mul_pd(dx, dx), _mm256_mul_pd(dy, dy));
    sum = _mm256_add_pd(sum, _mm256_mul_pd(dz, dz));
    sum = _mm256_add_pd(sum, _mm256_mul_pd(dt, dt));
    const __m256d dv = abs_pd(_mm256_sub_pd(sv, _mm256_loadu_pd(b.value + j)));
    const __m256d vterm = _mm256_mul_pd(_mm256_mul_pd(wv, dv), _mm256_loadu_pd(b.has_value + j));
    const __m256d d = _mm256_add_pd(vterm, _mm256_mul_pd(wd, _mm256_sqrt_pd(sum)));
    const __m256d upd = _mm256_and_pd(in, _mm256_cmp_pd(d, best, _CMP_LT_OQ));
    best = _mm256_blendv_pd(best, d, upd);
    best_idx = _mm256_blendv_pd(best_idx, idx, upd);
    idx = _mm256_add_pd(idx, step);
  }

  alignas(32) double lane_best[kLanes];
  alignas(32) double lane_idx[kLanes];
  _mm256_store_pd(lane_best, best);
  _mm256_store_pd(lane_idx, best_idx);
  ArgminHit hit;
  for (std::size_t l = 0; l < kLanes; ++l) {
    if (lane_idx[l] < 0) continue;
    const auto li = static_cast<std::ptrdiff_t>(lane_idx[l]);
    if (lane_best[l] < hit.distance || (lane_best[l] == hit.distance && li < hit.index)) {
      hit.distance = lane_best[l];
      hit.index = li;
    }
  }
  return hit;
}

MinMax minmax_avx2(std::span<const double> values) {
  const std::size_t n = values.size();
  const double* p = values.data();
  __m256d lo = _mm256_set1_pd(std::numeric_limits<double>::infinity());
  __m256d hi = _mm256_set1_pd(-std::numeric_limits<double>::infinity());
  std::size_t i = 0;
  for (; i + kLanes <= n; i += kLanes) {
    const __m256d v = _mm256_loadu_pd(p + i);
    lo = _mm256_min_pd(lo, v);
    hi = _mm256_max_pd(hi, v);
  }
  alignas(32) double l[kLanes];
  alignas(32) double h[kLanes];
  _mm256_store_pd(l, lo);
  _mm256_store_pd(h, hi);
  MinMax r;
  for (std::size_t k = 0; k < kLanes; ++k) {
    r.min = l[k] < r.min ? l[k] : r.min;
    r.max = h[k] > r.max ? h[k] : r.max;
  }
  for (; i < n; ++i) {
    r.min = p[i] < r.min ? p[i] : r.min;
    r.max = p[i] > r.max ? p[i] : r.max;
  }
  return r;
}

}  // namespace mfseg::kernels
