// SPDX-License-Identifier: Apache-2.0
//
// AVX2 variants. Compiled with -mavx2 only (no -mfma) so every multiply and
// add rounds exactly as in kernels_scalar.cpp.

#include <immintrin.h>

#include <cmath>

#include "kernels_impl.hpp"

namespace sspam::kernels::detail {
namespace {

inline __m256d abs_pd(__m256d x) { return _mm256_andnot_pd(_mm256_set1_pd(-0.0), x); }

void matmul(const double* a, const double* b, double* c, std::size_t n, std::size_t k,
            std::size_t m) {
  const std::size_t blocked = m - m % 4;
  for (std::size_t i = 0; i < n; ++i) {
    double* crow = c + i * m;
    for (std::size_t j = 0; j < m; ++j) crow[j] = 0.0;
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = a[i * k + p];
      const __m256d va = _mm256_set1_pd(aip);
      const double* brow = b + p * m;
      std::size_t j = 0;
      for (; j < blocked; j += 4) {
        const __m256d prod = _mm256_mul_pd(va, _mm256_loadu_pd(brow + j));
        _mm256_storeu_pd(crow + j, _mm256_add_pd(_mm256_loadu_pd(crow + j), prod));
      }
      for (; j < m; ++j) crow[j] += aip * brow[j];
    }
  }
}

double sum_squares(const double* x, std::size_t n) {
  const std::size_t blocked = n - n % 4;
  __m256d acc = _mm256_setzero_pd();
  for (std::size_t i = 0; i < blocked; i += 4) {
    const __m256d v = _mm256_loadu_pd(x + i);
    acc = _mm256_add_pd(acc, _mm256_mul_pd(v, v));
  }
  alignas(32) double lane[4];
  _mm256_store_pd(lane, acc);
  double total = (lane[0] + lane[1]) + (lane[2] + lane[3]);
  for (std::size_t i = blocked; i < n; ++i) total += x[i] * x[i];
  return total;
}

double max_abs(const double* x, std::size_t n) {
  const std::size_t blocked = n - n % 4;
  __m256d acc = _mm256_setzero_pd();
  for (std::size_t i = 0; i < blocked; i += 4) {
    // max_pd returns the second operand when either is NaN, so NaN never wins.
    acc = _mm256_max_pd(abs_pd(_mm256_loadu_pd(x + i)), acc);
  }
  alignas(32) double lane[4];
  _mm256_store_pd(lane, acc);
  double best = 0.0;
  for (double v : lane) {
    if (v > best) best = v;
  }
  for (std::size_t i = blocked; i < n; ++i) {
    const double a = std::fabs(x[i]);
    if (a > best) best = a;
  }
  return best;
}

void scale(double* x, std::size_t n, double c) {
  const std::size_t blocked = n - n % 4;
  const __m256d vc = _mm256_set1_pd(c);
  std::size_t i = 0;
  for (; i < blocked; i += 4) _mm256_storeu_pd(x + i, _mm256_mul_pd(_mm256_loadu_pd(x + i), vc));
  for (; i < n; ++i) x[i] *= c;
}

void adam_update(double* w, double* m, double* v, const double* g, std::size_t n,
                 const AdamCoeffs& k) {
  const std::size_t blocked = n - n % 4;
  const __m256d b1 = _mm256_set1_pd(k.beta1);
  const __m256d b2 = _mm256_set1_pd(k.beta2);
  const __m256d omb1 = _mm256_set1_pd(k.one_minus_beta1);
  const __m256d omb2 = _mm256_set1_pd(k.one_minus_beta2);
  const __m256d c1 = _mm256_set1_pd(k.bias1);
  const __m256d c2 = _mm256_set1_pd(k.bias2);
  const __m256d lr = _mm256_set1_pd(k.lr);
  const __m256d eps = _mm256_set1_pd(k.eps);
  std::size_t i = 0;
  for (; i < blocked; i += 4) {
    const __m256d gi = _mm256_loadu_pd(g + i);
    const __m256d mi =
        _mm256_add_pd(_mm256_mul_pd(b1, _mm256_loadu_pd(m + i)), _mm256_mul_pd(omb1, gi));
    const __m256d vi = _mm256_add_pd(_mm256_mul_pd(b2, _mm256_loadu_pd(v + i)),
                                     _mm256_mul_pd(omb2, _mm256_mul_pd(gi, gi)));
    _mm256_storeu_pd(m + i, mi);
    _mm256_storeu_pd(v + i, vi);
    const __m256d mhat = _mm256_div_pd(mi, c1);
    const __m256d vhat = _mm256_div_pd(vi, c2);
    const __m256d step =
        _mm256_mul_pd(lr, _mm256_div_pd(mhat, _mm256_add_pd(_mm256_sqrt_pd(vhat), eps)));
    _mm256_storeu_pd(w + i, _mm256_sub_pd(_mm256_loadu_pd(w + i), step));
  }
  for (; i < n; ++i) {
    const double gi = g[i];
    m[i] = k.beta1 * m[i] + k.one_minus_beta1 * gi;
    v[i] = k.beta2 * v[i] + k.one_minus_beta2 * (gi * gi);
    const double mhat = m[i] / k.bias1;
    const double vhat = v[i] / k.bias2;
    w[i] = w[i] - k.lr * (mhat / (std::sqrt(vhat) + k.eps));
  }
}

void snap_uniform(const double* x, double* y, std::size_t n, double absmax, double levels) {
  const std::size_t blocked = n - n % 4;
  const __m256d vmax = _mm256_set1_pd(absmax);
  const __m256d vlev = _mm256_set1_pd(levels);
  std::size_t i = 0;
  for (; i < blocked; i += 4) {
    const __m256d ratio = _mm256_mul_pd(_mm256_div_pd(_mm256_loadu_pd(x + i), vmax), vlev);
    const __m256d code = _mm256_round_pd(ratio, _MM_FROUND_TO_NEAREST_INT | _MM_FROUND_NO_EXC);
    _mm256_storeu_pd(y + i, _mm256_mul_pd(_mm256_div_pd(code, vlev), vmax));
  }
  for (; i < n; ++i) {
    const double code = std::nearbyint(x[i] / absmax * levels);
    y[i] = code / levels * absmax;
  }
}

std::size_t clip_spikes(double* g, std::size_t n, double threshold, double gmax) {
  const std::size_t blocked = n - n % 4;
  const __m256d vthr = _mm256_set1_pd(threshold);
  const __m256d vmax = _mm256_set1_pd(gmax);
  std::size_t count = 0;
  std::size_t i = 0;
  for (; i < blocked; i += 4) {
    const __m256d gi = _mm256_loadu_pd(g + i);
    const __m256d mask = _mm256_cmp_pd(abs_pd(gi), vthr, _CMP_GT_OQ);
    const int bits = _mm256_movemask_pd(mask);
    if (bits == 0) continue;
    const __m256d clipped = _mm256_mul_pd(_mm256_div_pd(gi, vmax), vthr);
    _mm256_storeu_pd(g + i, _mm256_blendv_pd(gi, clipped, mask));
    count += static_cast<std::size_t>(__builtin_popcount(static_cast<unsigned>(bits)));
  }
  for (; i < n; ++i) {
    if (std::fabs(g[i]) > threshold) {
      g[i] = g[i] / gmax * threshold;
      ++count;
    }
  }
  return count;
}

}  // namespace

const KernelTable kAvx2Table{
    "avx2", matmul, sum_squares, max_abs, scale, adam_update, snap_uniform, clip_spikes,
};

}  // namespace sspam::kernels::detail
