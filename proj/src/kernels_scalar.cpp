// SPDX-License-Identifier: Apache-2.0
#include <cmath>

#include "kernels_impl.hpp"

namespace sspam::kernels::detail {
namespace {

void matmul(const double* a, const double* b, double* c, std::size_t n, std::size_t k,
            std::size_t m) {
  for (std::size_t i = 0; i < n; ++i) {
    double* crow = c + i * m;
    for (std::size_t j = 0; j < m; ++j) crow[j] = 0.0;
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = a[i * k + p];
      const double* brow = b + p * m;
      for (std::size_t j = 0; j < m; ++j) crow[j] += aip * brow[j];
    }
  }
}

double sum_squares(const double* x, std::size_t n) {
  const std::size_t blocked = n - n % 4;
  double lane[4] = {0.0, 0.0, 0.0, 0.0};
  for (std::size_t i = 0; i < blocked; i += 4) {
    for (std::size_t l = 0; l < 4; ++l) lane[l] += x[i + l] * x[i + l];
  }
  double total = (lane[0] + lane[1]) + (lane[2] + lane[3]);
  for (std::size_t i = blocked; i < n; ++i) total += x[i] * x[i];
  return total;
}

double max_abs(const double* x, std::size_t n) {
  double best = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double a = std::fabs(x[i]);
    if (a > best) best = a;
  }
  return best;
}

void scale(double* x, std::size_t n, double c) {
  for (std::size_t i = 0; i < n; ++i) x[i] *= c;
}

void adam_update(double* w, double* m, double* v, const double* g, std::size_t n,
                 const AdamCoeffs& k) {
  for (std::size_t i = 0; i < n; ++i) {
    const double gi = g[i];
    m[i] = k.beta1 * m[i] + k.one_minus_beta1 * gi;
    v[i] = k.beta2 * v[i] + k.one_minus_beta2 * (gi * gi);
    const double mhat = m[i] / k.bias1;
    const double vhat = v[i] / k.bias2;
    w[i] = w[i] - k.lr * (mhat / (std::sqrt(vhat) + k.eps));
  }
}

void snap_uniform(const double* x, double* y, std::size_t n, double absmax, double levels) {
  for (std::size_t i = 0; i < n; ++i) {
    const double code = std::nearbyint(x[i] / absmax * levels);
    y[i] = code / levels * absmax;
  }
}

std::size_t clip_spikes(double* g, std::size_t n, double threshold, double gmax) {
  std::size_t count = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (std::fabs(g[i]) > threshold) {
      g[i] = g[i] / gmax * threshold;
      ++count;
    }
  }
  return count;
}

}  // namespace

const KernelTable kScalarTable{
    "scalar", matmul, sum_squares, max_abs, scale, adam_update, snap_uniform, clip_spikes,
};

}  // namespace sspam::kernels::detail
