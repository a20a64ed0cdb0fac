// SPDX-License-Identifier: Apache-2.0
#pragma once

// Inner-loop kernels with a scalar reference and SIMD variants.
//
// Every variant performs the same IEEE operations in the same order as the
// scalar reference, so backends are interchangeable bit-for-bit. Reductions
// use a fixed four-lane blocking: lane l accumulates elements i ≡ l (mod 4)
// of the blocked prefix, lanes combine as (l0 + l1) + (l2 + l3), and the
// tail is added sequentially.

#include <cstddef>
#include <string_view>

namespace sspam::kernels {

struct AdamCoeffs {
  double beta1;
  double beta2;
  double one_minus_beta1;
  double one_minus_beta2;
  double bias1;  // 1 - beta1^t
  double bias2;  // 1 - beta2^t
  double lr;
  double eps;
};

struct KernelTable {
  const char* name;
  // c[n×m] = a[n×k] · b[k×m]
  void (*matmul)(const double* a, const double* b, double* c, std::size_t n, std::size_t k,
                 std::size_t m);
  double (*sum_squares)(const double* x, std::size_t n);
  double (*max_abs)(const double* x, std::size_t n);
  void (*scale)(double* x, std::size_t n, double c);
  // m ← β1 m + (1-β1) g;  v ← β2 v + (1-β2) g²;  w ← w - lr (m/b1) / (sqrt(v/b2) + eps)
  void (*adam_update)(double* w, double* m, double* v, const double* g, std::size_t n,
                      const AdamCoeffs& k);
  // y = (nearbyint(x / absmax * levels) / levels) * absmax, ties to even.
  void (*snap_uniform)(const double* x, double* y, std::size_t n, double absmax, double levels);
  // Entries with |g| > threshold become (g / gmax) * threshold. Returns the count.
  std::size_t (*clip_spikes)(double* g, std::size_t n, double threshold, double gmax);
};

enum class Backend { Auto, Scalar, Avx2 };

/// Table in use. Selected on first call from CPU features unless overridden
/// by the SSPAM_KERNELS environment variable ("scalar" or "avx2").
const KernelTable& active();

const KernelTable& scalar_table();
/// nullptr when the backend was not compiled in or the CPU lacks it.
const KernelTable* table_for(Backend backend);

/// Forces a backend for subsequent calls. Not thread-safe; call before
/// starting any computation. Returns false if the backend is unavailable.
bool select(Backend backend);

std::string_view active_name();

}  // namespace sspam::kernels
