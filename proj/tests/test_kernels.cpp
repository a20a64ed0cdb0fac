// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cmath>
#include <cstdlib>
#include <cstring>
#include <string>
#include <vector>

#include "sspam/harness.hpp"
#include "sspam/kernels.hpp"
#include "sspam/reference.hpp"
#include "sspam/rng.hpp"

using namespace sspam;

namespace {

const std::vector<std::size_t> kSizes = {0, 1, 2, 3, 4, 5, 7, 8, 9, 15, 16, 17, 63, 64, 65, 1000};

bool bits_equal(const std::vector<double>& a, const std::vector<double>& b) {
  return a.size() == b.size() && std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0;
}

std::vector<double> random_vec(std::size_t n, Rng& rng, double scale = 1.0) {
  std::vector<double> v(n);
  for (double& x : v) x = scale * rng.normal();
  return v;
}

// Restores the default table after a test that switches backends.
struct BackendGuard {
  ~BackendGuard() { kernels::select(kernels::Backend::Auto); }
};

}  // namespace

TEST_CASE("backend selection honours SSPAM_KERNELS") {
  const char* env = std::getenv("SSPAM_KERNELS");
  if (env && std::string(env) == "scalar") {
    CHECK(kernels::active_name() == "scalar");
  } else if (kernels::table_for(kernels::Backend::Avx2)) {
    CHECK(kernels::active_name() == "avx2");
  } else {
    CHECK(kernels::active_name() == "scalar");
  }
  CHECK(kernels::table_for(kernels::Backend::Scalar) == &kernels::scalar_table());
}

TEST_CASE("select switches the active table") {
  BackendGuard guard;
  REQUIRE(kernels::select(kernels::Backend::Scalar));
  CHECK(kernels::active_name() == "scalar");
  if (kernels::table_for(kernels::Backend::Avx2)) {
    REQUIRE(kernels::select(kernels::Backend::Avx2));
    CHECK(kernels::active_name() == "avx2");
  } else {
    CHECK_FALSE(kernels::select(kernels::Backend::Avx2));
  }
}

TEST_CASE("SIMD kernels match the scalar reference bit for bit") {
  const kernels::KernelTable& ref = kernels::scalar_table();
  const kernels::KernelTable* simd = kernels::table_for(kernels::Backend::Avx2);
  if (!simd) {
    MESSAGE("AVX2 backend unavailable; nothing to compare");
    return;
  }
  Rng rng(7);

  SUBCASE("reductions") {
    for (std::size_t n : kSizes) {
      const auto x = random_vec(n, rng, std::exp(3.0 * rng.normal()));
      const double a = ref.sum_squares(x.data(), n);
      const double b = simd->sum_squares(x.data(), n);
      CHECK(std::memcmp(&a, &b, sizeof a) == 0);
      const double c = ref.max_abs(x.data(), n);
      const double d = simd->max_abs(x.data(), n);
      CHECK(std::memcmp(&c, &d, sizeof c) == 0);
    }
  }

  SUBCASE("scale") {
    for (std::size_t n : kSizes) {
      auto x = random_vec(n, rng);
      auto y = x;
      ref.scale(x.data(), n, 0.37);
      simd->scale(y.data(), n, 0.37);
      CHECK(bits_equal(x, y));
    }
  }

  SUBCASE("matmul") {
    for (int trial = 0; trial < 40; ++trial) {
      const std::size_t n = 1 + rng.below(13), k = 1 + rng.below(13), m = 1 + rng.below(13);
      const auto a = random_vec(n * k, rng);
      const auto b = random_vec(k * m, rng);
      std::vector<double> c1(n * m, -1.0), c2(n * m, -2.0);
      ref.matmul(a.data(), b.data(), c1.data(), n, k, m);
      simd->matmul(a.data(), b.data(), c2.data(), n, k, m);
      CHECK(bits_equal(c1, c2));
    }
  }

  SUBCASE("adam update") {
    for (std::size_t n : kSizes) {
      auto w1 = random_vec(n, rng), m1 = random_vec(n, rng), v1 = random_vec(n, rng);
      for (double& x : v1) x = x * x;
      const auto g = random_vec(n, rng, 10.0);
      auto w2 = w1, m2 = m1, v2 = v1;
      const kernels::AdamCoeffs k{0.9, 0.999, 0.1, 0.001, 1 - std::pow(0.9, 3.0),
                                  1 - std::pow(0.999, 3.0), 1e-3, 1e-8};
      ref.adam_update(w1.data(), m1.data(), v1.data(), g.data(), n, k);
      simd->adam_update(w2.data(), m2.data(), v2.data(), g.data(), n, k);
      CHECK(bits_equal(w1, w2));
      CHECK(bits_equal(m1, m2));
      CHECK(bits_equal(v1, v2));
    }
  }

  SUBCASE("uniform snap, including exact ties") {
    for (std::size_t n : kSizes) {
      auto x = random_vec(n, rng);
      // Plant half-way points: k + 0.5 code units for absmax 7, levels 7.
      for (std::size_t i = 0; i < n; i += 3) x[i] = std::floor(x[i] * 3.0) + 0.5;
      std::vector<double> y1(n), y2(n);
      ref.snap_uniform(x.data(), y1.data(), n, 7.0, 7.0);
      simd->snap_uniform(x.data(), y2.data(), n, 7.0, 7.0);
      CHECK(bits_equal(y1, y2));
    }
  }

  SUBCASE("spike clipping") {
    for (std::size_t n : kSizes) {
      auto g1 = random_vec(n, rng);
      auto g2 = g1;
      const double gmax = n ? *std::max_element(g1.begin(), g1.end(), [](double a, double b) {
        return std::fabs(a) < std::fabs(b);
      }) : 0.0;
      const std::size_t c1 = ref.clip_spikes(g1.data(), n, 0.8, std::fabs(gmax));
      const std::size_t c2 = simd->clip_spikes(g2.data(), n, 0.8, std::fabs(gmax));
      CHECK(c1 == c2);
      CHECK(bits_equal(g1, g2));
    }
  }
}

TEST_CASE("reductions follow the documented four-lane order") {
  const std::vector<double> x = {1e16, 1.0, -1e16, 1.0, 3.0};
  // lanes: 1e32, 1, 1e32, 1 -> (1e32 + 1) + (1e32 + 1) = 2e32, tail + 9
  const double expected = (1e32 + 1.0) + (1e32 + 1.0) + 9.0;
  CHECK(kernels::scalar_table().sum_squares(x.data(), x.size()) == expected);
}

TEST_CASE("a full training run is identical on every backend") {
  BackendGuard guard;
  harness::RunConfig cfg;
  cfg.schedule.total_steps = 60;
  cfg.quant.format = quant::Format::Int4;
  cfg.spikes = {0.1, 0.5};
  cfg.optimizer.base = optim::BaseKind::StableSpam;
  cfg.optimizer.stable_spam.moret_interval = 25;

  REQUIRE(kernels::select(kernels::Backend::Scalar));
  const std::string scalar_csv = harness::records_to_csv(harness::run(cfg).records);
  if (!kernels::select(kernels::Backend::Avx2)) return;
  const std::string simd_csv = harness::records_to_csv(harness::run(cfg).records);
  CHECK(scalar_csv == simd_csv);
}

TEST_CASE("matmul on each backend equals the naive triple loop") {
  BackendGuard guard;
  Rng rng(3);
  const Matrix a = random_normal(5, 7, rng);
  const Matrix b = random_normal(7, 3, rng);
  for (auto backend : {kernels::Backend::Scalar, kernels::Backend::Avx2}) {
    if (!kernels::select(backend)) continue;
    CHECK(matmul(a, b) == reference::naive_matmul(a, b));
  }
}
