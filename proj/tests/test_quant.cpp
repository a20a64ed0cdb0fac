// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cmath>
#include <stdexcept>
#include <string>

#include "sspam/quant.hpp"
#include "sspam/reference.hpp"
#include "sspam/rng.hpp"

using namespace sspam;
using quant::Format;

namespace {

const Format kFormats[] = {Format::Int2, Format::Int3, Format::Int4, Format::Fp4E1M2};

}  // namespace

TEST_CASE("grids") {
  CHECK(quant::grid(Format::Int2) == std::vector<double>{-1, 0, 1});
  CHECK(quant::grid(Format::Int3) == std::vector<double>{-3, -2, -1, 0, 1, 2, 3});
  const auto int4 = quant::grid(Format::Int4);
  CHECK(int4.size() == 15);
  CHECK(int4.back() == 7.0);
  CHECK(quant::grid(Format::Fp4E1M2) ==
        std::vector<double>{-1.75, -1.5, -1.25, -1.0, -0.75, -0.5, -0.25, 0.0, 0.25, 0.5, 0.75,
                            1.0, 1.25, 1.5, 1.75});
  CHECK(quant::grid_max(Format::Fp4E1M2) == 1.75);
  CHECK_THROWS_AS(quant::grid(Format::None), std::invalid_argument);
}

TEST_CASE("format names round-trip") {
  for (Format f : {Format::None, Format::Int2, Format::Int3, Format::Int4, Format::Fp4E1M2}) {
    CHECK(quant::parse_format(quant::to_string(f)) == f);
  }
  CHECK_FALSE(quant::parse_format("int5").has_value());
}

TEST_CASE("INT4 worked example with a tie") {
  const Matrix out = quant::qdq(Matrix::row({1.0, -0.5, 0.25}), {Format::Int4});
  CHECK(out[0] == 1.0);
  CHECK(out[1] == doctest::Approx(-4.0 / 7.0).epsilon(1e-15));
  CHECK(out[2] == doctest::Approx(2.0 / 7.0).epsilon(1e-15));
}

TEST_CASE("FP4 tie between 0.75 and 1.0 goes to the even mantissa") {
  const Matrix x = Matrix::row({1.75, 0.875});
  const Matrix out = quant::qdq(x, {Format::Fp4E1M2});
  CHECK(out[0] == 1.75);
  CHECK(out[1] == 1.0);
  CHECK(out == reference::brute_force_qdq(x, Format::Fp4E1M2));
}

TEST_CASE("zeros and none are identities") {
  for (Format f : kFormats) CHECK(quant::qdq(Matrix::zeros(3, 3), {f}) == Matrix::zeros(3, 3));
  Rng rng(1);
  const Matrix x = random_normal(4, 4, rng);
  CHECK(quant::qdq(x, {Format::None}) == x);
}

TEST_CASE("non-finite input names the index") {
  Matrix x(2, 2, 1.0);
  x[3] = std::nan("");
  try {
    quant::qdq(x, {Format::Int4});
    FAIL("expected an exception");
  } catch (const std::invalid_argument& e) {
    CHECK(std::string(e.what()).find("index 3") != std::string::npos);
  }
}

TEST_CASE("idempotence check utility") {
  Rng rng(2);
  CHECK(quant::qdq_idempotent_check(random_normal(16, 16, rng), {Format::Int4}));
  CHECK(quant::qdq_idempotent_check(random_normal(16, 16, rng), {Format::Fp4E1M2}));
  CHECK(quant::qdq_idempotent_check(Matrix::zeros(3, 3), {Format::Int2}));
}

TEST_CASE("matches the brute-force grid snap") {
  Rng rng(3);
  for (Format f : kFormats) {
    for (int trial = 0; trial < 300; ++trial) {
      const Matrix x = random_normal(1 + rng.below(6), 1 + rng.below(6), rng, std::exp(rng.normal()));
      REQUIRE(quant::qdq(x, {f}) == reference::brute_force_qdq(x, f));
    }
  }
}

TEST_CASE("error stays within half the grid spacing") {
  Rng rng(4);
  for (Format f : kFormats) {
    const auto g = quant::grid(f);
    const double half_gap = 0.5 * (g[1] - g[0]);
    for (int trial = 0; trial < 200; ++trial) {
      const Matrix x = random_normal(5, 5, rng);
      const double s = max_abs(x) / quant::grid_max(f);
      const Matrix q = quant::qdq(x, {f});
      for (std::size_t i = 0; i < x.size(); ++i) {
        REQUIRE(std::fabs(q[i] - x[i]) <= s * half_gap * (1 + 1e-12));
      }
    }
  }
}
