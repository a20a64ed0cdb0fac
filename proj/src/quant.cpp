// SPDX-License-Identifier: Apache-2.0
#include "sspam/quant.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "sspam/kernels.hpp"

namespace sspam::quant {
namespace {

// Every supported grid is uniform: value = step * code with integer code in
// [-levels, levels].
struct UniformGrid {
  double step;
  int levels;
};

UniformGrid uniform_grid(Format f) {
  switch (f) {
    case Format::Int2:
      return {1.0, 1};
    case Format::Int3:
      return {1.0, 3};
    case Format::Int4:
      return {1.0, 7};
    case Format::Fp4E1M2:
      // Subnormal spacing 2^(1-bias) * 2^-2 = 0.25 equals the normal spacing
      // for the single normal binade, so the grid is 0.25 * {-7..7}.
      return {0.25, 7};
    case Format::None:
      break;
  }
  throw std::invalid_argument("quant: format 'none' has no grid");
}

std::vector<double> fp4_e1m2_values() {
  std::vector<double> values;
  for (int sign : {-1, 1}) {
    for (int e = 0; e < 2; ++e) {
      for (int mant = 0; mant < 4; ++mant) {
        const double frac = mant / 4.0;
        // bias 1: normal 2^(e-1) * (1 + frac), subnormal 2^(1-1) * frac
        const double mag = e == 0 ? frac : std::ldexp(1.0 + frac, e - 1);
        values.push_back(sign * mag);
      }
    }
  }
  std::sort(values.begin(), values.end());
  values.erase(std::unique(values.begin(), values.end()), values.end());  // ±0
  return values;
}

}  // namespace

std::string_view to_string(Format f) {
  switch (f) {
    case Format::None:
      return "none";
    case Format::Int2:
      return "int2";
    case Format::Int3:
      return "int3";
    case Format::Int4:
      return "int4";
    case Format::Fp4E1M2:
      return "fp4_e1m2";
  }
  return "?";
}

std::optional<Format> parse_format(std::string_view name) {
  for (Format f : {Format::None, Format::Int2, Format::Int3, Format::Int4, Format::Fp4E1M2}) {
    if (name == to_string(f)) return f;
  }
  return std::nullopt;
}

std::vector<double> grid(Format f) {
  if (f == Format::Fp4E1M2) return fp4_e1m2_values();
  const UniformGrid g = uniform_grid(f);
  std::vector<double> values;
  for (int c = -g.levels; c <= g.levels; ++c) values.push_back(g.step * c);
  return values;
}

double grid_max(Format f) {
  const UniformGrid g = uniform_grid(f);
  return g.step * g.levels;
}

void qdq_in_place(Matrix& x, const QuantSpec& spec) {
  if (const std::size_t bad = first_non_finite(x); bad != x.size()) {
    throw std::invalid_argument("qdq: non-finite value at index " + std::to_string(bad));
  }
  if (spec.format == Format::None || x.empty()) return;
  const double absmax = max_abs(x);
  if (absmax == 0.0) return;
  // Snapping x/s to step*code with s = absmax/(step*levels) is the same as
  // rounding x/absmax*levels; working in code units keeps the absmax entry exact.
  const UniformGrid g = uniform_grid(spec.format);
  kernels::active().snap_uniform(x.data().data(), x.data().data(), x.size(), absmax,
                                 static_cast<double>(g.levels));
}

Matrix qdq(const Matrix& x, const QuantSpec& spec) {
  Matrix out = x;
  qdq_in_place(out, spec);
  return out;
}

bool qdq_idempotent_check(const Matrix& x, const QuantSpec& spec) {
  const Matrix once = qdq(x, spec);
  return qdq(once, spec) == once;
}

}  // namespace sspam::quant
