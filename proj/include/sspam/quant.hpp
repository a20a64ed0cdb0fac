// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "sspam/tensor.hpp"

namespace sspam::quant {

enum class Format { None, Int2, Int3, Int4, Fp4E1M2 };
enum class Granularity { PerTensor };
enum class Rounding { NearestEven };

struct QuantSpec {
  Format format = Format::None;
  Granularity granularity = Granularity::PerTensor;
  Rounding rounding = Rounding::NearestEven;

  friend bool operator==(const QuantSpec&, const QuantSpec&) = default;
};

std::string_view to_string(Format f);
/// Accepts "none", "int2", "int3", "int4", "fp4_e1m2".
std::optional<Format> parse_format(std::string_view name);

/// Every representable value of the format, ascending. Throws for None.
///
/// INT-k is the symmetric range ±(2^(k-1) - 1). FP4 E1M2 uses exponent bias 1
/// with subnormals at e = 0: {0, ±0.25, ..., ±1.75}.
std::vector<double> grid(Format f);

/// Largest grid magnitude.
double grid_max(Format f);

/// Quantize–dequantize with per-tensor absmax scaling. Each entry snaps to
/// the nearest point of the scaled grid; ties go to the even magnitude code
/// (for INT-k the even integer, for E1M2 the even mantissa). The entry that
/// attains max_abs(x) maps back to ±max_abs(x) exactly.
///
/// Throws std::invalid_argument naming the index of a non-finite entry.
Matrix qdq(const Matrix& x, const QuantSpec& spec);
void qdq_in_place(Matrix& x, const QuantSpec& spec);

bool qdq_idempotent_check(const Matrix& x, const QuantSpec& spec);

}  // namespace sspam::quant
