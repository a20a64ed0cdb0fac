// SPDX-License-Identifier: Apache-2.0
#include <cstdlib>
#include <string>

#include "kernels_impl.hpp"

namespace sspam::kernels {
namespace {

bool cpu_has_avx2() {
#if defined(SSPAM_HAVE_AVX2_TU) && (defined(__GNUC__) || defined(__clang__))
  __builtin_cpu_init();
  return __builtin_cpu_supports("avx2");
#else
  return false;
#endif
}

const KernelTable* pick_default() {
  if (const char* env = std::getenv("SSPAM_KERNELS")) {
    const std::string want(env);
    if (want == "scalar") return &detail::kScalarTable;
    if (want == "avx2") {
      if (const KernelTable* t = table_for(Backend::Avx2)) return t;
    }
  }
  if (const KernelTable* t = table_for(Backend::Avx2)) return t;
  return &detail::kScalarTable;
}

const KernelTable*& current() {
  static const KernelTable* table = pick_default();
  return table;
}

}  // namespace

const KernelTable& active() { return *current(); }

const KernelTable& scalar_table() { return detail::kScalarTable; }

const KernelTable* table_for(Backend backend) {
  switch (backend) {
    case Backend::Scalar:
      return &detail::kScalarTable;
    case Backend::Avx2:
#if defined(SSPAM_HAVE_AVX2_TU)
      if (cpu_has_avx2()) return &detail::kAvx2Table;
#endif
      return nullptr;
    case Backend::Auto:
      return table_for(Backend::Avx2) ? table_for(Backend::Avx2) : &detail::kScalarTable;
  }
  return nullptr;
}

bool select(Backend backend) {
  const KernelTable* t = table_for(backend);
  if (!t) return false;
  current() = t;
  return true;
}

std::string_view active_name() { return active().name; }

}  // namespace sspam::kernels
