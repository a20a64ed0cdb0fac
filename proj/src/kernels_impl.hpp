// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "sspam/kernels.hpp"

namespace sspam::kernels::detail {

extern const KernelTable kScalarTable;
#if defined(SSPAM_HAVE_AVX2_TU)
extern const KernelTable kAvx2Table;
#endif

}  // namespace sspam::kernels::detail
