// SPDX-License-Identifier: Apache-2.0
#include <algorithm>
#include <cmath>
#include <numbers>

#include "sspam/harness.hpp"

namespace sspam::harness {

double lr_schedule(std::int64_t step, double lr_peak, const ScheduleConfig& cfg) {
  const std::int64_t warmup = cfg.resolved_warmup();
  if (warmup > 0 && step <= warmup) {
    return lr_peak * static_cast<double>(step) / static_cast<double>(warmup);
  }
  const std::int64_t decay = cfg.total_steps - warmup;
  if (decay <= 0) return lr_peak;
  const double progress =
      std::clamp(static_cast<double>(step - warmup) / static_cast<double>(decay), 0.0, 1.0);
  const double cosine = 0.5 * (1.0 + std::cos(std::numbers::pi * progress));
  return lr_peak * (cfg.final_ratio + (1.0 - cfg.final_ratio) * cosine);
}

}  // namespace sspam::harness
