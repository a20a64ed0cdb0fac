// SPDX-License-Identifier: Apache-2.0
#include <cmath>
#include <string>

#include "sspam/kernels.hpp"
#include "sspam/optim.hpp"

namespace sspam::optim {
namespace {

void require_finite(const Matrix& g, const char* where) {
  if (const std::size_t bad = first_non_finite(g); bad != g.size()) {
    throw DivergenceError(std::string(where) + ": non-finite gradient at index " +
                          std::to_string(bad));
  }
}

}  // namespace

double adaclip_threshold(const AdaClipState& s, double gamma3) {
  if (s.step == 0) return 0.0;
  return s.threshold / (1.0 - std::pow(gamma3, static_cast<double>(s.step)));
}

std::size_t adaclip(Matrix& g, AdaClipState& s, double gamma3) {
  require_finite(g, "adaclip");
  s.step += 1;
  const double gmax = g.empty() ? 0.0 : max_abs(g);
  s.threshold = gamma3 * s.threshold + (1.0 - gamma3) * gmax;
  const double corrected = adaclip_threshold(s, gamma3);
  // An all-zero gradient leaves the mask empty, so gmax == 0 never divides.
  return kernels::active().clip_spikes(g.data().data(), g.size(), corrected, gmax);
}

std::pair<Matrix, double> adaclip(const Matrix& g, AdaClipState& s, double gamma3) {
  Matrix out = g;
  const std::size_t clipped = adaclip(out, s, gamma3);
  const double fraction =
      out.empty() ? 0.0 : static_cast<double>(clipped) / static_cast<double>(out.size());
  return {std::move(out), fraction};
}

double adagn(Matrix& g, AdaGnState& s, double gamma1, double gamma2, double eps) {
  require_finite(g, "adagn");
  s.step += 1;
  const double norm = frobenius_norm(g);
  s.m_norm = gamma1 * s.m_norm + (1.0 - gamma1) * norm;
  s.v_norm = gamma2 * s.v_norm + (1.0 - gamma2) * (norm * norm);
  if (norm == 0.0) return 0.0;
  const double t = static_cast<double>(s.step);
  const double m_hat = s.m_norm / (1.0 - std::pow(gamma1, t));
  const double v_hat = s.v_norm / (1.0 - std::pow(gamma2, t));
  const double target = m_hat / (std::sqrt(v_hat) + eps);
  scale_in_place(g, target / norm);
  return target;
}

bool moret_reset(AdamMoments& moments, std::int64_t global_step, std::int64_t interval) {
  if (interval <= 0 || global_step % interval != 0) return false;
  moments.m.fill(0.0);
  moments.v.fill(0.0);
  moments.step_in_cycle = 0;
  return true;
}

std::size_t spike_clip(Matrix& g, const Matrix& v, double theta) {
  require_same_shape(g, v, "spike_clip");
  std::size_t clipped = 0;
  for (std::size_t i = 0; i < g.size(); ++i) {
    const double vi = v[i];
    if (vi > 0.0 && g[i] * g[i] / vi > theta) {
      g[i] = std::copysign(std::sqrt(theta * vi), g[i]);
      ++clipped;
    }
  }
  return clipped;
}

double grad_clip_global(std::span<Matrix> layers, double threshold) {
  if (!(threshold > 0.0)) throw std::invalid_argument("grad_clip_global: threshold must be > 0");
  const double norm = global_grad_norm(std::span<const Matrix>(layers.data(), layers.size()));
  if (!(norm > threshold)) return 1.0;
  const double factor = threshold / norm;
  for (Matrix& g : layers) scale_in_place(g, factor);
  return factor;
}

std::vector<Matrix> grad_clip_global(std::span<const Matrix> layers, double threshold) {
  std::vector<Matrix> out(layers.begin(), layers.end());
  grad_clip_global(std::span<Matrix>(out), threshold);
  return out;
}

}  // namespace sspam::optim
