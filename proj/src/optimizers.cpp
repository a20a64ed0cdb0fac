// SPDX-License-Identifier: Apache-2.0
#include <algorithm>
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

double sign(double x) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); }

double rms(const Matrix& m) {
  return m.empty() ? 0.0 : std::sqrt(sum_squares(m) / static_cast<double>(m.size()));
}

}  // namespace

void adam_step(Matrix& w, const Matrix& g, AdamMoments& moments, double lr, double beta1,
               double beta2, double eps) {
  require_same_shape(w, g, "adam_step");
  require_same_shape(w, moments.m, "adam_step");
  require_same_shape(w, moments.v, "adam_step");
  require_finite(g, "adam_step");
  moments.step_in_cycle += 1;
  const double t = static_cast<double>(moments.step_in_cycle);
  const kernels::AdamCoeffs k{
      beta1, beta2, 1.0 - beta1, 1.0 - beta2, 1.0 - std::pow(beta1, t), 1.0 - std::pow(beta2, t),
      lr,    eps,
  };
  kernels::active().adam_update(w.data().data(), moments.m.data().data(),
                                moments.v.data().data(), g.data().data(), w.size(), k);
}

TensorStepInfo stable_spam_step(Matrix& w, Matrix& g, StableSpamState& state,
                                const StableSpamConfig& cfg, double lr,
                                std::int64_t global_step) {
  TensorStepInfo info;
  info.clipped = adaclip(g, state.clip, cfg.gamma3);
  adagn(g, state.norm, cfg.gamma1, cfg.gamma2, cfg.eps);
  info.reset = moret_reset(state.adam, global_step, cfg.moret_interval);
  adam_step(w, g, state.adam, lr, cfg.beta1, cfg.beta2, cfg.eps);
  return info;
}

double spam_warmup_multiplier(const SpamState& state, const SpamConfig& cfg,
                              std::int64_t global_step) {
  if (state.last_reset == 0 || cfg.warmup_steps <= 0) return 1.0;
  const std::int64_t since = global_step - state.last_reset;
  if (since >= cfg.warmup_steps) return 1.0;
  return static_cast<double>(since) / static_cast<double>(cfg.warmup_steps);
}

TensorStepInfo spam_step(Matrix& w, Matrix& g, SpamState& state, const SpamConfig& cfg,
                         double lr, std::int64_t global_step) {
  require_finite(g, "spam_step");
  TensorStepInfo info;
  info.clipped = spike_clip(g, state.adam.v, cfg.theta);
  info.lr_multiplier = spam_warmup_multiplier(state, cfg, global_step);
  adam_step(w, g, state.adam, lr * info.lr_multiplier, cfg.beta1, cfg.beta2, cfg.eps);
  if (moret_reset(state.adam, global_step, cfg.reset_interval)) {
    state.last_reset = global_step;
    info.reset = true;
  }
  return info;
}

AdafactorState AdafactorState::like(const Matrix& w) {
  AdafactorState s;
  if (w.rows() > 1 && w.cols() > 1) {
    s.row = Matrix(w.rows(), 1);
    s.col = Matrix(1, w.cols());
  } else {
    s.v = Matrix(w.rows(), w.cols());
  }
  return s;
}

void adafactor_step(Matrix& w, const Matrix& g, AdafactorState& state, const AdafactorConfig& cfg,
                    double lr) {
  require_same_shape(w, g, "adafactor_step");
  require_finite(g, "adafactor_step");
  state.step += 1;
  const double beta = 1.0 - std::pow(static_cast<double>(state.step), -cfg.decay_rate);
  const std::size_t rows = g.rows();
  const std::size_t cols = g.cols();
  Matrix update(rows, cols);

  if (state.factored()) {
    for (std::size_t i = 0; i < rows; ++i) {
      double s = 0.0;
      for (std::size_t j = 0; j < cols; ++j) s += g(i, j) * g(i, j) + cfg.eps1;
      state.row[i] = beta * state.row[i] + (1.0 - beta) * (s / static_cast<double>(cols));
    }
    for (std::size_t j = 0; j < cols; ++j) {
      double s = 0.0;
      for (std::size_t i = 0; i < rows; ++i) s += g(i, j) * g(i, j) + cfg.eps1;
      state.col[j] = beta * state.col[j] + (1.0 - beta) * (s / static_cast<double>(rows));
    }
    const double row_mean = mean(state.row);
    for (std::size_t i = 0; i < rows; ++i) {
      for (std::size_t j = 0; j < cols; ++j) {
        const double v_hat = state.row[i] * state.col[j] / row_mean;
        update(i, j) = g(i, j) / std::sqrt(v_hat);
      }
    }
  } else {
    require_same_shape(w, state.v, "adafactor_step");
    for (std::size_t i = 0; i < g.size(); ++i) {
      state.v[i] = beta * state.v[i] + (1.0 - beta) * (g[i] * g[i] + cfg.eps1);
      update[i] = g[i] / std::sqrt(state.v[i]);
    }
  }

  const double denom = std::max(1.0, rms(update) / cfg.clip_d);
  const double step_size = cfg.scale_parameter ? lr * std::max(cfg.eps2, rms(w)) : lr;
  for (std::size_t i = 0; i < w.size(); ++i) w[i] -= step_size * (update[i] / denom);
}

void lion_step(Matrix& w, const Matrix& g, Matrix& m, const LionConfig& cfg, double lr) {
  require_same_shape(w, g, "lion_step");
  require_same_shape(w, m, "lion_step");
  require_finite(g, "lion_step");
  for (std::size_t i = 0; i < w.size(); ++i) {
    const double c = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g[i];
    w[i] -= lr * (sign(c) + cfg.weight_decay * w[i]);
    m[i] = cfg.beta2 * m[i] + (1.0 - cfg.beta2) * g[i];
  }
}

void adam_mini_step(Matrix& w, const Matrix& g, AdamMiniState& state, const AdamMiniConfig& cfg,
                    double lr) {
  require_same_shape(w, g, "adam_mini_step");
  require_same_shape(w, state.m, "adam_mini_step");
  require_finite(g, "adam_mini_step");
  state.step += 1;
  const double t = static_cast<double>(state.step);
  const double mean_sq = g.empty() ? 0.0 : sum_squares(g) / static_cast<double>(g.size());
  state.v = cfg.beta2 * state.v + (1.0 - cfg.beta2) * mean_sq;
  const double bias1 = 1.0 - std::pow(cfg.beta1, t);
  const double denom = std::sqrt(state.v / (1.0 - std::pow(cfg.beta2, t))) + cfg.eps;
  for (std::size_t i = 0; i < w.size(); ++i) {
    state.m[i] = cfg.beta1 * state.m[i] + (1.0 - cfg.beta1) * g[i];
    w[i] -= lr * (state.m[i] / bias1 / denom);
  }
}

}  // namespace sspam::optim
