// SPDX-License-Identifier: Apache-2.0
#pragma once

// Optimizer step rules and gradient transforms.
//
// Free functions operate on one parameter tensor and its state. The learning
// rate is passed per call so the harness can apply a schedule; every other
// hyperparameter lives in a config struct. Global steps are 1-based.

#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "sspam/tensor.hpp"

namespace sspam::optim {

/// Raised when a gradient handed to a step rule holds NaN or Inf.
class DivergenceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// ---------------------------------------------------------------------------
// State
// ---------------------------------------------------------------------------

struct AdamMoments {
  Matrix m;
  Matrix v;
  /// Steps since the last reset; drives the Adam bias correction.
  std::int64_t step_in_cycle = 0;

  static AdamMoments like(const Matrix& w) {
    return {Matrix(w.rows(), w.cols()), Matrix(w.rows(), w.cols()), 0};
  }
};

struct AdaGnState {
  double m_norm = 0.0;
  double v_norm = 0.0;
  std::int64_t step = 0;
};

struct AdaClipState {
  double threshold = 0.0;
  std::int64_t step = 0;
};

// ---------------------------------------------------------------------------
// Configs
// ---------------------------------------------------------------------------

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  /// MoRet interval; 0 disables momentum reset.
  std::int64_t moret_interval = 0;
};

struct StableSpamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double gamma1 = 0.7;
  double gamma2 = 0.9;
  double gamma3 = 0.999;
  std::int64_t moret_interval = 1000;
  double eps = 1e-6;

  /// Defaults used for 4-bit training.
  static StableSpamConfig low_precision() { return {}; }
  /// Defaults used for full-precision training.
  static StableSpamConfig full_precision() {
    StableSpamConfig c;
    c.gamma1 = 0.85;
    c.gamma2 = 0.99999;
    c.gamma3 = 0.999;
    return c;
  }
};

struct SpamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  /// 0 disables resets (and therefore the post-reset warmup).
  std::int64_t reset_interval = 500;
  std::int64_t warmup_steps = 150;
  double theta = 5000.0;
};

struct AdafactorConfig {
  double eps1 = 1e-30;
  double eps2 = 1e-3;
  double clip_d = 1.0;
  /// beta_hat(t) = 1 - t^(-decay_rate)
  double decay_rate = 0.8;
  /// Multiply the step by max(eps2, rms(w)) (relative step size).
  bool scale_parameter = false;
};

struct LionConfig {
  double beta1 = 0.9;
  double beta2 = 0.99;
  double weight_decay = 0.0;
};

struct AdamMiniConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// ---------------------------------------------------------------------------
// Gradient transforms
// ---------------------------------------------------------------------------

/// Adaptive spike-aware clipping. Updates the bias-corrected EMA of the
/// per-step max |g|, then rescales every entry above it by T̂ / g_max.
/// Returns the number of clipped entries.
std::size_t adaclip(Matrix& g, AdaClipState& s, double gamma3);

/// Value-returning form: (clipped gradient, clipped fraction).
std::pair<Matrix, double> adaclip(const Matrix& g, AdaClipState& s, double gamma3);

/// Bias-corrected threshold currently held by `s` (0 before the first step).
double adaclip_threshold(const AdaClipState& s, double gamma3);

/// Adaptive gradient norm: rescales g to norm m̂_norm / (sqrt(v̂_norm) + eps).
/// A zero gradient is left untouched but still advances the EMAs.
/// Returns the target norm (0 for a zero gradient).
double adagn(Matrix& g, AdaGnState& s, double gamma1, double gamma2, double eps);

/// Zeroes m and v and restarts the bias-correction cycle when
/// global_step is a multiple of interval. interval 0 means never.
/// Returns true when a reset happened.
bool moret_reset(AdamMoments& moments, std::int64_t global_step, std::int64_t interval);

/// Element-wise SPAM spike clip: where v > 0 and g²/v > theta,
/// g ← sign(g)·sqrt(theta·v). Returns the number of clipped entries.
std::size_t spike_clip(Matrix& g, const Matrix& v, double theta);

/// Scales every layer by threshold/N when the global norm N exceeds
/// threshold. Returns the factor applied (1 when unchanged).
double grad_clip_global(std::span<Matrix> layers, double threshold);
std::vector<Matrix> grad_clip_global(std::span<const Matrix> layers, double threshold);

// ---------------------------------------------------------------------------
// Step rules
// ---------------------------------------------------------------------------

struct TensorStepInfo {
  std::size_t clipped = 0;
  bool reset = false;
  double lr_multiplier = 1.0;
};

/// Advances step_in_cycle and applies one bias-corrected Adam update.
void adam_step(Matrix& w, const Matrix& g, AdamMoments& moments, double lr, double beta1,
               double beta2, double eps);

struct StableSpamState {
  AdaClipState clip;
  AdaGnState norm;
  AdamMoments adam;

  static StableSpamState like(const Matrix& w) { return {{}, {}, AdamMoments::like(w)}; }
};

/// AdaClip → AdaGN → MoRet check → Adam moments with bias correction →
/// parameter update. The Adam correction counts steps since the last reset;
/// the AdaGN and AdaClip counters never reset. `g` is transformed in place.
TensorStepInfo stable_spam_step(Matrix& w, Matrix& g, StableSpamState& state,
                                const StableSpamConfig& cfg, double lr, std::int64_t global_step);

struct SpamState {
  AdamMoments adam;
  /// Global step of the most recent reset, 0 if none yet.
  std::int64_t last_reset = 0;

  static SpamState like(const Matrix& w) { return {AdamMoments::like(w), 0}; }
};

/// LR multiplier of the post-reset linear warmup: k/warmup for the k-th
/// step after a reset (k < warmup), 1 otherwise and before the first reset.
double spam_warmup_multiplier(const SpamState& state, const SpamConfig& cfg,
                              std::int64_t global_step);

/// SpikeClip against the previous second moment → Adam update with the
/// warmup-scaled LR → reset of m, v when global_step hits the interval.
TensorStepInfo spam_step(Matrix& w, Matrix& g, SpamState& state, const SpamConfig& cfg,
                         double lr, std::int64_t global_step);

struct AdafactorState {
  Matrix row;  // rows×1, factored case
  Matrix col;  // 1×cols, factored case
  Matrix v;    // unfactored case (vectors)
  std::int64_t step = 0;

  bool factored() const noexcept { return !row.empty(); }
  static AdafactorState like(const Matrix& w);
};

void adafactor_step(Matrix& w, const Matrix& g, AdafactorState& state, const AdafactorConfig& cfg,
                    double lr);

void lion_step(Matrix& w, const Matrix& g, Matrix& m, const LionConfig& cfg, double lr);

struct AdamMiniState {
  Matrix m;
  double v = 0.0;
  std::int64_t step = 0;

  static AdamMiniState like(const Matrix& w) { return {Matrix(w.rows(), w.cols()), 0.0, 0}; }
};

void adam_mini_step(Matrix& w, const Matrix& g, AdamMiniState& state, const AdamMiniConfig& cfg,
                    double lr);

// ---------------------------------------------------------------------------
// Whole-model optimizers
// ---------------------------------------------------------------------------

enum class TransformKind { AdaClip, AdaGN, SpikeClip, GradClip };

std::string_view to_string(TransformKind k);
std::optional<TransformKind> parse_transform(std::string_view name);

enum class BaseKind { Sgd, Adam, Spam, StableSpam, Adafactor, Lion, AdamMini };

std::string_view to_string(BaseKind k);
std::optional<BaseKind> parse_base(std::string_view name);

/// Everything needed to build an optimizer; each base reads its own block.
struct OptimizerSpec {
  BaseKind base = BaseKind::Adam;
  std::vector<TransformKind> transforms;

  AdamConfig adam;
  StableSpamConfig stable_spam;
  SpamConfig spam;
  AdafactorConfig adafactor;
  LionConfig lion;
  AdamMiniConfig adam_mini;

  // Transform hyperparameters.
  double adaclip_gamma3 = 0.999;
  double adagn_gamma1 = 0.7;
  double adagn_gamma2 = 0.9;
  double adagn_eps = 1e-6;
  double spike_theta = 5000.0;
  double clip_threshold = 1.0;
};

struct StepReport {
  std::size_t clipped = 0;
  std::size_t elements = 0;
  /// Global norm of the gradient handed to the base rule's moment update.
  double post_norm = 0.0;
  bool reset = false;
  double lr_multiplier = 1.0;

  double clipped_fraction() const {
    return elements ? static_cast<double>(clipped) / static_cast<double>(elements) : 0.0;
  }
};

/// Per-tensor base update rule. Holds one state slot per parameter tensor.
class BaseRule {
 public:
  virtual ~BaseRule() = default;
  virtual void init(std::span<const Matrix> params) = 0;
  /// `g` may be modified (rules that clip internally do so in place).
  virtual TensorStepInfo step(std::size_t index, Matrix& w, Matrix& g, double lr,
                              std::int64_t global_step) = 0;
  /// Element-wise second moment, when the rule keeps one.
  virtual const Matrix* second_moment(std::size_t) const { return nullptr; }
  virtual std::string_view name() const = 0;
};

std::unique_ptr<BaseRule> make_base(const OptimizerSpec& spec);

/// Ordered gradient transforms in front of a base rule. Built by compose().
class Optimizer {
 public:
  Optimizer(std::vector<TransformKind> transforms, std::unique_ptr<BaseRule> base,
            const OptimizerSpec& hyper);

  void init(std::span<const Matrix> params);
  /// grads are consumed (transformed in place).
  StepReport step(std::span<Matrix> params, std::span<Matrix> grads, double lr,
                  std::int64_t global_step);

  const BaseRule& base() const { return *base_; }
  std::string describe() const;

 private:
  std::vector<TransformKind> transforms_;
  std::unique_ptr<BaseRule> base_;
  OptimizerSpec hyper_;
  std::vector<AdaClipState> clip_states_;
  std::vector<AdaGnState> norm_states_;
  bool initialized_ = false;
};

/// Throws std::invalid_argument on a repeated transform kind, or on
/// SpikeClip in front of a base without an element-wise second moment.
Optimizer compose(std::vector<TransformKind> transforms, std::unique_ptr<BaseRule> base,
                  const OptimizerSpec& hyper = {});

Optimizer make_optimizer(const OptimizerSpec& spec);

}  // namespace sspam::optim
