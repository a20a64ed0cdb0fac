// SPDX-License-Identifier: Apache-2.0
#include <algorithm>
#include <stdexcept>

#include "sspam/optim.hpp"

namespace sspam::optim {
namespace {

class SgdRule final : public BaseRule {
 public:
  void init(std::span<const Matrix>) override {}
  TensorStepInfo step(std::size_t, Matrix& w, Matrix& g, double lr, std::int64_t) override {
    require_same_shape(w, g, "sgd");
    if (!all_finite(g)) throw DivergenceError("sgd: non-finite gradient");
    axpy(-lr, g, w);
    return {};
  }
  std::string_view name() const override { return "sgd"; }
};

class AdamRule final : public BaseRule {
 public:
  explicit AdamRule(AdamConfig cfg) : cfg_(cfg) {}
  void init(std::span<const Matrix> params) override {
    states_.clear();
    for (const Matrix& w : params) states_.push_back(AdamMoments::like(w));
  }
  TensorStepInfo step(std::size_t i, Matrix& w, Matrix& g, double lr,
                      std::int64_t global_step) override {
    TensorStepInfo info;
    info.reset = moret_reset(states_[i], global_step, cfg_.moret_interval);
    adam_step(w, g, states_[i], lr, cfg_.beta1, cfg_.beta2, cfg_.eps);
    return info;
  }
  const Matrix* second_moment(std::size_t i) const override { return &states_[i].v; }
  std::string_view name() const override { return "adam"; }

 private:
  AdamConfig cfg_;
  std::vector<AdamMoments> states_;
};

class SpamRule final : public BaseRule {
 public:
  explicit SpamRule(SpamConfig cfg) : cfg_(cfg) {}
  void init(std::span<const Matrix> params) override {
    states_.clear();
    for (const Matrix& w : params) states_.push_back(SpamState::like(w));
  }
  TensorStepInfo step(std::size_t i, Matrix& w, Matrix& g, double lr,
                      std::int64_t global_step) override {
    return spam_step(w, g, states_[i], cfg_, lr, global_step);
  }
  const Matrix* second_moment(std::size_t i) const override { return &states_[i].adam.v; }
  std::string_view name() const override { return "spam"; }

 private:
  SpamConfig cfg_;
  std::vector<SpamState> states_;
};

class StableSpamRule final : public BaseRule {
 public:
  explicit StableSpamRule(StableSpamConfig cfg) : cfg_(cfg) {}
  void init(std::span<const Matrix> params) override {
    states_.clear();
    for (const Matrix& w : params) states_.push_back(StableSpamState::like(w));
  }
  TensorStepInfo step(std::size_t i, Matrix& w, Matrix& g, double lr,
                      std::int64_t global_step) override {
    return stable_spam_step(w, g, states_[i], cfg_, lr, global_step);
  }
  const Matrix* second_moment(std::size_t i) const override { return &states_[i].adam.v; }
  std::string_view name() const override { return "stable_spam"; }

 private:
  StableSpamConfig cfg_;
  std::vector<StableSpamState> states_;
};

class AdafactorRule final : public BaseRule {
 public:
  explicit AdafactorRule(AdafactorConfig cfg) : cfg_(cfg) {}
  void init(std::span<const Matrix> params) override {
    states_.clear();
    for (const Matrix& w : params) states_.push_back(AdafactorState::like(w));
  }
  TensorStepInfo step(std::size_t i, Matrix& w, Matrix& g, double lr, std::int64_t) override {
    adafactor_step(w, g, states_[i], cfg_, lr);
    return {};
  }
  std::string_view name() const override { return "adafactor"; }

 private:
  AdafactorConfig cfg_;
  std::vector<AdafactorState> states_;
};

class LionRule final : public BaseRule {
 public:
  explicit LionRule(LionConfig cfg) : cfg_(cfg) {}
  void init(std::span<const Matrix> params) override {
    momentum_.clear();
    for (const Matrix& w : params) momentum_.emplace_back(w.rows(), w.cols());
  }
  TensorStepInfo step(std::size_t i, Matrix& w, Matrix& g, double lr, std::int64_t) override {
    lion_step(w, g, momentum_[i], cfg_, lr);
    return {};
  }
  std::string_view name() const override { return "lion"; }

 private:
  LionConfig cfg_;
  std::vector<Matrix> momentum_;
};

class AdamMiniRule final : public BaseRule {
 public:
  explicit AdamMiniRule(AdamMiniConfig cfg) : cfg_(cfg) {}
  void init(std::span<const Matrix> params) override {
    states_.clear();
    for (const Matrix& w : params) states_.push_back(AdamMiniState::like(w));
  }
  TensorStepInfo step(std::size_t i, Matrix& w, Matrix& g, double lr, std::int64_t) override {
    adam_mini_step(w, g, states_[i], cfg_, lr);
    return {};
  }
  std::string_view name() const override { return "adam_mini"; }

 private:
  AdamMiniConfig cfg_;
  std::vector<AdamMiniState> states_;
};

}  // namespace

std::string_view to_string(TransformKind k) {
  switch (k) {
    case TransformKind::AdaClip:
      return "adaclip";
    case TransformKind::AdaGN:
      return "adagn";
    case TransformKind::SpikeClip:
      return "spikeclip";
    case TransformKind::GradClip:
      return "gradclip";
  }
  return "?";
}

std::optional<TransformKind> parse_transform(std::string_view name) {
  for (auto k : {TransformKind::AdaClip, TransformKind::AdaGN, TransformKind::SpikeClip,
                 TransformKind::GradClip}) {
    if (name == to_string(k)) return k;
  }
  return std::nullopt;
}

std::string_view to_string(BaseKind k) {
  switch (k) {
    case BaseKind::Sgd:
      return "sgd";
    case BaseKind::Adam:
      return "adam";
    case BaseKind::Spam:
      return "spam";
    case BaseKind::StableSpam:
      return "stable_spam";
    case BaseKind::Adafactor:
      return "adafactor";
    case BaseKind::Lion:
      return "lion";
    case BaseKind::AdamMini:
      return "adam_mini";
  }
  return "?";
}

std::optional<BaseKind> parse_base(std::string_view name) {
  for (auto k : {BaseKind::Sgd, BaseKind::Adam, BaseKind::Spam, BaseKind::StableSpam,
                 BaseKind::Adafactor, BaseKind::Lion, BaseKind::AdamMini}) {
    if (name == to_string(k)) return k;
  }
  return std::nullopt;
}

std::unique_ptr<BaseRule> make_base(const OptimizerSpec& spec) {
  switch (spec.base) {
    case BaseKind::Sgd:
      return std::make_unique<SgdRule>();
    case BaseKind::Adam:
      return std::make_unique<AdamRule>(spec.adam);
    case BaseKind::Spam:
      return std::make_unique<SpamRule>(spec.spam);
    case BaseKind::StableSpam:
      return std::make_unique<StableSpamRule>(spec.stable_spam);
    case BaseKind::Adafactor:
      return std::make_unique<AdafactorRule>(spec.adafactor);
    case BaseKind::Lion:
      return std::make_unique<LionRule>(spec.lion);
    case BaseKind::AdamMini:
      return std::make_unique<AdamMiniRule>(spec.adam_mini);
  }
  throw std::invalid_argument("make_base: unknown optimizer");
}

Optimizer::Optimizer(std::vector<TransformKind> transforms, std::unique_ptr<BaseRule> base,
                     const OptimizerSpec& hyper)
    : transforms_(std::move(transforms)), base_(std::move(base)), hyper_(hyper) {}

void Optimizer::init(std::span<const Matrix> params) {
  base_->init(params);
  clip_states_.assign(params.size(), {});
  norm_states_.assign(params.size(), {});
  initialized_ = true;
}

StepReport Optimizer::step(std::span<Matrix> params, std::span<Matrix> grads, double lr,
                           std::int64_t global_step) {
  if (params.size() != grads.size()) {
    throw std::invalid_argument("Optimizer::step: parameter and gradient counts differ");
  }
  if (!initialized_) init(std::span<const Matrix>(params.data(), params.size()));

  StepReport report;
  for (const Matrix& g : grads) {
    if (!all_finite(g)) throw DivergenceError("optimizer: non-finite gradient");
    report.elements += g.size();
  }

  for (TransformKind kind : transforms_) {
    switch (kind) {
      case TransformKind::GradClip:
        grad_clip_global(grads, hyper_.clip_threshold);
        break;
      case TransformKind::AdaClip:
        for (std::size_t i = 0; i < grads.size(); ++i)
          report.clipped += adaclip(grads[i], clip_states_[i], hyper_.adaclip_gamma3);
        break;
      case TransformKind::AdaGN:
        for (std::size_t i = 0; i < grads.size(); ++i)
          adagn(grads[i], norm_states_[i], hyper_.adagn_gamma1, hyper_.adagn_gamma2,
                hyper_.adagn_eps);
        break;
      case TransformKind::SpikeClip:
        for (std::size_t i = 0; i < grads.size(); ++i)
          report.clipped += spike_clip(grads[i], *base_->second_moment(i), hyper_.spike_theta);
        break;
    }
  }

  for (std::size_t i = 0; i < params.size(); ++i) {
    const TensorStepInfo info = base_->step(i, params[i], grads[i], lr, global_step);
    report.clipped += info.clipped;
    report.reset = report.reset || info.reset;
    // Tensors share one step counter, so the multiplier agrees across them.
    report.lr_multiplier = info.lr_multiplier;
  }
  report.post_norm = global_grad_norm(std::span<const Matrix>(grads.data(), grads.size()));
  return report;
}

std::string Optimizer::describe() const {
  std::string out(base_->name());
  for (TransformKind k : transforms_) {
    out += "+";
    out += to_string(k);
  }
  return out;
}

Optimizer compose(std::vector<TransformKind> transforms, std::unique_ptr<BaseRule> base,
                  const OptimizerSpec& hyper) {
  for (std::size_t i = 0; i < transforms.size(); ++i) {
    if (std::find(transforms.begin() + static_cast<std::ptrdiff_t>(i) + 1, transforms.end(),
                  transforms[i]) != transforms.end()) {
      throw std::invalid_argument("compose: duplicate transform '" +
                                  std::string(to_string(transforms[i])) + "'");
    }
  }
  const bool wants_v = std::find(transforms.begin(), transforms.end(), TransformKind::SpikeClip) !=
                       transforms.end();
  if (wants_v) {
    Matrix probe(1, 1);
    base->init(std::span<const Matrix>(&probe, 1));
    if (base->second_moment(0) == nullptr) {
      throw std::invalid_argument("compose: spikeclip needs an element-wise second moment, '" +
                                  std::string(base->name()) + "' has none");
    }
  }
  return Optimizer(std::move(transforms), std::move(base), hyper);
}

Optimizer make_optimizer(const OptimizerSpec& spec) {
  return compose(spec.transforms, make_base(spec), spec);
}

}  // namespace sspam::optim
