// SPDX-License-Identifier: Apache-2.0
#pragma once

// Desk-scale differentiable testbeds with hand-written backward passes.

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "sspam/quant.hpp"
#include "sspam/rng.hpp"
#include "sspam/tensor.hpp"

namespace sspam::models {

// ---------------------------------------------------------------------------
// Quadratic bowl: loss = ½ wᵀAw − bᵀw with A = MᵀM + δI.
// ---------------------------------------------------------------------------

struct QuadraticProblem {
  Matrix a;  // n×n, symmetric positive definite
  Matrix b;  // n×1
  Matrix w;  // n×1

  static QuadraticProblem random(std::size_t n, std::uint64_t seed, double delta = 0.1);
};

struct LossGrad {
  double loss = 0.0;
  Matrix grad;
};

LossGrad quadratic_loss_grad(const QuadraticProblem& p);
double quadratic_loss(const QuadraticProblem& p);
/// A⁻¹b by Cholesky factorization.
Matrix quadratic_optimum(const QuadraticProblem& p);

// ---------------------------------------------------------------------------
// Layers
// ---------------------------------------------------------------------------

inline constexpr double kRmsNormEps = 1e-8;

struct RmsNormGrads {
  Matrix dx;
  Matrix dgain;  // 1×d
};

struct RmsNormForward {
  Matrix y;
  std::function<RmsNormGrads(const Matrix& dy)> backward;
};

/// Row-wise y = x / sqrt(mean(x²) + eps) ⊙ gain; gain is 1×d.
RmsNormForward rmsnorm_fwd_bwd(const Matrix& x, const Matrix& gain);

struct SwigluGrads {
  Matrix dx;
  Matrix dw_gate;
  Matrix dw_up;
};

struct SwigluForward {
  Matrix y;
  std::function<SwigluGrads(const Matrix& dy)> backward;
};

double silu(double z);

/// y = silu(x W_gate) ⊙ (x W_up).
SwigluForward swiglu_fwd_bwd(const Matrix& x, const Matrix& w_gate, const Matrix& w_up);

struct CrossEntropy {
  double loss = 0.0;
  Matrix dlogits;
};

/// Mean softmax cross-entropy over the rows of `logits`.
CrossEntropy cross_entropy(const Matrix& logits, std::span<const int> labels);

// ---------------------------------------------------------------------------
// MLP testbed
// ---------------------------------------------------------------------------

struct MlpConfig {
  std::size_t input_dim = 16;
  std::size_t hidden = 32;
  std::size_t ffn = 64;
  std::size_t depth = 2;
  std::size_t classes = 4;
};

/// Input projection, `depth` residual blocks (RMSNorm → SwiGLU → down
/// projection), final RMSNorm and classifier head.
///
/// Parameter order: W_in, then per block {gain, W_gate, W_up, W_down},
/// then {gain_out, W_out}. Gains are not quantized.
class MlpModel {
 public:
  static MlpModel init(const MlpConfig& cfg, std::uint64_t seed);

  const MlpConfig& config() const { return cfg_; }
  std::vector<Matrix>& params() { return params_; }
  const std::vector<Matrix>& params() const { return params_; }
  const std::vector<std::string>& names() const { return names_; }

 private:
  MlpConfig cfg_;
  std::vector<Matrix> params_;
  std::vector<std::string> names_;
};

struct ModelGrads {
  double loss = 0.0;
  std::vector<Matrix> grads;
};

/// Forward with qdq applied to every matmul operand (weights and the
/// activations fed into them) when quant ≠ none, backward with the
/// straight-through estimator. Gradients are w.r.t. the unquantized weights.
ModelGrads mlp_forward_backward(const MlpModel& model, const Matrix& inputs,
                                std::span<const int> labels, const quant::QuantSpec& quant);

double mlp_loss(const MlpModel& model, const Matrix& inputs, std::span<const int> labels,
                const quant::QuantSpec& quant);

// ---------------------------------------------------------------------------
// Synthetic data
// ---------------------------------------------------------------------------

/// Gaussian-mixture classification: unit-variance clusters around centers
/// drawn once from the mixture seed.
struct GaussianMixture {
  Matrix centers;  // classes×dim

  static GaussianMixture random(std::size_t dim, std::size_t classes, std::uint64_t seed,
                                double center_scale);
};

struct SyntheticDataset {
  Matrix inputs;  // N×d
  std::vector<int> labels;
  std::uint64_t seed = 0;

  std::size_t size() const { return labels.size(); }
};

/// Labels cycle through the classes so every class gets ⌊N/k⌋ or ⌈N/k⌉ samples.
SyntheticDataset sample(const GaussianMixture& mixture, std::size_t n, std::uint64_t seed);

struct Batch {
  Matrix inputs;
  std::vector<int> labels;
};

/// `size` rows drawn uniformly with replacement.
Batch draw_batch(const SyntheticDataset& data, std::size_t size, Rng& rng);

/// Each entry independently, with the given probability, receives additive
/// Gaussian noise with standard deviation |severity · max(batch)|.
Matrix inject_spikes(const Matrix& batch, double probability, double severity, Rng& rng);

}  // namespace sspam::models
