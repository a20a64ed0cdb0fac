// SPDX-License-Identifier: Apache-2.0
#pragma once

// Straight-line reference implementations. They share no code with the
// library beyond plain std::vector storage and are written for readability,
// so tests and `sspam selftest` can compare the optimized paths against them.

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "sspam/optim.hpp"
#include "sspam/quant.hpp"
#include "sspam/tensor.hpp"

namespace sspam::reference {

using Vec = std::vector<double>;
/// History of flat weight vectors, one entry per step (after the update).
using History = std::vector<Vec>;

struct AdamHyper {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::int64_t moret_interval = 0;
};

History adam_trace(Vec w, const std::vector<Vec>& grads, const Vec& lrs, const AdamHyper& h);

/// Adam after scaling each gradient down to norm `threshold` when larger.
History adam_gradclip_trace(Vec w, const std::vector<Vec>& grads, const Vec& lrs,
                            const AdamHyper& h, double threshold);

struct AdafactorHyper {
  double eps1 = 1e-30;
  double eps2 = 1e-3;
  double clip_d = 1.0;
  double decay_rate = 0.8;
  bool scale_parameter = false;
};

/// rows × cols layout, row-major; factored when both exceed 1.
History adafactor_trace(Vec w, std::size_t rows, std::size_t cols, const std::vector<Vec>& grads,
                        const Vec& lrs, const AdafactorHyper& h);

History lion_trace(Vec w, const std::vector<Vec>& grads, const Vec& lrs, double beta1,
                   double beta2, double weight_decay);

History adam_mini_trace(Vec w, const std::vector<Vec>& grads, const Vec& lrs, double beta1,
                        double beta2, double eps);

struct SpamHyper {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double theta = 5000.0;
  std::int64_t reset_interval = 500;
  std::int64_t warmup = 150;
};

History spam_trace(Vec w, const std::vector<Vec>& grads, const Vec& lrs, const SpamHyper& h);

struct StableSpamHyper {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double gamma1 = 0.7;
  double gamma2 = 0.9;
  double gamma3 = 0.999;
  double eps = 1e-6;
  std::int64_t moret_interval = 1000;
};

History stable_spam_trace(Vec w, const std::vector<Vec>& grads, const Vec& lrs,
                          const StableSpamHyper& h);

struct AdaClipStep {
  double threshold_hat = 0.0;
  Vec output;
};

std::vector<AdaClipStep> adaclip_trace(const std::vector<Vec>& grads, double gamma3);

struct AdaGnStep {
  double m_hat = 0.0;
  double v_hat = 0.0;
  Vec output;
};

std::vector<AdaGnStep> adagn_trace(const std::vector<Vec>& grads, double gamma1, double gamma2,
                                   double eps);

/// Triple loop, inner index innermost.
Matrix naive_matmul(const Matrix& a, const Matrix& b);

/// Nearest point of grid(format)·absmax/grid_max by exhaustive search; ties
/// go to the even magnitude code.
Matrix brute_force_qdq(const Matrix& x, quant::Format format);

double median(Vec values);

/// Central differences of f at x with step h, entry by entry.
Matrix finite_difference(const std::function<double(const Matrix&)>& f, const Matrix& x,
                         double h = 1e-6);

/// max |a_i - b_i|; infinity when sizes differ.
double max_abs_diff(const Vec& a, const Vec& b);
double max_abs_diff(const History& a, const History& b);

/// ||a - b|| / max(||b||, 1e-8) in the Frobenius norm.
double relative_error(const Matrix& a, const Matrix& b);

// ---------------------------------------------------------------------------
// Trace helpers
// ---------------------------------------------------------------------------

/// `steps` gradients of length n: standard normal entries, and with
/// probability spike_prob per step one entry multiplied by spike_scale.
std::vector<Vec> random_gradient_trace(std::size_t steps, std::size_t n, std::uint64_t seed,
                                       double spike_prob = 0.05, double spike_scale = 50.0);

/// Runs the library optimizer built from `spec` on one rows×cols tensor.
History library_trace(const optim::OptimizerSpec& spec, const Vec& w0, std::size_t rows,
                      std::size_t cols, const std::vector<Vec>& grads, const Vec& lrs);

// ---------------------------------------------------------------------------
// Self-test suite
// ---------------------------------------------------------------------------

struct CheckResult {
  std::string name;
  bool passed = false;
  std::string detail;
};

/// Swappable pieces of the library under test, so the suite itself can be
/// shown to catch a corrupted implementation.
struct SelftestHooks {
  std::function<std::size_t(Matrix&, optim::AdaClipState&, double)> adaclip =
      [](Matrix& g, optim::AdaClipState& s, double gamma3) { return optim::adaclip(g, s, gamma3); };
};

std::vector<CheckResult> run_selftest(const SelftestHooks& hooks = {});

}  // namespace sspam::reference
