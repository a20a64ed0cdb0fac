// SPDX-License-Identifier: Apache-2.0
#include <algorithm>
#include <cmath>
#include <sstream>

#include "sspam/harness.hpp"
#include "sspam/kernels.hpp"
#include "sspam/models.hpp"
#include "sspam/reference.hpp"
#include "sspam/rng.hpp"

namespace sspam::reference {
namespace {

constexpr double kTraceTol = 1e-12;
constexpr double kGradTol = 1e-5;

std::string num(double v) {
  std::ostringstream s;
  s.precision(3);
  s << v;
  return s.str();
}

CheckResult within(std::string name, double error, double tol) {
  return {std::move(name), error <= tol, "max error " + num(error) + " (tol " + num(tol) + ")"};
}

Vec lr_ramp(std::size_t steps, double peak) {
  Vec lrs(steps);
  for (std::size_t i = 0; i < steps; ++i) lrs[i] = peak * (0.5 + 0.5 * std::cos(0.03 * i));
  return lrs;
}

Vec initial(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  Vec w(n);
  for (double& x : w) x = rng.normal();
  return w;
}

constexpr std::size_t kSteps = 100;

CheckResult check_adam() {
  const auto grads = random_gradient_trace(kSteps, 6, 11);
  const Vec w0 = initial(6, 12);
  const Vec lrs = lr_ramp(kSteps, 1e-2);
  optim::OptimizerSpec spec;
  spec.base = optim::BaseKind::Adam;
  spec.adam.moret_interval = 40;
  AdamHyper h;
  h.moret_interval = 40;
  return within("adam_trace", max_abs_diff(library_trace(spec, w0, 2, 3, grads, lrs),
                                           adam_trace(w0, grads, lrs, h)),
                kTraceTol);
}

CheckResult check_adam_gradclip() {
  const auto grads = random_gradient_trace(kSteps, 6, 21);
  const Vec w0 = initial(6, 22);
  const Vec lrs = lr_ramp(kSteps, 1e-2);
  optim::OptimizerSpec spec;
  spec.base = optim::BaseKind::Adam;
  spec.transforms = {optim::TransformKind::GradClip};
  return within("adam_gradclip_trace",
                max_abs_diff(library_trace(spec, w0, 2, 3, grads, lrs),
                             adam_gradclip_trace(w0, grads, lrs, AdamHyper{}, 1.0)),
                kTraceTol);
}

CheckResult check_adafactor() {
  const Vec lrs = lr_ramp(kSteps, 1e-2);
  optim::OptimizerSpec spec;
  spec.base = optim::BaseKind::Adafactor;
  double err = 0.0;
  for (auto [rows, cols] : {std::pair<std::size_t, std::size_t>{3, 4}, {1, 5}}) {
    const auto grads = random_gradient_trace(kSteps, rows * cols, 31 + rows);
    const Vec w0 = initial(rows * cols, 32 + rows);
    err = std::max(err, max_abs_diff(library_trace(spec, w0, rows, cols, grads, lrs),
                                     adafactor_trace(w0, rows, cols, grads, lrs, {})));
  }
  return within("adafactor_trace", err, kTraceTol);
}

CheckResult check_lion() {
  const auto grads = random_gradient_trace(kSteps, 6, 41);
  const Vec w0 = initial(6, 42);
  const Vec lrs = lr_ramp(kSteps, 1e-3);
  optim::OptimizerSpec spec;
  spec.base = optim::BaseKind::Lion;
  spec.lion.weight_decay = 0.1;
  return within("lion_trace", max_abs_diff(library_trace(spec, w0, 2, 3, grads, lrs),
                                           lion_trace(w0, grads, lrs, 0.9, 0.99, 0.1)),
                kTraceTol);
}

CheckResult check_adam_mini() {
  const auto grads = random_gradient_trace(kSteps, 6, 51);
  const Vec w0 = initial(6, 52);
  const Vec lrs = lr_ramp(kSteps, 1e-2);
  optim::OptimizerSpec spec;
  spec.base = optim::BaseKind::AdamMini;
  return within("adam_mini_trace", max_abs_diff(library_trace(spec, w0, 2, 3, grads, lrs),
                                                adam_mini_trace(w0, grads, lrs, 0.9, 0.999, 1e-8)),
                kTraceTol);
}

CheckResult check_spam() {
  const auto grads = random_gradient_trace(kSteps, 6, 61, 0.1, 200.0);
  const Vec w0 = initial(6, 62);
  const Vec lrs = lr_ramp(kSteps, 1e-2);
  optim::OptimizerSpec spec;
  spec.base = optim::BaseKind::Spam;
  spec.spam.reset_interval = 30;
  spec.spam.warmup_steps = 12;
  spec.spam.theta = 50.0;
  SpamHyper h;
  h.reset_interval = 30;
  h.warmup = 12;
  h.theta = 50.0;
  return within("spam_trace", max_abs_diff(library_trace(spec, w0, 2, 3, grads, lrs),
                                           spam_trace(w0, grads, lrs, h)),
                kTraceTol);
}

CheckResult check_stable_spam() {
  const auto grads = random_gradient_trace(kSteps, 6, 71);
  const Vec w0 = initial(6, 72);
  const Vec lrs = lr_ramp(kSteps, 1e-2);
  optim::OptimizerSpec spec;
  spec.base = optim::BaseKind::StableSpam;
  spec.stable_spam.moret_interval = 25;
  StableSpamHyper h;
  h.moret_interval = 25;
  return within("stable_spam_trace", max_abs_diff(library_trace(spec, w0, 2, 3, grads, lrs),
                                                  stable_spam_trace(w0, grads, lrs, h)),
                kTraceTol);
}

CheckResult check_adaclip(const SelftestHooks& hooks) {
  const auto grads = random_gradient_trace(kSteps, 8, 81, 0.2, 100.0);
  const auto expected = adaclip_trace(grads, 0.999);
  optim::AdaClipState state;
  double err = 0.0;
  for (std::size_t s = 0; s < grads.size(); ++s) {
    Matrix g(1, 8);
    std::copy(grads[s].begin(), grads[s].end(), g.data().begin());
    hooks.adaclip(g, state, 0.999);
    err = std::max(err, max_abs_diff(Vec(g.data().begin(), g.data().end()), expected[s].output));
    err = std::max(err, std::fabs(optim::adaclip_threshold(state, 0.999) -
                                  expected[s].threshold_hat));
  }
  return within("adaclip_trace", err, kTraceTol);
}

CheckResult check_adaclip_worked_example(const SelftestHooks& hooks) {
  optim::AdaClipState state;
  Matrix g1 = Matrix::row({1.0, 0.5});
  hooks.adaclip(g1, state, 0.999);
  Matrix g2 = Matrix::row({10.0, 0.1});
  hooks.adaclip(g2, state, 0.999);
  const double expected = 0.010999 / 0.001999;
  const double err = std::max(std::fabs(g2[0] - expected), std::fabs(g2[1] - 0.1));
  return within("adaclip_worked_example", err, 1e-9);
}

CheckResult check_adagn() {
  Rng rng(91);
  std::vector<Vec> grads(kSteps, Vec(5));
  for (Vec& g : grads) {
    const double scale = std::exp(rng.normal() * 2.0);
    for (double& x : g) x = scale * rng.normal();
  }
  const auto expected = adagn_trace(grads, 0.7, 0.9, 1e-6);
  optim::AdaGnState state;
  double err = 0.0;
  for (std::size_t s = 0; s < grads.size(); ++s) {
    Matrix g(1, 5);
    std::copy(grads[s].begin(), grads[s].end(), g.data().begin());
    optim::adagn(g, state, 0.7, 0.9, 1e-6);
    for (std::size_t i = 0; i < 5; ++i) {
      err = std::max(err, std::fabs(g[i] - expected[s].output[i]) /
                              std::max(1.0, std::fabs(expected[s].output[i])));
    }
  }
  return within("adagn_trace", err, kTraceTol);
}

CheckResult check_compose_identity() {
  const auto grads = random_gradient_trace(kSteps, 16, 101);
  const Vec w0 = initial(16, 102);
  const Vec lrs = lr_ramp(kSteps, 1e-2);
  optim::OptimizerSpec stable;
  stable.base = optim::BaseKind::StableSpam;
  stable.stable_spam.moret_interval = 30;
  optim::OptimizerSpec composed;
  composed.base = optim::BaseKind::Adam;
  composed.adam = {0.9, 0.999, 1e-6, 30};
  composed.transforms = {optim::TransformKind::AdaClip, optim::TransformKind::AdaGN};
  const History a = library_trace(stable, w0, 4, 4, grads, lrs);
  const History b = library_trace(composed, w0, 4, 4, grads, lrs);
  const bool equal = a == b;
  return {"compose_equals_stable_spam", equal, equal ? "bit-identical" : "traces differ"};
}

CheckResult check_moret_boundaries() {
  optim::AdamMoments m = optim::AdamMoments::like(Matrix(1, 3));
  Matrix w(1, 3);
  std::vector<std::int64_t> resets;
  for (std::int64_t step = 1; step <= 100; ++step) {
    if (optim::moret_reset(m, step, 25)) {
      resets.push_back(step);
      if (m.step_in_cycle != 0 || max_abs(m.m) != 0.0 || max_abs(m.v) != 0.0) {
        return {"moret_boundaries", false, "moments not zeroed at step " + std::to_string(step)};
      }
    }
    optim::adam_step(w, Matrix::row({1.0, -2.0, 0.5}), m, 1e-3, 0.9, 0.999, 1e-8);
  }
  const bool ok = resets == std::vector<std::int64_t>{25, 50, 75, 100};
  return {"moret_boundaries", ok, ok ? "resets at 25, 50, 75, 100" : "unexpected reset steps"};
}

CheckResult check_bias_constants(const SelftestHooks& hooks) {
  const double c = -0.37;
  double err = 0.0;
  optim::AdamMoments m = optim::AdamMoments::like(Matrix(1, 1));
  optim::AdaGnState gn;
  optim::AdaClipState clip;
  Matrix w(1, 1);
  for (int t = 1; t <= 50; ++t) {
    optim::adam_step(w, Matrix::row({c}), m, 0.0, 0.9, 0.999, 1e-8);
    const double tt = static_cast<double>(m.step_in_cycle);
    err = std::max(err, std::fabs(m.m[0] / (1.0 - std::pow(0.9, tt)) - c));
    err = std::max(err, std::fabs(m.v[0] / (1.0 - std::pow(0.999, tt)) - c * c));
    Matrix g = Matrix::row({c});
    optim::adagn(g, gn, 0.7, 0.9, 0.0);
    err = std::max(err, std::fabs(gn.m_norm / (1.0 - std::pow(0.7, t)) - std::fabs(c)));
    err = std::max(err, std::fabs(gn.v_norm / (1.0 - std::pow(0.9, t)) - c * c));
    Matrix h = Matrix::row({c});
    hooks.adaclip(h, clip, 0.999);
    err = std::max(err, std::fabs(optim::adaclip_threshold(clip, 0.999) - std::fabs(c)));
  }
  return within("bias_correction_constants", err, kTraceTol);
}

CheckResult check_matmul() {
  Rng rng(111);
  double err = 0.0;
  for (int trial = 0; trial < 10; ++trial) {
    const std::size_t n = 1 + rng.below(9), k = 1 + rng.below(9), m = 1 + rng.below(9);
    const Matrix a = random_normal(n, k, rng);
    const Matrix b = random_normal(k, m, rng);
    const Matrix fast = matmul(a, b);
    const Matrix slow = naive_matmul(a, b);
    for (std::size_t i = 0; i < fast.size(); ++i) err = std::max(err, std::fabs(fast[i] - slow[i]));
  }
  return {"matmul_naive", err == 0.0, "max difference " + num(err)};
}

CheckResult check_kernel_backends() {
  const kernels::KernelTable& ref = kernels::scalar_table();
  const kernels::KernelTable* simd = kernels::table_for(kernels::Backend::Avx2);
  if (!simd) return {"kernel_backends", true, "only the scalar backend is available"};
  Rng rng(121);
  bool same = true;
  for (std::size_t n : {1u, 3u, 4u, 7u, 64u, 129u}) {
    const Matrix x = random_normal(1, n, rng);
    same = same && ref.sum_squares(x.data().data(), n) == simd->sum_squares(x.data().data(), n);
    same = same && ref.max_abs(x.data().data(), n) == simd->max_abs(x.data().data(), n);
    Matrix y1(1, n), y2(1, n);
    ref.snap_uniform(x.data().data(), y1.data().data(), n, 2.5, 7.0);
    simd->snap_uniform(x.data().data(), y2.data().data(), n, 2.5, 7.0);
    same = same && y1 == y2;
  }
  return {"kernel_backends", same, std::string("scalar vs ") + simd->name};
}

CheckResult check_quant_snap() {
  Rng rng(131);
  std::size_t mismatches = 0;
  for (auto f : {quant::Format::Int2, quant::Format::Int3, quant::Format::Int4,
                 quant::Format::Fp4E1M2}) {
    for (int trial = 0; trial < 50; ++trial) {
      const Matrix x = random_normal(3, 5, rng, std::exp(rng.normal()));
      if (!(quant::qdq(x, {f}) == brute_force_qdq(x, f))) ++mismatches;
    }
  }
  return {"quant_grid_snap", mismatches == 0, std::to_string(mismatches) + " mismatching matrices"};
}

CheckResult check_quant_properties() {
  Rng rng(141);
  std::size_t failures = 0;
  for (auto f : {quant::Format::Int2, quant::Format::Int3, quant::Format::Int4,
                 quant::Format::Fp4E1M2}) {
    for (int trial = 0; trial < 100; ++trial) {
      const Matrix x = random_normal(4, 4, rng);
      const Matrix q = quant::qdq(x, {f});
      const double absmax = max_abs(x);
      bool ok = quant::qdq(q, {f}) == q && max_abs(q) == absmax;
      for (std::size_t i = 0; i < x.size(); ++i) {
        ok = ok && std::fabs(q[i]) <= absmax && !(q[i] * x[i] < 0.0);
      }
      failures += ok ? 0 : 1;
    }
  }
  const std::vector<double> fp4 = quant::grid(quant::Format::Fp4E1M2);
  const bool grid_ok = fp4.size() == 15 && fp4.front() == -1.75 && fp4.back() == 1.75;
  return {"quant_properties", failures == 0 && grid_ok,
          std::to_string(failures) + " failing matrices, fp4 grid has " +
              std::to_string(fp4.size()) + " values"};
}

CheckResult check_grad_quadratic() {
  models::QuadraticProblem p = models::QuadraticProblem::random(5, 151);
  const Matrix analytic = models::quadratic_loss_grad(p).grad;
  const Matrix numeric = finite_difference(
      [&](const Matrix& w) {
        models::QuadraticProblem q = p;
        q.w = w;
        return models::quadratic_loss(q);
      },
      p.w);
  return within("gradcheck_quadratic", relative_error(analytic, numeric), kGradTol);
}

CheckResult check_grad_rmsnorm() {
  Rng rng(161);
  const Matrix x = random_normal(3, 6, rng);
  const Matrix gain = random_normal(1, 6, rng);
  const Matrix probe = random_normal(3, 6, rng);
  auto loss = [&](const Matrix& xx, const Matrix& gg) {
    const Matrix y = models::rmsnorm_fwd_bwd(xx, gg).y;
    double s = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) s += y[i] * probe[i];
    return s;
  };
  const auto grads = models::rmsnorm_fwd_bwd(x, gain).backward(probe);
  const double e1 = relative_error(
      grads.dx, finite_difference([&](const Matrix& v) { return loss(v, gain); }, x));
  const double e2 = relative_error(
      grads.dgain, finite_difference([&](const Matrix& v) { return loss(x, v); }, gain));
  return within("gradcheck_rmsnorm", std::max(e1, e2), kGradTol);
}

CheckResult check_grad_swiglu() {
  Rng rng(171);
  const Matrix x = random_normal(3, 4, rng);
  const Matrix wg = random_normal(4, 5, rng, 0.5);
  const Matrix wu = random_normal(4, 5, rng, 0.5);
  const Matrix probe = random_normal(3, 5, rng);
  auto loss = [&](const Matrix& a, const Matrix& b, const Matrix& c) {
    const Matrix y = models::swiglu_fwd_bwd(a, b, c).y;
    double s = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) s += y[i] * probe[i];
    return s;
  };
  const auto g = models::swiglu_fwd_bwd(x, wg, wu).backward(probe);
  double err = relative_error(
      g.dx, finite_difference([&](const Matrix& v) { return loss(v, wg, wu); }, x));
  err = std::max(err, relative_error(g.dw_gate, finite_difference(
                                                    [&](const Matrix& v) { return loss(x, v, wu); },
                                                    wg)));
  err = std::max(err, relative_error(g.dw_up, finite_difference(
                                                  [&](const Matrix& v) { return loss(x, wg, v); },
                                                  wu)));
  return within("gradcheck_swiglu", err, kGradTol);
}

CheckResult check_grad_mlp() {
  models::MlpConfig cfg{5, 6, 8, 1, 3};
  const models::MlpModel model = models::MlpModel::init(cfg, 181);
  Rng rng(182);
  const Matrix inputs = random_normal(4, 5, rng);
  const std::vector<int> labels{0, 1, 2, 1};
  const quant::QuantSpec none;
  const auto grads = models::mlp_forward_backward(model, inputs, labels, none).grads;
  double err = 0.0;
  for (std::size_t p = 0; p < model.params().size(); ++p) {
    const Matrix numeric = finite_difference(
        [&](const Matrix& v) {
          models::MlpModel m = model;
          m.params()[p] = v;
          return models::mlp_loss(m, inputs, labels, none);
        },
        model.params()[p]);
    err = std::max(err, relative_error(grads[p], numeric));
  }
  return within("gradcheck_mlp", err, kGradTol);
}

CheckResult check_gradclip() {
  Rng rng(191);
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<Matrix> layers;
    const std::size_t count = 1 + rng.below(4);
    for (std::size_t l = 0; l < count; ++l) {
      layers.push_back(random_normal(1 + rng.below(5), 1 + rng.below(5), rng,
                                     std::exp(3.0 * rng.normal())));
    }
    const auto clipped = optim::grad_clip_global(std::span<const Matrix>(layers), 1.0);
    double ss = 0.0;
    for (const Matrix& m : clipped)
      for (double v : m.data()) ss += v * v;
    worst = std::max(worst, std::sqrt(ss));
  }
  return {"gradclip_contract", worst <= 1.0 + 1e-12, "largest clipped norm " + num(worst)};
}

CheckResult check_loss_spike_rule() {
  Vec history(60);
  Rng rng(201);
  for (double& v : history) v = 1.0 + 0.1 * rng.uniform();
  Vec with_spike = history;
  with_spike.push_back(2.0 * median(Vec(history.end() - 50, history.end())) * 1.001);
  Vec without = history;
  without.push_back(1.5);
  const bool ok = harness::detect_loss_spike(with_spike) && !harness::detect_loss_spike(without);
  return {"loss_spike_median_rule", ok, ok ? "flags 2x the rolling median only" : "wrong verdict"};
}

}  // namespace

std::vector<CheckResult> run_selftest(const SelftestHooks& hooks) {
  std::vector<CheckResult> out;
  auto guarded = [&](const char* name, auto&& fn) {
    try {
      out.push_back(fn());
    } catch (const std::exception& e) {
      out.push_back({name, false, std::string("threw: ") + e.what()});
    }
  };
  guarded("adam_trace", check_adam);
  guarded("adam_gradclip_trace", check_adam_gradclip);
  guarded("adafactor_trace", check_adafactor);
  guarded("lion_trace", check_lion);
  guarded("adam_mini_trace", check_adam_mini);
  guarded("spam_trace", check_spam);
  guarded("stable_spam_trace", check_stable_spam);
  guarded("adaclip_trace", [&] { return check_adaclip(hooks); });
  guarded("adaclip_worked_example", [&] { return check_adaclip_worked_example(hooks); });
  guarded("adagn_trace", check_adagn);
  guarded("compose_equals_stable_spam", check_compose_identity);
  guarded("moret_boundaries", check_moret_boundaries);
  guarded("bias_correction_constants", [&] { return check_bias_constants(hooks); });
  guarded("matmul_naive", check_matmul);
  guarded("kernel_backends", check_kernel_backends);
  guarded("quant_grid_snap", check_quant_snap);
  guarded("quant_properties", check_quant_properties);
  guarded("gradcheck_quadratic", check_grad_quadratic);
  guarded("gradcheck_rmsnorm", check_grad_rmsnorm);
  guarded("gradcheck_swiglu", check_grad_swiglu);
  guarded("gradcheck_mlp", check_grad_mlp);
  guarded("gradclip_contract", check_gradclip);
  guarded("loss_spike_median_rule", check_loss_spike_rule);
  return out;
}

}  // namespace sspam::reference
