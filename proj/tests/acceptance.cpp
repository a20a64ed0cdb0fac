// SPDX-License-Identifier: Apache-2.0
//
// Acceptance run: one PASS/FAIL line per criterion. The exit status is
// nonzero only when a criterion outside kKnownFailures fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <limits>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "sspam/harness.hpp"
#include "sspam/models.hpp"
#include "sspam/optim.hpp"
#include "sspam/quant.hpp"
#include "sspam/reference.hpp"
#include "sspam/rng.hpp"

using namespace sspam;
using reference::History;
using reference::Vec;
namespace fs = std::filesystem;

namespace {

// Criteria that fail on this testbed for reasons recorded in the project
// notes; they still print FAIL.
const std::set<int> kKnownFailures{7, 8};

struct Verdict {
  bool pass = false;
  std::string detail;
};

std::string num(double v) {
  std::ostringstream s;
  s.precision(4);
  s << v;
  return s.str();
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

Vec start(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  Vec w(n);
  for (double& x : w) x = rng.normal();
  return w;
}

Vec cosine_lrs(std::size_t steps, double peak) {
  Vec lrs(steps);
  for (std::size_t i = 0; i < steps; ++i) lrs[i] = peak * (0.55 + 0.45 * std::cos(0.05 * i));
  return lrs;
}

// ---------------------------------------------------------------------------

Verdict ac1_oracles() {
  constexpr std::size_t kSteps = 100;
  const auto t0 = std::chrono::steady_clock::now();
  std::map<std::string, double> err;
  for (std::size_t rows : {std::size_t{1}, std::size_t{3}}) {
    const std::size_t cols = rows == 1 ? 1 : 4;
    const std::size_t n = rows * cols;
    const auto grads = reference::random_gradient_trace(kSteps, n, 1000 + rows, 0.1, 100.0);
    const Vec w0 = start(n, 2000 + rows);
    const Vec lrs = cosine_lrs(kSteps, 1e-2);
    auto lib = [&](const optim::OptimizerSpec& s) {
      return reference::library_trace(s, w0, rows, cols, grads, lrs);
    };
    auto track = [&](const std::string& name, const History& a, const History& b) {
      err[name] = std::max(err[name], reference::max_abs_diff(a, b));
    };

    optim::OptimizerSpec adam;
    track("adam", lib(adam), reference::adam_trace(w0, grads, lrs, {}));

    optim::OptimizerSpec clip;
    clip.transforms = {optim::TransformKind::GradClip};
    track("adam+gradclip", lib(clip), reference::adam_gradclip_trace(w0, grads, lrs, {}, 1.0));

    optim::OptimizerSpec fac;
    fac.base = optim::BaseKind::Adafactor;
    track("adafactor", lib(fac), reference::adafactor_trace(w0, rows, cols, grads, lrs, {}));

    optim::OptimizerSpec lion;
    lion.base = optim::BaseKind::Lion;
    lion.lion.weight_decay = 0.05;
    track("lion", lib(lion), reference::lion_trace(w0, grads, lrs, 0.9, 0.99, 0.05));

    optim::OptimizerSpec mini;
    mini.base = optim::BaseKind::AdamMini;
    track("adam-mini", lib(mini), reference::adam_mini_trace(w0, grads, lrs, 0.9, 0.999, 1e-8));

    optim::OptimizerSpec spam;
    spam.base = optim::BaseKind::Spam;
    spam.spam.reset_interval = 40;
    spam.spam.warmup_steps = 15;
    spam.spam.theta = 20.0;
    reference::SpamHyper sh;
    sh.reset_interval = 40;
    sh.warmup = 15;
    sh.theta = 20.0;
    track("spam", lib(spam), reference::spam_trace(w0, grads, lrs, sh));

    optim::OptimizerSpec stable;
    stable.base = optim::BaseKind::StableSpam;
    stable.stable_spam.moret_interval = 35;
    reference::StableSpamHyper st;
    st.moret_interval = 35;
    track("stable-spam", lib(stable), reference::stable_spam_trace(w0, grads, lrs, st));
  }
  const double elapsed = seconds_since(t0);
  bool ok = elapsed < 1.0;
  std::string detail;
  for (const auto& [name, e] : err) {
    ok = ok && e <= 1e-12;
    detail += name + "=" + num(e) + " ";
  }
  return {ok, detail + "time=" + num(elapsed) + "s"};
}

Verdict ac2_composition() {
  // Bit-identical composition at the default and at a short reset interval.
  bool identical = true;
  for (std::int64_t interval : {std::int64_t{1000}, std::int64_t{30}}) {
    const auto grads = reference::random_gradient_trace(100, 16, 3000 + interval, 0.1, 100.0);
    const Vec w0 = start(16, 3100);
    const Vec lrs = cosine_lrs(100, 1e-2);
    optim::OptimizerSpec stable;
    stable.base = optim::BaseKind::StableSpam;
    stable.stable_spam.moret_interval = interval;
    optim::OptimizerSpec composed;
    composed.adam = {0.9, 0.999, 1e-6, interval};
    composed.transforms = {optim::TransformKind::AdaClip, optim::TransformKind::AdaGN};
    identical = identical && reference::library_trace(stable, w0, 4, 4, grads, lrs) ==
                                 reference::library_trace(composed, w0, 4, 4, grads, lrs);
  }

  // Resets land exactly on multiples of the interval, with moments zeroed
  // before that step's update.
  std::vector<std::int64_t> resets;
  bool zeroed = true;
  {
    optim::StableSpamConfig cfg;
    cfg.moret_interval = 20;
    optim::StableSpamState st = optim::StableSpamState::like(Matrix(4, 4));
    Matrix w(4, 4);
    Rng rng(3200);
    for (std::int64_t step = 1; step <= 100; ++step) {
      Matrix g = random_normal(4, 4, rng);
      const auto info = optim::stable_spam_step(w, g, st, cfg, 1e-3, step);
      if (info.reset) {
        resets.push_back(step);
        // After a reset the first moment holds only this step's contribution.
        for (std::size_t i = 0; i < 16; ++i) {
          zeroed = zeroed && st.adam.m[i] == (1 - cfg.beta1) * g[i] &&
                   st.adam.step_in_cycle == 1;
        }
      }
    }
  }
  const bool boundaries = zeroed && resets == std::vector<std::int64_t>{20, 40, 60, 80, 100};

  // Bias-corrected constants under a constant gradient.
  double err = 0.0;
  for (double c : {0.37, -2.5}) {
    optim::AdamMoments m = optim::AdamMoments::like(Matrix(1, 1));
    optim::AdaGnState gn;
    optim::AdaClipState clip;
    Matrix w(1, 1);
    for (std::int64_t step = 1; step <= 60; ++step) {
      optim::moret_reset(m, step, 16);
      optim::adam_step(w, Matrix::row({c}), m, 1e-3, 0.9, 0.999, 1e-8);
      const double t = static_cast<double>(m.step_in_cycle);
      err = std::max(err, std::fabs(m.m[0] / (1 - std::pow(0.9, t)) - c));
      err = std::max(err, std::fabs(m.v[0] / (1 - std::pow(0.999, t)) - c * c));
      Matrix g = Matrix::row({c});
      optim::adagn(g, gn, 0.7, 0.9, 1e-6);
      const double ts = static_cast<double>(step);
      err = std::max(err, std::fabs(gn.m_norm / (1 - std::pow(0.7, ts)) - std::fabs(c)));
      err = std::max(err, std::fabs(gn.v_norm / (1 - std::pow(0.9, ts)) - c * c));
      Matrix h = Matrix::row({c});
      optim::adaclip(h, clip, 0.999);
      err = std::max(err, std::fabs(optim::adaclip_threshold(clip, 0.999) - std::fabs(c)));
    }
  }
  return {identical && boundaries && err <= 1e-12,
          std::string("compose ") + (identical ? "bit-identical" : "differs") + ", resets " +
              (boundaries ? "at 20,40,60,80,100" : "wrong") + ", constants err=" + num(err)};
}

Verdict ac3_adaclip_example() {
  optim::AdaClipState s;
  Matrix g1 = Matrix::row({1.0, 0.5});
  optim::adaclip(g1, s, 0.999);
  Matrix g2 = Matrix::row({10.0, 0.1});
  const std::size_t clipped = optim::adaclip(g2, s, 0.999);
  const double t_hat = 0.010999 / 0.001999;
  const auto oracle = reference::adaclip_trace({{1.0, 0.5}, {10.0, 0.1}}, 0.999);
  const double err = std::max({std::fabs(optim::adaclip_threshold(s, 0.999) - t_hat),
                               std::fabs(g2[0] - t_hat), std::fabs(g2[0] - oracle[1].output[0]),
                               std::fabs(oracle[1].threshold_hat - t_hat), std::fabs(g2[1] - 0.1)});
  return {err <= 1e-9 && clipped == 1, "T2=" + num(t_hat) + " err=" + num(err)};
}

Verdict ac4_adagn() {
  Rng rng(4000);
  optim::AdaGnState s;
  double worst = 0.0;
  for (std::int64_t t = 1; t <= 1000; ++t) {
    const std::size_t rows = 1 + rng.below(5), cols = 1 + rng.below(5);
    Matrix g = random_normal(rows, cols, rng, std::exp(4.0 * rng.normal()));
    const double n = frobenius_norm(g);
    const double m = 0.7 * s.m_norm + 0.3 * n;
    const double v = 0.9 * s.v_norm + 0.1 * n * n;
    const double m_hat = m / (1 - std::pow(0.7, static_cast<double>(t)));
    const double v_hat = v / (1 - std::pow(0.9, static_cast<double>(t)));
    const double expected = m_hat / (std::sqrt(v_hat) + 1e-6);
    optim::adagn(g, s, 0.7, 0.9, 1e-6);
    worst = std::max(worst, std::fabs(frobenius_norm(g) - expected) / expected);
  }

  // Ten steps at norm 1, then a 10x spike.
  optim::AdaGnState flat;
  Rng dir(4001);
  double post = 0.0;
  for (int t = 1; t <= 11; ++t) {
    Matrix g = random_normal(4, 4, dir);
    scale_in_place(g, (t == 11 ? 10.0 : 1.0) / frobenius_norm(g));
    optim::adagn(g, flat, 0.7, 0.9, 1e-6);
    post = frobenius_norm(g);
  }
  const bool attenuated = post < 10.0;
  return {worst <= 1e-12 && attenuated,
          "max rel err=" + num(worst) + ", spike norm 10 -> " + num(post)};
}

Verdict ac5_quantizer() {
  const auto t0 = std::chrono::steady_clock::now();
  const std::vector<double> fp4{-1.75, -1.5, -1.25, -1.0, -0.75, -0.5, -0.25, 0.0,
                                0.25,  0.5,  0.75,  1.0,  1.25,  1.5,  1.75};
  bool ok = quant::grid(quant::Format::Fp4E1M2) == fp4;
  std::string failure;
  Rng rng(5000);
  for (auto f : {quant::Format::Int2, quant::Format::Int3, quant::Format::Int4,
                 quant::Format::Fp4E1M2}) {
    const quant::QuantSpec spec{f};
    for (int trial = 0; trial < 10000 && ok; ++trial) {
      const std::size_t rows = 1 + rng.below(8), cols = 1 + rng.below(8);
      const Matrix x = random_normal(rows, cols, rng, std::exp(2.0 * rng.normal()));
      const Matrix q = quant::qdq(x, spec);
      const double amax = max_abs(x);
      if (quant::qdq(q, spec) != q) failure = "idempotence";
      for (std::size_t i = 0; i < x.size() && failure.empty(); ++i) {
        if (std::fabs(q[i]) > amax) failure = "boundedness";
        if (q[i] != 0.0 && std::signbit(q[i]) != std::signbit(x[i])) failure = "sign";
        if (std::fabs(x[i]) == amax && q[i] != x[i]) failure = "absmax fixed point";
      }
      if (!failure.empty()) {
        failure += " (" + std::string(quant::to_string(f)) + ")";
        ok = false;
      }
    }
  }
  const double elapsed = seconds_since(t0);
  ok = ok && elapsed < 10.0;
  return {ok, (failure.empty() ? std::string("4 formats x 1e4 matrices") : failure) +
                  ", fp4 grid 15 values, time=" + num(elapsed) + "s"};
}

Verdict ac6_gradchecks() {
  const auto t0 = std::chrono::steady_clock::now();
  Rng rng(6000);
  double worst = 0.0;
  auto record = [&](const Matrix& analytic, const Matrix& numeric) {
    worst = std::max(worst, reference::relative_error(analytic, numeric));
  };
  auto contract = [](const Matrix& y, const Matrix& dy) {
    double s = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) s += y[i] * dy[i];
    return s;
  };
  for (int shape = 0; shape < 20; ++shape) {
    const std::size_t rows = 1 + rng.below(5);
    const std::size_t d = 2 + rng.below(6);
    const std::size_t f = 2 + rng.below(6);

    models::QuadraticProblem p = models::QuadraticProblem::random(d, 6100 + shape);
    record(models::quadratic_loss_grad(p).grad,
           reference::finite_difference(
               [&](const Matrix& w) {
                 models::QuadraticProblem q = p;
                 q.w = w;
                 return models::quadratic_loss(q);
               },
               p.w));

    const Matrix x = random_normal(rows, d, rng);
    const Matrix gain = random_normal(1, d, rng);
    const Matrix dy = random_normal(rows, d, rng);
    const auto rn = models::rmsnorm_fwd_bwd(x, gain).backward(dy);
    record(rn.dx, reference::finite_difference(
                      [&](const Matrix& v) { return contract(models::rmsnorm_fwd_bwd(v, gain).y, dy); },
                      x));
    record(rn.dgain,
           reference::finite_difference(
               [&](const Matrix& v) { return contract(models::rmsnorm_fwd_bwd(x, v).y, dy); }, gain));

    const Matrix wg = random_normal(d, f, rng);
    const Matrix wu = random_normal(d, f, rng);
    const Matrix dz = random_normal(rows, f, rng);
    const auto sg = models::swiglu_fwd_bwd(x, wg, wu).backward(dz);
    auto sw = [&](const Matrix& a, const Matrix& b, const Matrix& c) {
      return contract(models::swiglu_fwd_bwd(a, b, c).y, dz);
    };
    record(sg.dx, reference::finite_difference([&](const Matrix& v) { return sw(v, wg, wu); }, x));
    record(sg.dw_gate,
           reference::finite_difference([&](const Matrix& v) { return sw(x, v, wu); }, wg));
    record(sg.dw_up, reference::finite_difference([&](const Matrix& v) { return sw(x, wg, v); }, wu));

    const std::size_t classes = 2 + rng.below(3);
    const models::MlpModel model =
        models::MlpModel::init({d, 2 + rng.below(5), f, rng.below(3), classes}, 6200 + shape);
    const Matrix inputs = random_normal(rows + 1, d, rng);
    std::vector<int> labels(rows + 1);
    for (int& l : labels) l = static_cast<int>(rng.below(classes));
    const auto mg = models::mlp_forward_backward(model, inputs, labels, {});
    for (std::size_t i = 0; i < model.params().size(); ++i) {
      record(mg.grads[i], reference::finite_difference(
                              [&](const Matrix& v) {
                                models::MlpModel m = model;
                                m.params()[i] = v;
                                return models::mlp_loss(m, inputs, labels, {});
                              },
                              model.params()[i]));
    }
  }
  const double elapsed = seconds_since(t0);
  return {worst < 1e-5 && elapsed < 30.0,
          "20 shapes, max rel err=" + num(worst) + ", time=" + num(elapsed) + "s"};
}

// Stability protocol shared by the two phenomenology criteria.
constexpr std::uint64_t kSeeds[] = {1000, 1001, 1002};

harness::RunConfig spiky_int4_task() {
  harness::RunConfig cfg;
  cfg.quant.format = quant::Format::Int4;
  cfg.spikes = {0.1, 0.5};
  return cfg;
}

// final validation loss per [lr][seed]; nullopt for diverged runs.
using Grid = std::vector<std::vector<std::optional<double>>>;

Grid sweep_seeds(harness::RunConfig cfg, const std::vector<double>& lrs) {
  Grid out(lrs.size());
  for (std::uint64_t seed : kSeeds) {
    cfg.seed = seed;
    const harness::SweepResult r = harness::sweep(cfg, lrs);
    for (std::size_t i = 0; i < lrs.size(); ++i) out[i].push_back(r.points[i].final_val_loss);
  }
  return out;
}

// Seed mean per lr; infinity when any seed diverged.
std::vector<double> seed_means(const Grid& g) {
  std::vector<double> means;
  for (const auto& row : g) {
    double s = 0.0;
    for (const auto& v : row) s += v ? *v : std::numeric_limits<double>::infinity();
    means.push_back(s / static_cast<double>(row.size()));
  }
  return means;
}

std::string list(const std::vector<double>& v) {
  std::string s;
  for (double x : v) s += (s.empty() ? "" : ",") + num(x);
  return "[" + s + "]";
}

Verdict ac7_stability() {
  const std::vector<double> lrs{1e-2, 3e-2, 6e-2, 1e-1, 3e-1};
  harness::RunConfig adam = spiky_int4_task();
  harness::RunConfig stable = spiky_int4_task();
  stable.optimizer.base = optim::BaseKind::StableSpam;
  const auto adam_mean = seed_means(sweep_seeds(adam, lrs));
  const auto stable_mean = seed_means(sweep_seeds(stable, lrs));
  const double adam_best = *std::min_element(adam_mean.begin(), adam_mean.end());
  const double stable_best = *std::min_element(stable_mean.begin(), stable_mean.end());
  auto bad = [](const std::vector<double>& m, double best) {
    return std::count_if(m.begin(), m.end(),
                         [&](double v) { return !std::isfinite(v) || v > 2.0 * best; });
  };
  const auto adam_bad = bad(adam_mean, adam_best);
  const auto stable_bad = bad(stable_mean, stable_best);
  const bool a = adam_bad >= stable_bad;
  const bool b = stable_best <= adam_best * 1.01;
  return {a && b, "(a) bad lrs adam=" + std::to_string(adam_bad) + " stable=" +
                      std::to_string(stable_bad) + (a ? " ok" : " fails") +
                      "; (b) best adam=" + num(adam_best) + " stable=" + num(stable_best) +
                      (b ? " ok" : " fails") + "; adam " + list(adam_mean) + " stable " +
                      list(stable_mean)};
}

Verdict ac8_composition_benefit() {
  const std::vector<double> lrs{1e-3, 3e-3, 6e-3, 1e-2, 3e-2};
  harness::RunConfig lion = spiky_int4_task();
  lion.optimizer.base = optim::BaseKind::Lion;
  harness::RunConfig composed = lion;
  composed.optimizer.transforms = {optim::TransformKind::AdaClip, optim::TransformKind::AdaGN};
  const Grid lion_grid = sweep_seeds(lion, lrs);
  const Grid comp_grid = sweep_seeds(composed, lrs);
  auto best_row = [](const Grid& g) {
    const auto m = seed_means(g);
    return static_cast<std::size_t>(std::min_element(m.begin(), m.end()) - m.begin());
  };
  const std::size_t li = best_row(lion_grid), ci = best_row(comp_grid);
  int wins = 0;
  std::vector<double> lv, cv;
  for (std::size_t s = 0; s < std::size(kSeeds); ++s) {
    const auto& l = lion_grid[li][s];
    const auto& c = comp_grid[ci][s];
    lv.push_back(l ? *l : NAN);
    cv.push_back(c ? *c : NAN);
    if (c && (!l || *c <= *l)) ++wins;
  }
  return {wins >= 2, "wins " + std::to_string(wins) + "/3; lion lr=" + num(lrs[li]) + " " +
                         list(lv) + ", lion+adaclip+adagn lr=" + num(lrs[ci]) + " " + list(cv)};
}

Verdict ac9_determinism() {
  const fs::path dir = fs::temp_directory_path() / "sspam_acceptance_determinism";
  fs::remove_all(dir);
  fs::create_directories(dir);
  bool ok = true;
  int configs = 0;
  for (auto base : {optim::BaseKind::Adam, optim::BaseKind::Spam, optim::BaseKind::StableSpam,
                    optim::BaseKind::Lion, optim::BaseKind::Adafactor, optim::BaseKind::AdamMini}) {
    harness::RunConfig cfg = spiky_int4_task();
    cfg.optimizer.base = base;
    cfg.optimizer.stable_spam.moret_interval = 100;
    cfg.optimizer.spam.reset_interval = 100;
    cfg.schedule.total_steps = 300;
    cfg.lr_peak = 3e-3;
    cfg.seed = 9000 + static_cast<std::uint64_t>(configs);
    const fs::path a = dir / "a.csv", b = dir / "b.csv";
    harness::write_file_atomic(a, harness::records_to_csv(harness::run(cfg).records));
    harness::write_file_atomic(b, harness::records_to_csv(harness::run(cfg).records));
    ok = ok && harness::read_file(a) == harness::read_file(b);
    ++configs;
  }
  fs::remove_all(dir);
  return {ok, std::to_string(configs) + " configs run twice, CSVs " +
                  (ok ? "byte-identical" : "differ")};
}

Verdict ac10_gradclip() {
  Rng rng(10000);
  double worst = 0.0;
  std::size_t clipped_sets = 0;
  for (int set = 0; set < 100; ++set) {
    std::vector<Matrix> layers;
    const std::size_t count = 1 + rng.below(6);
    const double scale = std::exp(3.0 * rng.normal());
    for (std::size_t l = 0; l < count; ++l) {
      layers.push_back(random_normal(1 + rng.below(8), 1 + rng.below(8), rng, scale));
    }
    if (global_grad_norm(layers) > 1.0) ++clipped_sets;
    optim::grad_clip_global(std::span<Matrix>(layers), 1.0);
    worst = std::max(worst, global_grad_norm(layers));
  }
  return {worst <= 1.0 + 1e-12,
          "max norm after clip=" + num(worst) + " (" + std::to_string(clipped_sets) +
              "/100 sets needed clipping)"};
}

}  // namespace

int main() {
  const std::vector<std::pair<int, std::function<Verdict()>>> criteria{
      {1, ac1_oracles},       {2, ac2_composition},         {3, ac3_adaclip_example},
      {4, ac4_adagn},         {5, ac5_quantizer},           {6, ac6_gradchecks},
      {7, ac7_stability},     {8, ac8_composition_benefit}, {9, ac9_determinism},
      {10, ac10_gradclip}};
  int unexpected = 0;
  for (const auto& [id, fn] : criteria) {
    Verdict v;
    try {
      v = fn();
    } catch (const std::exception& e) {
      v = {false, std::string("threw: ") + e.what()};
    }
    const bool known = !v.pass && kKnownFailures.count(id);
    if (!v.pass && !known) ++unexpected;
    std::printf("AC%-2d %s  %s%s\n", id, v.pass ? "PASS" : "FAIL", v.detail.c_str(),
                known ? "  [known failure]" : "");
    std::fflush(stdout);
  }
  return unexpected == 0 ? 0 : 1;
}
