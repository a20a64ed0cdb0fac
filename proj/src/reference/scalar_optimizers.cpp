// SPDX-License-Identifier: Apache-2.0
#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "sspam/reference.hpp"
#include "sspam/rng.hpp"

namespace sspam::reference {
namespace {

double l2(const Vec& g) {
  double s = 0.0;
  for (double x : g) s += x * x;
  return std::sqrt(s);
}

double sgn(double x) {
  if (x > 0.0) return 1.0;
  if (x < 0.0) return -1.0;
  return 0.0;
}

}  // namespace

History adam_trace(Vec w, const std::vector<Vec>& grads, const Vec& lrs, const AdamHyper& h) {
  const std::size_t n = w.size();
  Vec m(n, 0.0), v(n, 0.0);
  std::int64_t t = 0;
  History out;
  for (std::size_t s = 0; s < grads.size(); ++s) {
    const std::int64_t step = static_cast<std::int64_t>(s) + 1;
    if (h.moret_interval > 0 && step % h.moret_interval == 0) {
      std::fill(m.begin(), m.end(), 0.0);
      std::fill(v.begin(), v.end(), 0.0);
      t = 0;
    }
    t += 1;
    for (std::size_t i = 0; i < n; ++i) {
      const double g = grads[s][i];
      m[i] = h.beta1 * m[i] + (1 - h.beta1) * g;
      v[i] = h.beta2 * v[i] + (1 - h.beta2) * g * g;
      const double mh = m[i] / (1 - std::pow(h.beta1, t));
      const double vh = v[i] / (1 - std::pow(h.beta2, t));
      w[i] = w[i] - lrs[s] * mh / (std::sqrt(vh) + h.eps);
    }
    out.push_back(w);
  }
  return out;
}

History adam_gradclip_trace(Vec w, const std::vector<Vec>& grads, const Vec& lrs,
                            const AdamHyper& h, double threshold) {
  std::vector<Vec> clipped = grads;
  for (Vec& g : clipped) {
    const double norm = l2(g);
    if (norm > threshold) {
      for (double& x : g) x = x * (threshold / norm);
    }
  }
  return adam_trace(std::move(w), clipped, lrs, h);
}

History adafactor_trace(Vec w, std::size_t rows, std::size_t cols, const std::vector<Vec>& grads,
                        const Vec& lrs, const AdafactorHyper& h) {
  const bool factored = rows > 1 && cols > 1;
  Vec r(rows, 0.0), c(cols, 0.0), v(w.size(), 0.0);
  History out;
  for (std::size_t s = 0; s < grads.size(); ++s) {
    const Vec& g = grads[s];
    const double t = static_cast<double>(s + 1);
    const double beta = 1 - std::pow(t, -h.decay_rate);
    Vec u(w.size());
    if (factored) {
      for (std::size_t i = 0; i < rows; ++i) {
        double acc = 0.0;
        for (std::size_t j = 0; j < cols; ++j) acc += g[i * cols + j] * g[i * cols + j] + h.eps1;
        r[i] = beta * r[i] + (1 - beta) * (acc / static_cast<double>(cols));
      }
      for (std::size_t j = 0; j < cols; ++j) {
        double acc = 0.0;
        for (std::size_t i = 0; i < rows; ++i) acc += g[i * cols + j] * g[i * cols + j] + h.eps1;
        c[j] = beta * c[j] + (1 - beta) * (acc / static_cast<double>(rows));
      }
      double rmean = 0.0;
      for (double x : r) rmean += x;
      rmean /= static_cast<double>(rows);
      for (std::size_t i = 0; i < rows; ++i)
        for (std::size_t j = 0; j < cols; ++j)
          u[i * cols + j] = g[i * cols + j] / std::sqrt(r[i] * c[j] / rmean);
    } else {
      for (std::size_t i = 0; i < w.size(); ++i) {
        v[i] = beta * v[i] + (1 - beta) * (g[i] * g[i] + h.eps1);
        u[i] = g[i] / std::sqrt(v[i]);
      }
    }
    const double rms_u = l2(u) / std::sqrt(static_cast<double>(u.size()));
    const double rms_w = l2(w) / std::sqrt(static_cast<double>(w.size()));
    const double d = std::max(1.0, rms_u / h.clip_d);
    const double alpha = h.scale_parameter ? lrs[s] * std::max(h.eps2, rms_w) : lrs[s];
    for (std::size_t i = 0; i < w.size(); ++i) w[i] -= alpha * u[i] / d;
    out.push_back(w);
  }
  return out;
}

History lion_trace(Vec w, const std::vector<Vec>& grads, const Vec& lrs, double beta1,
                   double beta2, double weight_decay) {
  Vec m(w.size(), 0.0);
  History out;
  for (std::size_t s = 0; s < grads.size(); ++s) {
    for (std::size_t i = 0; i < w.size(); ++i) {
      const double g = grads[s][i];
      const double update = sgn(beta1 * m[i] + (1 - beta1) * g);
      w[i] = w[i] - lrs[s] * (update + weight_decay * w[i]);
      m[i] = beta2 * m[i] + (1 - beta2) * g;
    }
    out.push_back(w);
  }
  return out;
}

History adam_mini_trace(Vec w, const std::vector<Vec>& grads, const Vec& lrs, double beta1,
                        double beta2, double eps) {
  Vec m(w.size(), 0.0);
  double v = 0.0;
  History out;
  for (std::size_t s = 0; s < grads.size(); ++s) {
    const double t = static_cast<double>(s + 1);
    double msq = 0.0;
    for (double g : grads[s]) msq += g * g;
    msq /= static_cast<double>(grads[s].size());
    v = beta2 * v + (1 - beta2) * msq;
    const double vh = v / (1 - std::pow(beta2, t));
    for (std::size_t i = 0; i < w.size(); ++i) {
      m[i] = beta1 * m[i] + (1 - beta1) * grads[s][i];
      const double mh = m[i] / (1 - std::pow(beta1, t));
      w[i] = w[i] - lrs[s] * mh / (std::sqrt(vh) + eps);
    }
    out.push_back(w);
  }
  return out;
}

History spam_trace(Vec w, const std::vector<Vec>& grads, const Vec& lrs, const SpamHyper& h) {
  const std::size_t n = w.size();
  Vec m(n, 0.0), v(n, 0.0);
  std::int64_t t = 0;
  std::int64_t last_reset = -1;
  History out;
  for (std::size_t s = 0; s < grads.size(); ++s) {
    const std::int64_t step = static_cast<std::int64_t>(s) + 1;
    double mult = 1.0;
    if (last_reset >= 0 && step - last_reset < h.warmup) {
      mult = static_cast<double>(step - last_reset) / static_cast<double>(h.warmup);
    }
    t += 1;
    for (std::size_t i = 0; i < n; ++i) {
      double g = grads[s][i];
      if (v[i] > 0 && g * g / v[i] > h.theta) g = sgn(g) * std::sqrt(h.theta * v[i]);
      m[i] = h.beta1 * m[i] + (1 - h.beta1) * g;
      v[i] = h.beta2 * v[i] + (1 - h.beta2) * g * g;
      const double mh = m[i] / (1 - std::pow(h.beta1, t));
      const double vh = v[i] / (1 - std::pow(h.beta2, t));
      w[i] = w[i] - lrs[s] * mult * mh / (std::sqrt(vh) + h.eps);
    }
    if (h.reset_interval > 0 && step % h.reset_interval == 0) {
      std::fill(m.begin(), m.end(), 0.0);
      std::fill(v.begin(), v.end(), 0.0);
      t = 0;
      last_reset = step;
    }
    out.push_back(w);
  }
  return out;
}

History stable_spam_trace(Vec w, const std::vector<Vec>& grads, const Vec& lrs,
                          const StableSpamHyper& h) {
  const std::size_t n = w.size();
  Vec m(n, 0.0), v(n, 0.0);
  double m_norm = 0.0, v_norm = 0.0, thr = 0.0;
  std::int64_t t_adam = 0;
  History out;
  for (std::size_t s = 0; s < grads.size(); ++s) {
    const std::int64_t step = static_cast<std::int64_t>(s) + 1;
    const double t = static_cast<double>(step);
    Vec g = grads[s];

    double gmax = 0.0;
    for (double x : g) gmax = std::max(gmax, std::fabs(x));
    thr = h.gamma3 * thr + (1 - h.gamma3) * gmax;
    const double thr_hat = thr / (1 - std::pow(h.gamma3, t));
    for (double& x : g) {
      if (std::fabs(x) > thr_hat) x = x / gmax * thr_hat;
    }

    const double norm = l2(g);
    m_norm = h.gamma1 * m_norm + (1 - h.gamma1) * norm;
    v_norm = h.gamma2 * v_norm + (1 - h.gamma2) * norm * norm;
    if (norm > 0) {
      const double mh = m_norm / (1 - std::pow(h.gamma1, t));
      const double vh = v_norm / (1 - std::pow(h.gamma2, t));
      for (double& x : g) x = x / norm * (mh / (std::sqrt(vh) + h.eps));
    }

    if (h.moret_interval > 0 && step % h.moret_interval == 0) {
      std::fill(m.begin(), m.end(), 0.0);
      std::fill(v.begin(), v.end(), 0.0);
      t_adam = 0;
    }
    t_adam += 1;
    for (std::size_t i = 0; i < n; ++i) {
      m[i] = h.beta1 * m[i] + (1 - h.beta1) * g[i];
      v[i] = h.beta2 * v[i] + (1 - h.beta2) * g[i] * g[i];
      const double mh = m[i] / (1 - std::pow(h.beta1, t_adam));
      const double vh = v[i] / (1 - std::pow(h.beta2, t_adam));
      w[i] = w[i] - lrs[s] * mh / (std::sqrt(vh) + h.eps);
    }
    out.push_back(w);
  }
  return out;
}

std::vector<AdaClipStep> adaclip_trace(const std::vector<Vec>& grads, double gamma3) {
  std::vector<AdaClipStep> out;
  double thr = 0.0;
  for (std::size_t s = 0; s < grads.size(); ++s) {
    double gmax = 0.0;
    for (double x : grads[s]) gmax = std::max(gmax, std::fabs(x));
    thr = gamma3 * thr + (1 - gamma3) * gmax;
    AdaClipStep step;
    step.threshold_hat = thr / (1 - std::pow(gamma3, static_cast<double>(s + 1)));
    step.output = grads[s];
    for (double& x : step.output) {
      if (std::fabs(x) > step.threshold_hat) x = x / gmax * step.threshold_hat;
    }
    out.push_back(std::move(step));
  }
  return out;
}

std::vector<AdaGnStep> adagn_trace(const std::vector<Vec>& grads, double gamma1, double gamma2,
                                   double eps) {
  std::vector<AdaGnStep> out;
  double mn = 0.0, vn = 0.0;
  for (std::size_t s = 0; s < grads.size(); ++s) {
    const double t = static_cast<double>(s + 1);
    const double norm = l2(grads[s]);
    mn = gamma1 * mn + (1 - gamma1) * norm;
    vn = gamma2 * vn + (1 - gamma2) * norm * norm;
    AdaGnStep step;
    step.m_hat = mn / (1 - std::pow(gamma1, t));
    step.v_hat = vn / (1 - std::pow(gamma2, t));
    step.output = grads[s];
    if (norm > 0) {
      for (double& x : step.output) x = x / norm * (step.m_hat / (std::sqrt(step.v_hat) + eps));
    }
    out.push_back(std::move(step));
  }
  return out;
}

Matrix naive_matmul(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.rows()) throw std::invalid_argument("naive_matmul: inner dimensions differ");
  Matrix c(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    for (std::size_t j = 0; j < b.cols(); ++j) {
      double acc = 0.0;
      for (std::size_t k = 0; k < a.cols(); ++k) acc += a(i, k) * b(k, j);
      c(i, j) = acc;
    }
  }
  return c;
}

Matrix brute_force_qdq(const Matrix& x, quant::Format format) {
  if (format == quant::Format::None) return x;
  double absmax = 0.0;
  for (double v : x.data()) absmax = std::max(absmax, std::fabs(v));
  if (absmax == 0.0) return x;
  // Search in code units (grid value / spacing) so the arithmetic matches the
  // documented x / absmax * levels mapping.
  const std::vector<double> g = quant::grid(format);
  const double unit = g[g.size() / 2 + 1] - g[g.size() / 2];
  const double levels = g.back() / unit;
  Matrix out = x;
  for (double& v : out.data()) {
    const double target = v / absmax * levels;
    double best = 0.0;
    double best_d = std::numeric_limits<double>::infinity();
    for (double q : g) {
      const double code = q / unit;
      const double d = std::fabs(code - target);
      const bool even = std::fmod(std::fabs(code), 2.0) == 0.0;
      if (d < best_d || (d == best_d && even)) {
        best = code;
        best_d = d;
      }
    }
    v = best / levels * absmax;
  }
  return out;
}

double median(Vec values) {
  if (values.empty()) throw std::invalid_argument("median of empty list");
  std::sort(values.begin(), values.end());
  const std::size_t n = values.size();
  return n % 2 ? values[n / 2] : (values[n / 2 - 1] + values[n / 2]) / 2;
}

Matrix finite_difference(const std::function<double(const Matrix&)>& f, const Matrix& x,
                         double h) {
  Matrix grad(x.rows(), x.cols());
  Matrix probe = x;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double orig = probe[i];
    probe[i] = orig + h;
    const double up = f(probe);
    probe[i] = orig - h;
    const double down = f(probe);
    probe[i] = orig;
    grad[i] = (up - down) / (2 * h);
  }
  return grad;
}

double max_abs_diff(const Vec& a, const Vec& b) {
  if (a.size() != b.size()) return std::numeric_limits<double>::infinity();
  double d = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) d = std::max(d, std::fabs(a[i] - b[i]));
  return d;
}

double max_abs_diff(const History& a, const History& b) {
  if (a.size() != b.size()) return std::numeric_limits<double>::infinity();
  double d = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) d = std::max(d, max_abs_diff(a[i], b[i]));
  return d;
}

double relative_error(const Matrix& a, const Matrix& b) {
  if (!a.same_shape(b)) return std::numeric_limits<double>::infinity();
  double diff = 0.0, ref = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    diff += (a[i] - b[i]) * (a[i] - b[i]);
    ref += b[i] * b[i];
  }
  return std::sqrt(diff) / std::max(std::sqrt(ref), 1e-8);
}

std::vector<Vec> random_gradient_trace(std::size_t steps, std::size_t n, std::uint64_t seed,
                                       double spike_prob, double spike_scale) {
  Rng rng(seed);
  std::vector<Vec> out(steps, Vec(n));
  for (Vec& g : out) {
    for (double& x : g) x = rng.normal();
    if (rng.bernoulli(spike_prob)) g[rng.below(n)] *= spike_scale;
  }
  return out;
}

History library_trace(const optim::OptimizerSpec& spec, const Vec& w0, std::size_t rows,
                      std::size_t cols, const std::vector<Vec>& grads, const Vec& lrs) {
  std::vector<Matrix> params{Matrix(rows, cols)};
  std::copy(w0.begin(), w0.end(), params[0].data().begin());
  optim::Optimizer opt = optim::make_optimizer(spec);
  opt.init(params);
  History out;
  for (std::size_t s = 0; s < grads.size(); ++s) {
    std::vector<Matrix> g{Matrix(rows, cols)};
    std::copy(grads[s].begin(), grads[s].end(), g[0].data().begin());
    opt.step(params, g, lrs[s], static_cast<std::int64_t>(s) + 1);
    out.emplace_back(params[0].data().begin(), params[0].data().end());
  }
  return out;
}

}  // namespace sspam::reference
