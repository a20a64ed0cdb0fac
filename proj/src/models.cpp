// SPDX-License-Identifier: Apache-2.0
#include "sspam/models.hpp"

#include <cmath>
#include <stdexcept>

namespace sspam::models {

QuadraticProblem QuadraticProblem::random(std::size_t n, std::uint64_t seed, double delta) {
  Rng rng(seed);
  const Matrix m = random_normal(n, n, rng);
  QuadraticProblem p;
  p.a = matmul(transpose(m), m);
  for (std::size_t i = 0; i < n; ++i) p.a(i, i) += delta;
  // Products of MᵀM can differ in the last bit across the diagonal; mirror
  // the upper triangle so A is exactly symmetric.
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) p.a(j, i) = p.a(i, j);
  p.b = random_normal(n, 1, rng);
  p.w = random_normal(n, 1, rng);
  return p;
}

LossGrad quadratic_loss_grad(const QuadraticProblem& p) {
  const Matrix aw = matmul(p.a, p.w);
  double quad = 0.0;
  double lin = 0.0;
  for (std::size_t i = 0; i < p.w.size(); ++i) {
    quad += p.w[i] * aw[i];
    lin += p.b[i] * p.w[i];
  }
  return {0.5 * quad - lin, sub(aw, p.b)};
}

double quadratic_loss(const QuadraticProblem& p) { return quadratic_loss_grad(p).loss; }

Matrix quadratic_optimum(const QuadraticProblem& p) {
  const std::size_t n = p.a.rows();
  Matrix l(n, n);
  for (std::size_t j = 0; j < n; ++j) {
    double d = p.a(j, j);
    for (std::size_t k = 0; k < j; ++k) d -= l(j, k) * l(j, k);
    if (!(d > 0.0)) throw std::runtime_error("quadratic_optimum: matrix is not positive definite");
    l(j, j) = std::sqrt(d);
    for (std::size_t i = j + 1; i < n; ++i) {
      double s = p.a(i, j);
      for (std::size_t k = 0; k < j; ++k) s -= l(i, k) * l(j, k);
      l(i, j) = s / l(j, j);
    }
  }
  Matrix y(n, 1);
  for (std::size_t i = 0; i < n; ++i) {
    double s = p.b[i];
    for (std::size_t k = 0; k < i; ++k) s -= l(i, k) * y[k];
    y[i] = s / l(i, i);
  }
  Matrix x(n, 1);
  for (std::size_t ii = n; ii-- > 0;) {
    double s = y[ii];
    for (std::size_t k = ii + 1; k < n; ++k) s -= l(k, ii) * x[k];
    x[ii] = s / l(ii, ii);
  }
  return x;
}

RmsNormForward rmsnorm_fwd_bwd(const Matrix& x, const Matrix& gain) {
  if (x.empty()) throw std::invalid_argument("rmsnorm: empty input");
  if (gain.rows() != 1 || gain.cols() != x.cols()) {
    throw std::invalid_argument("rmsnorm: gain " + gain.shape_string() + " does not fit input " +
                                x.shape_string());
  }
  const std::size_t rows = x.rows();
  const std::size_t cols = x.cols();
  std::vector<double> inv_rms(rows);
  Matrix y(rows, cols);
  for (std::size_t r = 0; r < rows; ++r) {
    double ss = 0.0;
    for (std::size_t c = 0; c < cols; ++c) ss += x(r, c) * x(r, c);
    inv_rms[r] = 1.0 / std::sqrt(ss / static_cast<double>(cols) + kRmsNormEps);
    for (std::size_t c = 0; c < cols; ++c) y(r, c) = x(r, c) * inv_rms[r] * gain[c];
  }
  auto backward = [x, gain, inv_rms = std::move(inv_rms)](const Matrix& dy) {
    require_same_shape(dy, x, "rmsnorm backward");
    const std::size_t rows = x.rows();
    const std::size_t cols = x.cols();
    RmsNormGrads g{Matrix(rows, cols), Matrix(1, cols)};
    for (std::size_t r = 0; r < rows; ++r) {
      const double inv = inv_rms[r];
      double dot = 0.0;  // Σ_j dxhat_j x_j
      for (std::size_t c = 0; c < cols; ++c) {
        const double dxhat = dy(r, c) * gain[c];
        g.dgain[c] += dy(r, c) * x(r, c) * inv;
        dot += dxhat * x(r, c);
      }
      const double coef = dot * inv * inv * inv / static_cast<double>(cols);
      for (std::size_t c = 0; c < cols; ++c) {
        g.dx(r, c) = dy(r, c) * gain[c] * inv - x(r, c) * coef;
      }
    }
    return g;
  };
  return {std::move(y), std::move(backward)};
}

double silu(double z) { return z / (1.0 + std::exp(-z)); }

SwigluForward swiglu_fwd_bwd(const Matrix& x, const Matrix& w_gate, const Matrix& w_up) {
  Matrix gate = matmul(x, w_gate);
  Matrix up = matmul(x, w_up);
  require_same_shape(gate, up, "swiglu");
  Matrix y(gate.rows(), gate.cols());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = silu(gate[i]) * up[i];

  auto backward = [x, w_gate, w_up, gate = std::move(gate), up = std::move(up)](const Matrix& dy) {
    require_same_shape(dy, gate, "swiglu backward");
    Matrix dgate(gate.rows(), gate.cols());
    Matrix dup(gate.rows(), gate.cols());
    for (std::size_t i = 0; i < gate.size(); ++i) {
      const double z = gate[i];
      const double sig = 1.0 / (1.0 + std::exp(-z));
      dup[i] = dy[i] * z * sig;
      dgate[i] = dy[i] * up[i] * sig * (1.0 + z * (1.0 - sig));
    }
    const Matrix xt = transpose(x);
    SwigluGrads g;
    g.dw_gate = matmul(xt, dgate);
    g.dw_up = matmul(xt, dup);
    g.dx = add(matmul(dgate, transpose(w_gate)), matmul(dup, transpose(w_up)));
    return g;
  };
  return {std::move(y), std::move(backward)};
}

CrossEntropy cross_entropy(const Matrix& logits, std::span<const int> labels) {
  if (labels.size() != logits.rows()) {
    throw std::invalid_argument("cross_entropy: " + std::to_string(labels.size()) +
                                " labels for " + std::to_string(logits.rows()) + " rows");
  }
  const std::size_t rows = logits.rows();
  const std::size_t cols = logits.cols();
  CrossEntropy out{0.0, Matrix(rows, cols)};
  const double inv_rows = 1.0 / static_cast<double>(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    const int label = labels[r];
    if (label < 0 || static_cast<std::size_t>(label) >= cols) {
      throw std::invalid_argument("cross_entropy: label out of range");
    }
    double top = logits(r, 0);
    for (std::size_t c = 1; c < cols; ++c) top = std::max(top, logits(r, c));
    double z = 0.0;
    for (std::size_t c = 0; c < cols; ++c) z += std::exp(logits(r, c) - top);
    const double log_z = top + std::log(z);
    out.loss += (log_z - logits(r, static_cast<std::size_t>(label))) * inv_rows;
    for (std::size_t c = 0; c < cols; ++c) {
      const double p = std::exp(logits(r, c) - log_z);
      out.dlogits(r, c) = (p - (static_cast<std::size_t>(label) == c ? 1.0 : 0.0)) * inv_rows;
    }
  }
  return out;
}

MlpModel MlpModel::init(const MlpConfig& cfg, std::uint64_t seed) {
  if (cfg.input_dim == 0 || cfg.hidden == 0 || cfg.ffn == 0 || cfg.classes < 2) {
    throw std::invalid_argument("MlpModel: widths must be positive and classes >= 2");
  }
  Rng rng(seed);
  MlpModel m;
  m.cfg_ = cfg;
  auto dense = [&](std::size_t in, std::size_t out, const std::string& name) {
    m.params_.push_back(random_normal(in, out, rng, 1.0 / std::sqrt(static_cast<double>(in))));
    m.names_.push_back(name);
  };
  auto gain = [&](const std::string& name) {
    m.params_.emplace_back(1, cfg.hidden, 1.0);
    m.names_.push_back(name);
  };
  dense(cfg.input_dim, cfg.hidden, "w_in");
  for (std::size_t b = 0; b < cfg.depth; ++b) {
    const std::string p = "block" + std::to_string(b) + ".";
    gain(p + "gain");
    dense(cfg.hidden, cfg.ffn, p + "w_gate");
    dense(cfg.hidden, cfg.ffn, p + "w_up");
    dense(cfg.ffn, cfg.hidden, p + "w_down");
  }
  gain("gain_out");
  dense(cfg.hidden, cfg.classes, "w_out");
  return m;
}

namespace {

struct QuantizedMatmul {
  Matrix out;
  Matrix lhs_q;  // operands as used in the forward pass
  Matrix rhs_q;
};

QuantizedMatmul qmatmul(const Matrix& lhs, const Matrix& rhs, const quant::QuantSpec& q) {
  QuantizedMatmul r{Matrix(), quant::qdq(lhs, q), quant::qdq(rhs, q)};
  r.out = matmul(r.lhs_q, r.rhs_q);
  return r;
}

// Straight-through: gradients w.r.t. the quantized operands pass to the originals.
void qmatmul_backward(const QuantizedMatmul& fwd, const Matrix& dout, Matrix* dlhs, Matrix& drhs) {
  drhs = matmul(transpose(fwd.lhs_q), dout);
  if (dlhs) *dlhs = matmul(dout, transpose(fwd.rhs_q));
}

struct ForwardTrace {
  QuantizedMatmul input;
  struct Block {
    RmsNormForward norm;
    Matrix normed_q;
    SwigluForward swiglu;
    QuantizedMatmul down;
  };
  std::vector<Block> blocks;
  RmsNormForward final_norm;
  QuantizedMatmul head;
};

ForwardTrace forward(const MlpModel& model, const Matrix& inputs, const quant::QuantSpec& q) {
  const auto& p = model.params();
  const std::size_t depth = model.config().depth;
  if (inputs.cols() != model.config().input_dim) {
    throw std::invalid_argument("mlp: batch width " + std::to_string(inputs.cols()) +
                                " does not match input_dim " +
                                std::to_string(model.config().input_dim));
  }
  ForwardTrace t;
  t.input = qmatmul(inputs, p[0], q);
  Matrix h = t.input.out;
  for (std::size_t b = 0; b < depth; ++b) {
    const std::size_t base = 1 + 4 * b;
    ForwardTrace::Block blk;
    blk.norm = rmsnorm_fwd_bwd(h, p[base]);
    blk.normed_q = quant::qdq(blk.norm.y, q);
    blk.swiglu = swiglu_fwd_bwd(blk.normed_q, quant::qdq(p[base + 1], q), quant::qdq(p[base + 2], q));
    blk.down = qmatmul(blk.swiglu.y, p[base + 3], q);
    h = add(h, blk.down.out);
    t.blocks.push_back(std::move(blk));
  }
  t.final_norm = rmsnorm_fwd_bwd(h, p[1 + 4 * depth]);
  t.head = qmatmul(t.final_norm.y, p[2 + 4 * depth], q);
  return t;
}

}  // namespace

ModelGrads mlp_forward_backward(const MlpModel& model, const Matrix& inputs,
                                std::span<const int> labels, const quant::QuantSpec& quant) {
  const ForwardTrace t = forward(model, inputs, quant);
  const std::size_t depth = model.config().depth;
  const CrossEntropy ce = cross_entropy(t.head.out, labels);

  ModelGrads out;
  out.loss = ce.loss;
  out.grads.resize(model.params().size());

  Matrix dnormed;
  qmatmul_backward(t.head, ce.dlogits, &dnormed, out.grads[2 + 4 * depth]);
  RmsNormGrads fn = t.final_norm.backward(dnormed);
  out.grads[1 + 4 * depth] = std::move(fn.dgain);
  Matrix dh = std::move(fn.dx);

  for (std::size_t b = depth; b-- > 0;) {
    const std::size_t base = 1 + 4 * b;
    const auto& blk = t.blocks[b];
    Matrix dswiglu;
    qmatmul_backward(blk.down, dh, &dswiglu, out.grads[base + 3]);
    SwigluGrads sg = blk.swiglu.backward(dswiglu);
    out.grads[base + 1] = std::move(sg.dw_gate);
    out.grads[base + 2] = std::move(sg.dw_up);
    RmsNormGrads ng = blk.norm.backward(sg.dx);
    out.grads[base] = std::move(ng.dgain);
    dh = add(dh, ng.dx);  // residual
  }
  qmatmul_backward(t.input, dh, nullptr, out.grads[0]);
  return out;
}

double mlp_loss(const MlpModel& model, const Matrix& inputs, std::span<const int> labels,
                const quant::QuantSpec& quant) {
  return cross_entropy(forward(model, inputs, quant).head.out, labels).loss;
}

}  // namespace sspam::models
