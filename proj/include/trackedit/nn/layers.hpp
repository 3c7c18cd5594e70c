#pragma once

// Dense layers with explicit reverse-mode passes. Each forward records what
// its backward needs in a caller-owned cache; backward accumulates parameter
// gradients and returns input gradients.

#include <cmath>
#include <numbers>
#include <string>
#include <vector>

#include "trackedit/nn/tensor.hpp"

namespace trackedit::nn {

template <typename S>
struct Linear {
  Param<S> weight;  // in × out
  Param<S> bias;    // 1 × out

  Linear() = default;
  Linear(int in, int out) : weight(in, out), bias(1, out) {}

  int in_features() const { return static_cast<int>(weight.value.rows()); }
  int out_features() const { return static_cast<int>(weight.value.cols()); }

  void init(Rng& rng) {
    weight.init_uniform(rng, in_features());
    bias.init_uniform(rng, in_features());
  }

  Mat<S> forward(const Mat<S>& x) const {
    Mat<S> y = x * weight.value;
    y.rowwise() += bias.value.row(0);
    return y;
  }

  /// Accumulates dW, db; returns dx.
  Mat<S> backward(const Mat<S>& x, const Mat<S>& dy) {
    accumulate(x, dy);
    return dy * weight.value.transpose();
  }

  void accumulate(const Mat<S>& x, const Mat<S>& dy) {
    weight.grad.noalias() += x.transpose() * dy;
    bias.grad.row(0) += dy.colwise().sum();
  }

  template <typename F>
  void visit(F&& f, const std::string& prefix) {
    f(prefix + ".weight", weight);
    f(prefix + ".bias", bias);
  }
};

template <typename S>
struct LayerNorm {
  Param<S> gain;
  Param<S> bias;
  S eps = S(1e-5);

  struct Cache {
    Mat<S> xhat;
    Eigen::Matrix<S, Eigen::Dynamic, 1> rstd;
  };

  LayerNorm() = default;
  explicit LayerNorm(int d) : gain(1, d), bias(1, d) { gain.value.setOnes(); }

  Mat<S> forward(const Mat<S>& x, Cache& c) const {
    const auto d = static_cast<S>(x.cols());
    c.xhat.resize(x.rows(), x.cols());
    c.rstd.resize(x.rows());
    for (Eigen::Index r = 0; r < x.rows(); ++r) {
      const S mean = x.row(r).sum() / d;
      const S var = (x.row(r).array() - mean).square().sum() / d;
      c.rstd(r) = S(1) / std::sqrt(var + eps);
      c.xhat.row(r) = (x.row(r).array() - mean) * c.rstd(r);
    }
    Mat<S> y = c.xhat.array().rowwise() * gain.value.row(0).array();
    y.rowwise() += bias.value.row(0);
    return y;
  }

  Mat<S> backward(const Mat<S>& dy, const Cache& c) {
    gain.grad.row(0) += (dy.array() * c.xhat.array()).colwise().sum().matrix();
    bias.grad.row(0) += dy.colwise().sum();
    const Mat<S> dxhat = dy.array().rowwise() * gain.value.row(0).array();
    const auto d = static_cast<S>(dy.cols());
    Mat<S> dx(dy.rows(), dy.cols());
    for (Eigen::Index r = 0; r < dy.rows(); ++r) {
      const S m1 = dxhat.row(r).sum() / d;
      const S m2 = (dxhat.row(r).array() * c.xhat.row(r).array()).sum() / d;
      dx.row(r) = c.rstd(r) * (dxhat.row(r).array() - m1 - c.xhat.row(r).array() * m2);
    }
    return dx;
  }

  template <typename F>
  void visit(F&& f, const std::string& prefix) {
    f(prefix + ".gain", gain);
    f(prefix + ".bias", bias);
  }
};

/// Exact (erf) Gaussian error linear unit.
template <typename S>
Mat<S> gelu(const Mat<S>& x) {
  return x.unaryExpr([](S v) { return S(0.5) * v * (S(1) + std::erf(v / std::numbers::sqrt2_v<S>)); });
}

template <typename S>
Mat<S> gelu_backward(const Mat<S>& x, const Mat<S>& dy) {
  const S inv_sqrt_2pi = S(1) / std::sqrt(S(2) * std::numbers::pi_v<S>);
  const Mat<S> dg = x.unaryExpr([&](S v) {
    return S(0.5) * (S(1) + std::erf(v / std::numbers::sqrt2_v<S>)) + v * std::exp(S(-0.5) * v * v) * inv_sqrt_2pi;
  });
  return dy.cwiseProduct(dg);
}

// ---------------------------------------------------------------------------
// Scaled dot-product attention over `batch` independent groups of rows.
// q: batch*Lq × dk, k: batch*Lk × dk, v: batch*Lk × dv. No additive bias.

template <typename S>
struct AttentionCache {
  Mat<S> q, k, v;
  std::vector<Mat<S>> probs;  // batch*heads matrices, Lq × Lk
  int heads = 1;
  int batch = 1;
};

template <typename S>
Mat<S> attention_forward(const Mat<S>& q, const Mat<S>& k, const Mat<S>& v, int heads, int batch,
                         AttentionCache<S>& c) {
  c.q = q;
  c.k = k;
  c.v = v;
  c.heads = heads;
  c.batch = batch;
  const Eigen::Index lq = q.rows() / batch, lk = k.rows() / batch;
  const Eigen::Index dk = q.cols() / heads, dv = v.cols() / heads;
  const S scale = S(1) / std::sqrt(static_cast<S>(dk));
  c.probs.assign(static_cast<std::size_t>(batch) * heads, Mat<S>());
  Mat<S> out(q.rows(), v.cols());
  for (int b = 0; b < batch; ++b)
    for (int h = 0; h < heads; ++h) {
      Mat<S>& p = c.probs[static_cast<std::size_t>(b) * heads + h];
      p.noalias() = q.block(b * lq, h * dk, lq, dk) * k.block(b * lk, h * dk, lk, dk).transpose();
      p *= scale;
      for (Eigen::Index r = 0; r < lq; ++r) {
        const S m = p.row(r).maxCoeff();
        p.row(r) = (p.row(r).array() - m).exp();
        p.row(r) /= p.row(r).sum();
      }
      out.block(b * lq, h * dv, lq, dv).noalias() = p * v.block(b * lk, h * dv, lk, dv);
    }
  return out;
}

template <typename S>
void attention_backward(const Mat<S>& dout, const AttentionCache<S>& c, Mat<S>& dq, Mat<S>& dk, Mat<S>& dv) {
  const int heads = c.heads, batch = c.batch;
  const Eigen::Index lq = c.q.rows() / batch, lk = c.k.rows() / batch;
  const Eigen::Index hk = c.q.cols() / heads, hv = c.v.cols() / heads;
  const S scale = S(1) / std::sqrt(static_cast<S>(hk));
  dq = Mat<S>::Zero(c.q.rows(), c.q.cols());
  dk = Mat<S>::Zero(c.k.rows(), c.k.cols());
  dv = Mat<S>::Zero(c.v.rows(), c.v.cols());
  Mat<S> dp;
  for (int b = 0; b < batch; ++b)
    for (int h = 0; h < heads; ++h) {
      const Mat<S>& p = c.probs[static_cast<std::size_t>(b) * heads + h];
      const auto dout_h = dout.block(b * lq, h * hv, lq, hv);
      dv.block(b * lk, h * hv, lk, hv).noalias() += p.transpose() * dout_h;
      dp.noalias() = dout_h * c.v.block(b * lk, h * hv, lk, hv).transpose();
      // softmax Jacobian: ds = p ⊙ (dp − rowsum(dp ⊙ p))
      const Eigen::Matrix<S, Eigen::Dynamic, 1> dot = (dp.array() * p.array()).rowwise().sum();
      dp = (p.array() * (dp.array().colwise() - dot.array())) * scale;
      dq.block(b * lq, h * hk, lq, hk).noalias() += dp * c.k.block(b * lk, h * hk, lk, hk);
      dk.block(b * lk, h * hk, lk, hk).noalias() += dp.transpose() * c.q.block(b * lq, h * hk, lq, hk);
    }
}

// ---------------------------------------------------------------------------

/// Cross-attention whose queries and keys are projected by learned maps and
/// whose values are used as given (no value projection), followed by an
/// output projection.
template <typename S>
struct CrossAttention {
  Linear<S> q_proj;
  Linear<S> k_proj;
  Linear<S> out_proj;
  int heads = 1;

  struct Cache {
    Mat<S> queries, keys, concat;
    AttentionCache<S> core;
  };

  CrossAttention() = default;
  CrossAttention(int in_dim, int d, int heads_)
      : q_proj(in_dim, d), k_proj(in_dim, d), out_proj(d, d), heads(heads_) {}

  void init(Rng& rng) {
    q_proj.init(rng);
    k_proj.init(rng);
    out_proj.init(rng);
  }

  Mat<S> forward(const Mat<S>& queries, const Mat<S>& keys, const Mat<S>& values, Cache& c) const {
    c.queries = queries;
    c.keys = keys;
    c.concat = attention_forward<S>(q_proj.forward(queries), k_proj.forward(keys), values, heads, 1, c.core);
    return out_proj.forward(c.concat);
  }

  struct Grads {
    Mat<S> queries, keys, values;
  };

  Grads backward(const Mat<S>& dout, const Cache& c) {
    const Mat<S> dconcat = out_proj.backward(c.concat, dout);
    Mat<S> dq, dk, dv;
    attention_backward<S>(dconcat, c.core, dq, dk, dv);
    Grads g;
    g.queries = q_proj.backward(c.queries, dq);
    g.keys = k_proj.backward(c.keys, dk);
    g.values = std::move(dv);
    return g;
  }

  template <typename F>
  void visit(F&& f, const std::string& prefix) {
    q_proj.visit(f, prefix + ".q_proj");
    k_proj.visit(f, prefix + ".k_proj");
    out_proj.visit(f, prefix + ".out_proj");
  }
};

/// Pre-norm transformer block: x + Attn(LN(x)), then + FFN(LN(x)).
/// Rows are `batch` independent sequences of equal length.
template <typename S>
struct TransformerBlock {
  LayerNorm<S> ln1, ln2;
  Linear<S> q, k, v, o;
  Linear<S> fc1, fc2;
  int heads = 1;

  struct Cache {
    typename LayerNorm<S>::Cache ln1, ln2;
    Mat<S> h1, concat, x1, h2, a1, g1;
    AttentionCache<S> core;
  };

  TransformerBlock() = default;
  TransformerBlock(int d, int heads_, int ffn_mult = 4)
      : ln1(d), ln2(d), q(d, d), k(d, d), v(d, d), o(d, d), fc1(d, ffn_mult * d), fc2(ffn_mult * d, d), heads(heads_) {}

  void init(Rng& rng) {
    for (auto* l : {&q, &k, &v, &o, &fc1, &fc2}) l->init(rng);
  }

  Mat<S> forward(const Mat<S>& x, int batch, Cache& c) const {
    c.h1 = ln1.forward(x, c.ln1);
    c.concat = attention_forward<S>(q.forward(c.h1), k.forward(c.h1), v.forward(c.h1), heads, batch, c.core);
    c.x1 = x + o.forward(c.concat);
    c.h2 = ln2.forward(c.x1, c.ln2);
    c.a1 = fc1.forward(c.h2);
    c.g1 = gelu<S>(c.a1);
    return c.x1 + fc2.forward(c.g1);
  }

  Mat<S> backward(const Mat<S>& dy, const Cache& c) {
    const Mat<S> dg1 = fc2.backward(c.g1, dy);
    const Mat<S> da1 = gelu_backward<S>(c.a1, dg1);
    const Mat<S> dh2 = fc1.backward(c.h2, da1);
    const Mat<S> dx1 = dy + ln2.backward(dh2, c.ln2);
    const Mat<S> dconcat = o.backward(c.concat, dx1);
    Mat<S> dq, dk, dv;
    attention_backward<S>(dconcat, c.core, dq, dk, dv);
    Mat<S> dh1 = q.backward(c.h1, dq);
    dh1 += k.backward(c.h1, dk);
    dh1 += v.backward(c.h1, dv);
    return dx1 + ln1.backward(dh1, c.ln1);
  }

  template <typename F>
  void visit(F&& f, const std::string& prefix) {
    ln1.visit(f, prefix + ".ln1");
    q.visit(f, prefix + ".attn.q");
    k.visit(f, prefix + ".attn.k");
    v.visit(f, prefix + ".attn.v");
    o.visit(f, prefix + ".attn.o");
    ln2.visit(f, prefix + ".ln2");
    fc1.visit(f, prefix + ".ffn.fc1");
    fc2.visit(f, prefix + ".ffn.fc2");
  }
};

}  // namespace trackedit::nn
