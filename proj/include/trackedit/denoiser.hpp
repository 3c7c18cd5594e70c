#pragma once

// Small velocity-prediction transformer for the toy flow model. Patch
// tokens of both branches get a learned embedding plus a fixed-feature
// position embedding; the conditioned sequence runs through full-attention
// blocks with an added time embedding and only the target half is
// unembedded.

#include <cmath>
#include <string>
#include <vector>

#include "trackedit/conditioner.hpp"

namespace trackedit {

struct DenoiserConfig {
  int patch_dim = 96;
  int d = 128;
  int heads = 4;
  int blocks = 2;
  int ffn_mult = 4;
  PosEncConfig pos{32};
  int time_dim = 32;

  void validate() const {
    pos.validate();
    if (heads < 1 || d % heads != 0) throw Error(ErrorCode::InvalidArgument, "denoiser d must be divisible by heads");
    if (time_dim < 2 || time_dim % 2 != 0) throw Error(ErrorCode::InvalidArgument, "time_dim must be even");
    if (blocks < 1) throw Error(ErrorCode::InvalidArgument, "denoiser needs at least one block");
  }
};

/// Sinusoidal features of flow time: sin/cos of 1000·t at geometric frequencies.
template <typename S>
Mat<S> time_features(double t, int dim) {
  const int half = dim / 2;
  Mat<S> out(1, dim);
  for (int i = 0; i < half; ++i) {
    const double a = 1000.0 * t * std::pow(10000.0, -static_cast<double>(i) / half);
    out(0, i) = static_cast<S>(std::sin(a));
    out(0, half + i) = static_cast<S>(std::cos(a));
  }
  return out;
}

/// Encodings of token centers ((j+.5)/w, (i+.5)/h, (k+.5)/f, branch).
template <typename S>
Mat<S> token_position_features(int f, int h, int w, int branch, const PosEncConfig& cfg) {
  Mat<S> in(Eigen::Index(f) * h * w, 4);
  for (int k = 0; k < f; ++k)
    for (int i = 0; i < h; ++i)
      for (int j = 0; j < w; ++j)
        in.row((Eigen::Index(k) * h + i) * w + j) << S((j + 0.5) / w), S((i + 0.5) / h), S((k + 0.5) / f), S(branch);
  return posenc_rows<S>(in, cfg);
}

template <typename S>
struct Denoiser {
  DenoiserConfig cfg;
  nn::Linear<S> embed, pos_proj, time_proj;
  std::vector<nn::TransformerBlock<S>> blocks;
  nn::LayerNorm<S> final_norm;
  nn::Linear<S> unembed;

  Denoiser() = default;
  explicit Denoiser(const DenoiserConfig& c, std::uint64_t seed = 0)
      : cfg(c),
        embed(c.patch_dim, c.d),
        pos_proj(c.pos.dim, c.d),
        time_proj(c.time_dim, c.d),
        final_norm(c.d),
        unembed(c.d, c.patch_dim) {
    cfg.validate();
    for (int b = 0; b < c.blocks; ++b) blocks.emplace_back(c.d, c.heads, c.ffn_mult);
    Rng rng = Rng(seed).split("denoiser");
    embed.init(rng);
    pos_proj.init(rng);
    time_proj.init(rng);
    for (auto& b : blocks) b.init(rng);
    unembed.init(rng);
  }

  template <typename F>
  void visit(F&& f, const std::string& prefix = "denoiser") {
    embed.visit(f, prefix + ".embed");
    pos_proj.visit(f, prefix + ".pos_proj");
    time_proj.visit(f, prefix + ".time_proj");
    for (std::size_t b = 0; b < blocks.size(); ++b) blocks[b].visit(f, prefix + ".block" + std::to_string(b));
    final_norm.visit(f, prefix + ".final_norm");
    unembed.visit(f, prefix + ".unembed");
  }

  /// Patch rows (f·h·w × patch_dim) of one branch to d-wide tokens.
  Mat<S> embed_tokens(const Mat<S>& patches, const Mat<S>& position_features) const {
    return embed.forward(patches) + pos_proj.forward(position_features);
  }

  void embed_tokens_backward(const Mat<S>& patches, const Mat<S>& position_features, const Mat<S>& dtokens) {
    embed.accumulate(patches, dtokens);
    pos_proj.accumulate(position_features, dtokens);
  }

  struct Cache {
    Mat<S> tf;
    std::vector<typename nn::TransformerBlock<S>::Cache> blocks;
    typename nn::LayerNorm<S>::Cache norm;
    Mat<S> normed;
    Eigen::Index half = 0;
  };

  /// seq: 2L × d conditioned tokens (source half first). Returns the L ×
  /// patch_dim velocity for the target half.
  Mat<S> forward(const Mat<S>& seq, double t, Cache& c) const {
    if (seq.cols() != cfg.d || seq.rows() % 2 != 0)
      throw Error(ErrorCode::ShapeMismatch, "denoiser input must be 2L × d");
    c.half = seq.rows() / 2;
    c.tf = time_features<S>(t, cfg.time_dim);
    Mat<S> x = seq;
    x.rowwise() += time_proj.forward(c.tf).row(0);
    c.blocks.resize(blocks.size());
    for (std::size_t b = 0; b < blocks.size(); ++b) x = blocks[b].forward(x, 1, c.blocks[b]);
    c.normed = final_norm.forward(x.bottomRows(c.half), c.norm);
    return unembed.forward(c.normed);
  }

  /// Returns d(seq).
  Mat<S> backward(const Mat<S>& dv, const Cache& c) {
    const Mat<S> dnormed = unembed.backward(c.normed, dv);
    Mat<S> dx = Mat<S>::Zero(2 * c.half, cfg.d);
    dx.bottomRows(c.half) = final_norm.backward(dnormed, c.norm);
    for (std::size_t b = blocks.size(); b-- > 0;) dx = blocks[b].backward(dx, c.blocks[b]);
    time_proj.accumulate(c.tf, dx.colwise().sum());
    return dx;
  }
};

}  // namespace trackedit
