#pragma once

// Pixel-space rectified-flow model: patchified source and noisy target
// clips, the track conditioner, and the denoiser, with one forward/backward
// pair over all parameters.

#include <cmath>
#include <string>

#include "trackedit/conditioner.hpp"
#include "trackedit/denoiser.hpp"
#include "trackedit/image.hpp"
#include "trackedit/project_io.hpp"
#include "trackedit/tracks.hpp"

namespace trackedit {

struct PatchSize {
  int t = 2, h = 4, w = 4;
  int dim() const { return t * h * w * 3; }
  bool operator==(const PatchSize&) const = default;
};

struct TokenDims {
  int f = 0, h = 0, w = 0;
  int count() const { return f * h * w; }
};

inline TokenDims token_dims(int frames, int height, int width, const PatchSize& p) {
  if (p.t < 1 || p.h < 1 || p.w < 1 || frames % p.t || height % p.h || width % p.w)
    throw Error(ErrorCode::IndivisibleDims, "video dims " + std::to_string(frames) + "×" + std::to_string(height) + "×" +
                                                std::to_string(width) + " not divisible by patch size");
  return {frames / p.t, height / p.h, width / p.w};
}

/// Token (k, i, j) holds the patch's values in (dt, dy, dx, channel) order.
template <typename S = double>
TokenGrid<S> patchify(const VideoClip& v, const PatchSize& p) {
  const TokenDims td = token_dims(v.frames, v.height, v.width, p);
  TokenGrid<S> g(td.f, td.h, td.w, p.dim());
  for (int k = 0; k < td.f; ++k)
    for (int i = 0; i < td.h; ++i)
      for (int j = 0; j < td.w; ++j) {
        auto row = g.data.row((Eigen::Index(k) * td.h + i) * td.w + j);
        int c = 0;
        for (int dt = 0; dt < p.t; ++dt)
          for (int dy = 0; dy < p.h; ++dy)
            for (int dx = 0; dx < p.w; ++dx)
              for (int ch = 0; ch < 3; ++ch) row(c++) = static_cast<S>(v.at(k * p.t + dt, i * p.h + dy, j * p.w + dx, ch));
      }
  return g;
}

template <typename S>
VideoClip unpatchify(const TokenGrid<S>& g, const PatchSize& p) {
  if (g.d != p.dim()) throw Error(ErrorCode::ShapeMismatch, "token width differs from patch size");
  VideoClip v(g.f * p.t, g.h * p.h, g.w * p.w);
  for (int k = 0; k < g.f; ++k)
    for (int i = 0; i < g.h; ++i)
      for (int j = 0; j < g.w; ++j) {
        const auto row = g.data.row((Eigen::Index(k) * g.h + i) * g.w + j);
        int c = 0;
        for (int dt = 0; dt < p.t; ++dt)
          for (int dy = 0; dy < p.h; ++dy)
            for (int dx = 0; dx < p.w; ++dx)
              for (int ch = 0; ch < 3; ++ch) v.at(k * p.t + dt, i * p.h + dy, j * p.w + dx, ch) = static_cast<double>(row(c++));
      }
  return v;
}

// ---------------------------------------------------------------------------

template <typename S>
struct FlowState {
  double t = 0;
  Mat<S> x_t;
  Mat<S> epsilon;
  Mat<S> velocity;  // regression target eps − x0
};

template <typename S>
FlowState<S> flow_interpolate(const Mat<S>& x0, const Mat<S>& eps, double t) {
  if (!(t >= 0.0 && t <= 1.0)) throw Error(ErrorCode::InvalidArgument, "flow time must lie in [0, 1]");
  if (x0.rows() != eps.rows() || x0.cols() != eps.cols()) throw Error(ErrorCode::ShapeMismatch, "x0 and noise differ in shape");
  FlowState<S> s;
  s.t = t;
  s.epsilon = eps;
  if (t == 0.0)
    s.x_t = x0;
  else if (t == 1.0)
    s.x_t = eps;
  else
    s.x_t = S(1 - t) * x0 + S(t) * eps;
  s.velocity = eps - x0;
  return s;
}

template <typename S>
Mat<S> gaussian_noise(Eigen::Index rows, Eigen::Index cols, Rng& rng) {
  Mat<S> m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = static_cast<S>(rng.normal());
  return m;
}

// ---------------------------------------------------------------------------

struct FlowModelConfig {
  PatchSize patch;
  ConditionerConfig conditioner;
  DenoiserConfig denoiser;
  bool use_tracks = true;  // false: track tokens are zero

  /// Toy layout: one width for both networks, conditioner heads sized to the
  /// encoding width.
  static FlowModelConfig toy(int d = 128, int conditioner_heads = 2, int denoiser_heads = 2, PatchSize patch = {}) {
    FlowModelConfig c;
    c.patch = patch;
    c.conditioner = ConditionerConfig::with_head_width_pe(d, conditioner_heads);
    c.denoiser.d = d;
    c.denoiser.heads = denoiser_heads;
    c.denoiser.patch_dim = patch.dim();
    return c;
  }

  json to_json() const {
    return {{"patch", {patch.t, patch.h, patch.w}},
            {"d", conditioner.d},
            {"conditioner_heads", conditioner.heads},
            {"conditioner_pe_dim", conditioner.pe.dim},
            {"pe_input_scale", conditioner.pe.input_scale},
            {"denoiser_heads", denoiser.heads},
            {"denoiser_blocks", denoiser.blocks},
            {"position_dim", denoiser.pos.dim},
            {"time_dim", denoiser.time_dim},
            {"use_tracks", use_tracks}};
  }

  static FlowModelConfig from_json(const json& j, const std::string& file = "config") {
    const io::Reader r(file);
    auto integer = [&](const char* k) { return static_cast<int>(r.integer(r.field(j, k, "$"), std::string("$.") + k)); };
    const json& pj = r.array(r.field(j, "patch", "$"), 3, "$.patch");
    PatchSize p{static_cast<int>(r.integer(pj[0], "$.patch[0]")), static_cast<int>(r.integer(pj[1], "$.patch[1]")),
                static_cast<int>(r.integer(pj[2], "$.patch[2]"))};
    FlowModelConfig c = toy(integer("d"), integer("conditioner_heads"), integer("denoiser_heads"), p);
    c.conditioner.pe.dim = integer("conditioner_pe_dim");
    c.conditioner.pe.input_scale = r.number(r.field(j, "pe_input_scale", "$"), "$.pe_input_scale");
    c.denoiser.blocks = integer("denoiser_blocks");
    c.denoiser.pos.dim = integer("position_dim");
    c.denoiser.time_dim = integer("time_dim");
    const json& u = r.field(j, "use_tracks", "$");
    if (!u.is_boolean()) r.fail("$.use_tracks", "expected boolean");
    c.use_tracks = u.get<bool>();
    return c;
  }
};

/// One training/inference example in token form.
template <typename S>
struct FlowSample {
  TokenDims dims;
  Mat<S> source;   // L × patch_dim, pixels mapped to [−1, 1]
  Mat<S> target;   // clean target x0 (empty when absent)
  Mat<S> src_in;   // f·N × 4 track inputs
  Mat<S> tgt_in;
};

/// Projects the pair's tracks with the shared disparity range, downsamples
/// them to token frames, and patchifies the clips.
template <typename S>
FlowSample<S> prepare_sample(const ClipPair& pair, const PatchSize& patch) {
  FlowSample<S> s;
  s.dims = token_dims(pair.frames(), pair.height(), pair.width(), patch);
  s.source = (patchify<S>(pair.source_video, patch).data.array() * S(2) - S(1)).matrix();
  if (pair.target_video) s.target = (patchify<S>(*pair.target_video, patch).data.array() * S(2) - S(1)).matrix();
  const ProjectedPair pp = project_pair(pair);
  s.src_in = track_inputs<S>(temporal_downsample(pp.source, s.dims.f));
  s.tgt_in = track_inputs<S>(temporal_downsample(pp.target, s.dims.f));
  return s;
}

template <typename S>
struct FlowModel {
  FlowModelConfig cfg;
  Conditioner<S> conditioner;
  Denoiser<S> denoiser;

  FlowModel() = default;
  explicit FlowModel(const FlowModelConfig& c, std::uint64_t seed = 0)
      : cfg(c), conditioner(c.conditioner, seed), denoiser(c.denoiser, seed) {
    if (c.conditioner.d != c.denoiser.d) throw Error(ErrorCode::InvalidArgument, "conditioner and denoiser widths differ");
    if (c.denoiser.patch_dim != c.patch.dim()) throw Error(ErrorCode::InvalidArgument, "denoiser patch_dim differs from patch size");
  }

  template <typename F>
  void visit(F&& f) {
    conditioner.visit(f, "conditioner");
    denoiser.visit(f, "denoiser");
  }

  struct Cache {
    TokenDims dims;
    Mat<S> source, x_t, pos_src, pos_tgt;
    typename Conditioner<S>::Cache cond;
    typename Denoiser<S>::Cache den;
  };

  /// Predicted velocity (L × patch_dim) for noisy target tokens x_t at time t.
  Mat<S> forward(const FlowSample<S>& s, const Mat<S>& x_t, double t, Cache& c) const {
    const TokenDims td = s.dims;
    if (s.source.rows() != td.count() || x_t.rows() != td.count())
      throw Error(ErrorCode::ShapeMismatch, "token count differs from dims");
    c.dims = td;
    c.source = s.source;
    c.x_t = x_t;
    c.pos_src = token_position_features<S>(td.f, td.h, td.w, 0, cfg.denoiser.pos);
    c.pos_tgt = token_position_features<S>(td.f, td.h, td.w, 1, cfg.denoiser.pos);
    TokenGrid<S> vid_src(td.f, td.h, td.w, cfg.denoiser.d), vid_tgt(td.f, td.h, td.w, cfg.denoiser.d);
    vid_src.data = denoiser.embed_tokens(s.source, c.pos_src);
    vid_tgt.data = denoiser.embed_tokens(x_t, c.pos_tgt);
    Mat<S> seq;
    if (cfg.use_tracks) {
      const auto trk = conditioner.forward(vid_src, s.src_in, s.tgt_in, c.cond);
      seq = condition_tokens(vid_src, vid_tgt, trk.src, trk.tgt);
    } else {
      const TokenGrid<S> zero(td.f, td.h, td.w, cfg.denoiser.d);
      seq = condition_tokens(vid_src, vid_tgt, zero, zero);
    }
    return denoiser.forward(seq, t, c.den);
  }

  /// Accumulates gradients of every parameter for upstream d(velocity).
  void backward(const Mat<S>& dv, const Cache& c) {
    auto g = condition_tokens_backward<S>(denoiser.backward(dv, c.den));
    if (cfg.use_tracks) g.vid_src += conditioner.backward(g.trk_src, g.trk_tgt, c.cond).vid_src;
    denoiser.embed_tokens_backward(c.source, c.pos_src, g.vid_src);
    denoiser.embed_tokens_backward(c.x_t, c.pos_tgt, g.vid_tgt);
  }
};

/// Mean squared velocity error and its gradient with respect to the prediction.
template <typename S>
double velocity_loss(const Mat<S>& pred, const Mat<S>& target, Mat<S>* grad = nullptr) {
  const Mat<S> diff = pred - target;
  const double n = static_cast<double>(diff.size());
  if (grad) *grad = diff * S(2.0 / n);
  return diff.template cast<double>().squaredNorm() / n;
}

/// Euler integration of the learned velocity from t = 1 (noise) to t = 0.
template <typename S>
VideoClip generate(const FlowModel<S>& model, const FlowSample<S>& s, int steps, Rng rng) {
  if (steps < 1) throw Error(ErrorCode::InvalidArgument, "steps must be >= 1");
  Mat<S> x = gaussian_noise<S>(s.dims.count(), model.cfg.patch.dim(), rng);
  typename FlowModel<S>::Cache c;
  for (int k = 0; k < steps; ++k) {
    const double t = 1.0 - static_cast<double>(k) / steps;
    x -= S(1.0 / steps) * model.forward(s, x, t, c);
  }
  TokenGrid<S> g(s.dims.f, s.dims.h, s.dims.w, model.cfg.patch.dim());
  g.data = ((x.array() + S(1)) * S(0.5)).matrix();
  VideoClip v = unpatchify(g, model.cfg.patch);
  for (double& p : v.data) p = std::clamp(p, 0.0, 1.0);
  return v;
}

}  // namespace trackedit
