#pragma once

// 3D track conditioner: per-track context is sampled from source video
// tokens by cross-attention (track-coordinate queries against a grid key),
// mixed over time by two self-attention blocks per track, offset by a
// depth embedding per branch, and splatted back onto the source and target
// frame grids by one shared cross-attention (grid queries against
// track-coordinate keys).

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>
#include <vector>

#include "trackedit/error.hpp"
#include "trackedit/nn/layers.hpp"
#include "trackedit/tracks.hpp"

namespace trackedit {

using nn::Mat;

// ---------------------------------------------------------------------------
// Positional encoding of (x, y, z, existence)

struct PosEncConfig {
  int dim = 32;                 // total width; each of the 4 inputs gets dim/4
  double base = 10000.0;        // frequency ratio across lanes
  double input_scale = 20.0;    // highest frequency, rad per unit input; not a multiple of pi, so
                                // regular grids do not alias

  int frequencies() const { return dim / 8; }
  double frequency(int i) const { return input_scale * std::pow(base, -static_cast<double>(i) / frequencies()); }

  void validate() const {
    if (dim < 8 || dim % 8 != 0) throw Error(ErrorCode::InvalidArgument, "positional encoding width must be a multiple of 8");
  }
};

/// Writes the encoding of one 4-vector into `out` (length cfg.dim). Per
/// input: sin lanes at decreasing frequencies, then the matching cos lanes.
template <typename S, typename Out>
void posenc4_into(const PosEncConfig& cfg, const double (&in)[4], Out&& out) {
  const int m = cfg.frequencies();
  for (int a = 0; a < 4; ++a)
    for (int i = 0; i < m; ++i) {
      const double phase = cfg.frequency(i) * in[a];
      out(a * 2 * m + i) = static_cast<S>(std::sin(phase));
      out(a * 2 * m + m + i) = static_cast<S>(std::cos(phase));
    }
}

inline Eigen::VectorXd posenc4(double x, double y, double z, double e, const PosEncConfig& cfg = {}) {
  Eigen::VectorXd v(cfg.dim);
  const double in[4] = {x, y, z, e};
  posenc4_into<double>(cfg, in, v);
  return v;
}

/// Encodes every row of an R×4 input matrix.
template <typename S>
Mat<S> posenc_rows(const Mat<S>& inputs, const PosEncConfig& cfg) {
  Mat<S> out(inputs.rows(), cfg.dim);
  for (Eigen::Index r = 0; r < inputs.rows(); ++r) {
    const double in[4] = {double(inputs(r, 0)), double(inputs(r, 1)), double(inputs(r, 2)), double(inputs(r, 3))};
    posenc4_into<S>(cfg, in, out.row(r));
  }
  return out;
}

/// Gradient of posenc_rows with respect to its inputs.
template <typename S>
Mat<S> posenc_rows_backward(const Mat<S>& inputs, const Mat<S>& dpe, const PosEncConfig& cfg) {
  const int m = cfg.frequencies();
  Mat<S> d = Mat<S>::Zero(inputs.rows(), 4);
  for (Eigen::Index r = 0; r < inputs.rows(); ++r)
    for (int a = 0; a < 4; ++a) {
      S acc = 0;
      for (int i = 0; i < m; ++i) {
        const S w = static_cast<S>(cfg.frequency(i));
        const S phase = w * inputs(r, a);
        acc += w * (std::cos(phase) * dpe(r, a * 2 * m + i) - std::sin(phase) * dpe(r, a * 2 * m + m + i));
      }
      d(r, a) = acc;
    }
  return d;
}

/// Patch-center keys: entry (i, j) encodes ((j + 0.5) / w, (i + 0.5) / h, 0, 1).
template <typename S>
Mat<S> build_grid_key(int h, int w, const PosEncConfig& cfg) {
  if (h < 1 || w < 1) throw Error(ErrorCode::InvalidArgument, "grid dims must be >= 1");
  Mat<S> in(static_cast<Eigen::Index>(h) * w, 4);
  for (int i = 0; i < h; ++i)
    for (int j = 0; j < w; ++j) in.row(i * w + j) << S((j + 0.5) / w), S((i + 0.5) / h), S(0), S(1);
  return posenc_rows<S>(in, cfg);
}

/// frames·N × 4 rows of (x, y, z, existence), frame-major.
template <typename S>
Mat<S> track_inputs(const ProjectedTracks& pt) {
  Mat<S> in(static_cast<Eigen::Index>(pt.frames) * pt.count, 4);
  for (int f = 0; f < pt.frames; ++f)
    for (int n = 0; n < pt.count; ++n) {
      const Vec3& c = pt.at(f, n);
      in.row(pt.index(f, n)) << S(c.x()), S(c.y()), S(c.z()), S(pt.existence[pt.index(f, n)]);
    }
  return in;
}

// ---------------------------------------------------------------------------

template <typename S>
struct TokenGrid {
  int f = 0, h = 0, w = 0, d = 0;
  Mat<S> data;  // f·h·w × d, (f, h, w) row-major

  TokenGrid() = default;
  TokenGrid(int f_, int h_, int w_, int d_) : f(f_), h(h_), w(w_), d(d_), data(Mat<S>::Zero(Eigen::Index(f_) * h_ * w_, d_)) {}
  int tokens_per_frame() const { return h * w; }
  bool same_shape(const TokenGrid& o) const { return f == o.f && h == o.h && w == o.w && d == o.d; }
};

/// Source and target grids concatenated in (branch, f, h, w) row order.
template <typename S>
Mat<S> condition_tokens(const TokenGrid<S>& vid_src, const TokenGrid<S>& vid_tgt, const TokenGrid<S>& trk_src,
                        const TokenGrid<S>& trk_tgt) {
  if (!vid_src.same_shape(vid_tgt) || !vid_src.same_shape(trk_src) || !vid_src.same_shape(trk_tgt))
    throw Error(ErrorCode::ShapeMismatch, "condition_tokens needs four grids of equal shape");
  const Eigen::Index n = vid_src.data.rows();
  Mat<S> out(2 * n, vid_src.d);
  out.topRows(n) = vid_src.data + trk_src.data;
  out.bottomRows(n) = vid_tgt.data + trk_tgt.data;
  return out;
}

template <typename S>
struct ConditionTokenGrads {
  Mat<S> vid_src, vid_tgt, trk_src, trk_tgt;
};

/// Each input receives its branch's slice of the upstream gradient.
template <typename S>
ConditionTokenGrads<S> condition_tokens_backward(const Mat<S>& dseq) {
  const Eigen::Index n = dseq.rows() / 2;
  return {dseq.topRows(n), dseq.bottomRows(n), dseq.topRows(n), dseq.bottomRows(n)};
}

struct ConditionerConfig {
  int d = 128;
  int heads = 4;
  int blocks = 2;
  int ffn_mult = 4;
  PosEncConfig pe{32};
  // Scaled identity added to each head's query/key projection at init so
  // sampling and splatting start out attending to matching positions. 0
  // keeps the plain random init.
  double locality_gain = 0.0;

  int d_head() const { return d / heads; }
  void validate() const {
    pe.validate();
    if (heads < 1 || d % heads != 0) throw Error(ErrorCode::InvalidArgument, "d must be divisible by heads");
  }
  /// Encoding width equal to one head, the canonical layout.
  static ConditionerConfig with_head_width_pe(int d, int heads) {
    ConditionerConfig c;
    c.d = d;
    c.heads = heads;
    c.pe.dim = d / heads;
    return c;
  }
};

enum class Branch { Source, Target };

template <typename S>
struct Conditioner {
  ConditionerConfig cfg;
  nn::CrossAttention<S> sampler;
  std::vector<nn::TransformerBlock<S>> temporal;
  nn::Linear<S> depth_proj;
  nn::CrossAttention<S> splatter;  // one parameter set for both branches

  Conditioner() = default;
  explicit Conditioner(const ConditionerConfig& c, std::uint64_t seed = 0)
      : cfg(c),
        sampler(c.pe.dim, c.d, c.heads),
        depth_proj(c.pe.dim, c.d),
        splatter(c.pe.dim, c.d, c.heads) {
    cfg.validate();
    for (int b = 0; b < c.blocks; ++b) temporal.emplace_back(c.d, c.heads, c.ffn_mult);
    Rng rng = Rng(seed).split("conditioner");
    sampler.init(rng);
    for (auto& blk : temporal) blk.init(rng);
    depth_proj.init(rng);
    splatter.init(rng);
    if (c.locality_gain != 0.0) {
      localize(sampler);
      localize(splatter);
    }
  }

  void localize(nn::CrossAttention<S>& a) const {
    const int n = std::min(cfg.pe.dim, cfg.d_head());
    for (int h = 0; h < cfg.heads; ++h)
      for (int i = 0; i < n; ++i) {
        a.q_proj.weight.value(i, h * cfg.d_head() + i) += S(cfg.locality_gain);
        a.k_proj.weight.value(i, h * cfg.d_head() + i) += S(cfg.locality_gain);
      }
    a.q_proj.bias.value.setZero();
  }

  const nn::CrossAttention<S>& splatter_for(Branch) const { return splatter; }

  template <typename F>
  void visit(F&& f, const std::string& prefix = "conditioner") {
    sampler.visit(f, prefix + ".sampler");
    for (std::size_t b = 0; b < temporal.size(); ++b) temporal[b].visit(f, prefix + ".temporal" + std::to_string(b));
    depth_proj.visit(f, prefix + ".depth_proj");
    splatter.visit(f, prefix + ".splatter");
  }

  // ---- individual stages -------------------------------------------------

  struct SampleCache {
    struct Track {
      Mat<S> pe, q, concat;                  // f rows each
      std::vector<nn::RowVec<S>> probs;       // f·heads rows of length h·w
      std::vector<typename nn::TransformerBlock<S>::Cache> blocks;
    };
    Mat<S> grid, kp, vid;
    Mat<S> attended;  // frame-major, pre-transformer
    std::vector<Track> tracks;
    bool temporal = true;
  };

  /// Per frame, track queries attend over the grid key with the frame's video
  /// tokens as values; then each track's f tokens pass through the temporal
  /// blocks. Every track is evaluated on its own so results do not depend on
  /// track order. Output rows are frame-major (k·N + n).
  Mat<S> sample_context(const Mat<S>& pe_src, int N, const Mat<S>& grid, const Mat<S>& vid, int f,
                        SampleCache& c, bool run_temporal = true) const {
    const Eigen::Index hw = grid.rows();
    if (vid.rows() != f * hw || pe_src.rows() != Eigen::Index(f) * N || vid.cols() != cfg.d)
      throw Error(ErrorCode::ShapeMismatch, "sample_context: track frames must match video token frames");
    const int heads = cfg.heads, dh = cfg.d_head();
    const S scale = S(1) / std::sqrt(static_cast<S>(dh));
    c.grid = grid;
    c.kp = sampler.k_proj.forward(grid);
    c.vid = vid;
    c.temporal = run_temporal;
    c.tracks.assign(N, {});
    c.attended.resize(Eigen::Index(f) * N, cfg.d);
    Mat<S> out(Eigen::Index(f) * N, cfg.d);
    for (int n = 0; n < N; ++n) {
      auto& t = c.tracks[n];
      t.pe.resize(f, pe_src.cols());
      for (int k = 0; k < f; ++k) t.pe.row(k) = pe_src.row(Eigen::Index(k) * N + n);
      t.q = sampler.q_proj.forward(t.pe);
      t.concat.resize(f, cfg.d);
      t.probs.resize(static_cast<std::size_t>(f) * heads);
      for (int k = 0; k < f; ++k)
        for (int h = 0; h < heads; ++h) {
          nn::RowVec<S>& p = t.probs[static_cast<std::size_t>(k) * heads + h];
          p.noalias() = t.q.row(k).segment(h * dh, dh) * c.kp.middleCols(h * dh, dh).transpose();
          p *= scale;
          p = (p.array() - p.maxCoeff()).exp();
          p /= p.sum();
          t.concat.row(k).segment(h * dh, dh).noalias() = p * vid.block(k * hw, h * dh, hw, dh);
        }
      Mat<S> x = sampler.out_proj.forward(t.concat);
      for (int k = 0; k < f; ++k) c.attended.row(Eigen::Index(k) * N + n) = x.row(k);
      if (run_temporal) {
        t.blocks.resize(temporal.size());
        for (std::size_t b = 0; b < temporal.size(); ++b) x = temporal[b].forward(x, 1, t.blocks[b]);
      }
      for (int k = 0; k < f; ++k) out.row(Eigen::Index(k) * N + n) = x.row(k);
    }
    return out;
  }

  /// Returns d(vid); accumulates parameter grads; d(pe_src) through `dpe`.
  Mat<S> sample_context_backward(const Mat<S>& dout, int N, int f, const SampleCache& c, Mat<S>& dpe) {
    const Eigen::Index hw = c.grid.rows();
    const int heads = cfg.heads, dh = cfg.d_head();
    const S scale = S(1) / std::sqrt(static_cast<S>(dh));
    Mat<S> dvid = Mat<S>::Zero(Eigen::Index(f) * hw, cfg.d);
    Mat<S> dkp = Mat<S>::Zero(hw, cfg.d);
    dpe.resize(Eigen::Index(f) * N, cfg.pe.dim);
    Mat<S> dx(f, cfg.d), dq(f, cfg.d);
    nn::RowVec<S> dp;
    for (int n = 0; n < N; ++n) {
      const auto& t = c.tracks[n];
      for (int k = 0; k < f; ++k) dx.row(k) = dout.row(Eigen::Index(k) * N + n);
      if (c.temporal)
        for (std::size_t b = temporal.size(); b-- > 0;) dx = temporal[b].backward(dx, t.blocks[b]);
      const Mat<S> dconcat = sampler.out_proj.backward(t.concat, dx);
      for (int k = 0; k < f; ++k)
        for (int h = 0; h < heads; ++h) {
          const nn::RowVec<S>& p = t.probs[static_cast<std::size_t>(k) * heads + h];
          const auto dout_h = dconcat.row(k).segment(h * dh, dh);
          const auto v = c.vid.block(k * hw, h * dh, hw, dh);
          dvid.block(k * hw, h * dh, hw, dh).noalias() += p.transpose() * dout_h;
          dp.noalias() = dout_h * v.transpose();
          const S dot = (dp.array() * p.array()).sum();
          dp = (p.array() * (dp.array() - dot)) * scale;
          dq.row(k).segment(h * dh, dh).noalias() = dp * c.kp.middleCols(h * dh, dh);
          dkp.middleCols(h * dh, dh).noalias() += dp.transpose() * t.q.row(k).segment(h * dh, dh);
        }
      const Mat<S> dpe_n = sampler.q_proj.backward(t.pe, dq);
      for (int k = 0; k < f; ++k) dpe.row(Eigen::Index(k) * N + n) = dpe_n.row(k);
    }
    sampler.k_proj.accumulate(c.grid, dkp);
    return dvid;
  }

  /// tt + depth_proj(posenc(0, 0, z, 1)).
  Mat<S> inject_depth(const Mat<S>& tt, const Mat<S>& pe_depth) const { return tt + depth_proj.forward(pe_depth); }

  struct SplatCache {
    std::vector<typename nn::CrossAttention<S>::Cache> frames;
  };

  /// Per frame, grid queries attend over the branch's track keys with the
  /// frame's track tokens as values.
  Mat<S> splat(const Mat<S>& tt, const Mat<S>& pe_branch, int N, const Mat<S>& grid, int f, SplatCache& c) const {
    if (tt.rows() != Eigen::Index(f) * N || pe_branch.rows() != tt.rows())
      throw Error(ErrorCode::ShapeMismatch, "splat: token and coordinate counts differ");
    const Eigen::Index hw = grid.rows();
    Mat<S> out(f * hw, cfg.d);
    c.frames.resize(f);
    for (int k = 0; k < f; ++k)
      out.middleRows(k * hw, hw) = splatter.forward(grid, pe_branch.middleRows(Eigen::Index(k) * N, N),
                                                     tt.middleRows(Eigen::Index(k) * N, N), c.frames[k]);
    return out;
  }

  /// Returns d(tt); d(pe_branch) through `dpe`.
  Mat<S> splat_backward(const Mat<S>& dout, int N, int f, const SplatCache& c, Mat<S>& dpe) {
    const Eigen::Index hw = dout.rows() / f;
    Mat<S> dtt(Eigen::Index(f) * N, cfg.d);
    dpe.resize(Eigen::Index(f) * N, cfg.pe.dim);
    for (int k = 0; k < f; ++k) {
      auto g = splatter.backward(dout.middleRows(k * hw, hw), c.frames[k]);
      dtt.middleRows(Eigen::Index(k) * N, N) = g.values;
      dpe.middleRows(Eigen::Index(k) * N, N) = g.keys;
    }
    return dtt;
  }

  // ---- full pass -----------------------------------------------------------

  struct Cache {
    int f = 0, h = 0, w = 0, N = 0;
    Mat<S> grid;
    Mat<S> src_in, tgt_in;    // frames·N × 4 coordinates
    Mat<S> pe_src, pe_tgt;    // coordinate encodings
    Mat<S> dep_src, dep_tgt;  // (0, 0, z, 1) encodings
    Mat<S> sampled;
    SampleCache sample;
    SplatCache splat_src, splat_tgt;
  };

  struct Output {
    TokenGrid<S> src, tgt;
  };

  /// vid_src: f·h·w × d source video tokens. src_in/tgt_in: f·N × 4 track
  /// inputs (x, y, z, existence) at token frames.
  Output forward(const TokenGrid<S>& vid_src, const Mat<S>& src_in, const Mat<S>& tgt_in, Cache& c) const {
    if (src_in.rows() != tgt_in.rows() || src_in.cols() != 4 || tgt_in.cols() != 4 || src_in.rows() % vid_src.f != 0)
      throw Error(ErrorCode::ShapeMismatch, "conditioner: source/target track inputs must be f·N × 4");
    if (vid_src.d != cfg.d) throw Error(ErrorCode::ShapeMismatch, "conditioner: token width differs from config");
    c.f = vid_src.f;
    c.h = vid_src.h;
    c.w = vid_src.w;
    c.N = static_cast<int>(src_in.rows() / vid_src.f);
    c.grid = build_grid_key<S>(c.h, c.w, cfg.pe);
    c.src_in = src_in;
    c.tgt_in = tgt_in;
    c.pe_src = posenc_rows<S>(src_in, cfg.pe);
    c.pe_tgt = posenc_rows<S>(tgt_in, cfg.pe);
    c.dep_src = posenc_rows<S>(depth_inputs(src_in), cfg.pe);
    c.dep_tgt = posenc_rows<S>(depth_inputs(tgt_in), cfg.pe);
    c.sampled = sample_context(c.pe_src, c.N, c.grid, vid_src.data, c.f, c.sample);
    Output out{TokenGrid<S>(c.f, c.h, c.w, cfg.d), TokenGrid<S>(c.f, c.h, c.w, cfg.d)};
    out.src.data = splat(inject_depth(c.sampled, c.dep_src), c.pe_src, c.N, c.grid, c.f, c.splat_src);
    out.tgt.data = splat(inject_depth(c.sampled, c.dep_tgt), c.pe_tgt, c.N, c.grid, c.f, c.splat_tgt);
    return out;
  }

  struct InputGrads {
    Mat<S> vid_src;  // f·h·w × d
    Mat<S> src_in;   // f·N × 4
    Mat<S> tgt_in;
  };

  InputGrads backward(const Mat<S>& d_src, const Mat<S>& d_tgt, const Cache& c) {
    Mat<S> dpe_src_key, dpe_tgt_key;
    const Mat<S> dtt_src = splat_backward(d_src, c.N, c.f, c.splat_src, dpe_src_key);
    const Mat<S> dtt_tgt = splat_backward(d_tgt, c.N, c.f, c.splat_tgt, dpe_tgt_key);
    const Mat<S> ddep_src = depth_proj.backward(c.dep_src, dtt_src);
    const Mat<S> ddep_tgt = depth_proj.backward(c.dep_tgt, dtt_tgt);
    Mat<S> dpe_query;
    InputGrads g;
    g.vid_src = sample_context_backward(dtt_src + dtt_tgt, c.N, c.f, c.sample, dpe_query);
    g.src_in = posenc_rows_backward<S>(c.src_in, dpe_src_key + dpe_query, cfg.pe) +
               depth_input_backward(posenc_rows_backward<S>(depth_inputs(c.src_in), ddep_src, cfg.pe));
    g.tgt_in = posenc_rows_backward<S>(c.tgt_in, dpe_tgt_key, cfg.pe) +
               depth_input_backward(posenc_rows_backward<S>(depth_inputs(c.tgt_in), ddep_tgt, cfg.pe));
    return g;
  }

 private:
  static Mat<S> depth_inputs(const Mat<S>& in) {
    Mat<S> d = Mat<S>::Zero(in.rows(), 4);
    d.col(2) = in.col(2);
    d.col(3).setOnes();
    return d;
  }
  static Mat<S> depth_input_backward(const Mat<S>& dd) {
    Mat<S> g = Mat<S>::Zero(dd.rows(), 4);
    g.col(2) = dd.col(2);
    return g;
  }
};

}  // namespace trackedit
