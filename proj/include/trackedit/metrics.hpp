#pragma once

// Evaluation metrics: end-point error between 2D tracks, PSNR and SSIM
// between clips, each with an optional pixel mask, plus the report record.
// Masked and unmasked variants share one code path, so an all-ones mask
// reproduces the unmasked value bit for bit.

#include <array>
#include <cmath>
#include <iomanip>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "trackedit/project_io.hpp"

namespace trackedit {

/// F×N pixel positions with optional visibility.
struct Tracks2D {
  int frames = 0;
  int count = 0;
  std::vector<Vec2> px;                   // F×N
  std::vector<std::uint8_t> visibility;   // empty or F×N

  Tracks2D() = default;
  Tracks2D(int f, int n) : frames(f), count(n), px(static_cast<std::size_t>(f) * n, Vec2::Zero()) {}

  std::size_t index(int f, int n) const { return static_cast<std::size_t>(f) * count + n; }
  Vec2& at(int f, int n) { return px[index(f, n)]; }
  const Vec2& at(int f, int n) const { return px[index(f, n)]; }
};

inline Tracks2D to_pixels(const ProjectedTracks& pt) {
  Tracks2D out(pt.frames, pt.count);
  for (int f = 0; f < pt.frames; ++f)
    for (int n = 0; n < pt.count; ++n) out.at(f, n) = pt.pixel(f, n);
  return out;
}

/// Pixel projections of a track set, carrying its stored visibility.
inline Tracks2D project_to_pixels(const TrackSet& ts, const CameraPath& cam) {
  const ProjectedTracks pt = project_tracks(ts, cam, DisparityRange{});
  Tracks2D out = to_pixels(pt);
  out.visibility = ts.visibility;
  return out;
}

// ---------------------------------------------------------------------------
// EPE

struct EpeResult {
  double mean = 0;                      // over every (frame, track)
  std::optional<double> mean_visible;   // over samples visible in both, when known
  std::vector<double> per_frame;
};

inline EpeResult epe_detail(const Tracks2D& a, const Tracks2D& b) {
  if (a.frames != b.frames || a.count != b.count || a.px.size() != b.px.size())
    throw Error(ErrorCode::ShapeMismatch, "track sets differ in shape");
  if (a.frames < 1 || a.count < 1) throw Error(ErrorCode::ShapeMismatch, "empty track set");
  EpeResult r;
  double total = 0, vis_total = 0;
  std::size_t vis_n = 0;
  const bool have_vis = !a.visibility.empty() || !b.visibility.empty();
  for (int f = 0; f < a.frames; ++f) {
    double frame_sum = 0;
    for (int n = 0; n < a.count; ++n) {
      const std::size_t i = a.index(f, n);
      const double d = (a.px[i] - b.px[i]).norm();
      frame_sum += d;
      const bool va = a.visibility.empty() || a.visibility[i];
      const bool vb = b.visibility.empty() || b.visibility[i];
      if (have_vis && va && vb) {
        vis_total += d;
        ++vis_n;
      }
    }
    total += frame_sum;
    r.per_frame.push_back(frame_sum / a.count);
  }
  r.mean = total / (static_cast<double>(a.frames) * a.count);
  if (have_vis && vis_n > 0) r.mean_visible = vis_total / static_cast<double>(vis_n);
  return r;
}

inline double epe(const Tracks2D& a, const Tracks2D& b) { return epe_detail(a, b).mean; }

// ---------------------------------------------------------------------------
// PSNR

namespace detail {

inline void check_pair(const VideoClip& a, const VideoClip& b, const CoverageVideo* mask) {
  if (!a.same_shape(b)) throw Error(ErrorCode::ShapeMismatch, "videos differ in shape");
  if (mask && (mask->frames != a.frames || mask->height != a.height || mask->width != a.width))
    throw Error(ErrorCode::ShapeMismatch, "mask shape differs from video");
}

inline double psnr_from_mse(double mse) {
  return mse == 0.0 ? std::numeric_limits<double>::infinity() : 10.0 * std::log10(1.0 / mse);
}

}  // namespace detail

struct SeriesResult {
  double value = 0;
  std::vector<double> per_frame;  // frames with nothing masked in are NaN
};

/// Peak 1.0. Identical inputs give +infinity.
inline SeriesResult psnr_detail(const VideoClip& a, const VideoClip& b, const CoverageVideo* mask = nullptr) {
  detail::check_pair(a, b, mask);
  double total = 0;
  std::size_t total_n = 0;
  SeriesResult r;
  for (int f = 0; f < a.frames; ++f) {
    double s = 0;
    std::size_t n = 0;
    for (int y = 0; y < a.height; ++y)
      for (int x = 0; x < a.width; ++x) {
        if (mask && !mask->at(f, y, x)) continue;
        for (int ch = 0; ch < 3; ++ch) {
          const double d = a.at(f, y, x, ch) - b.at(f, y, x, ch);
          s += d * d;
        }
        n += 3;
      }
    total += s;
    total_n += n;
    r.per_frame.push_back(n ? detail::psnr_from_mse(s / static_cast<double>(n)) : std::numeric_limits<double>::quiet_NaN());
  }
  if (total_n == 0) throw Error(ErrorCode::EmptyMask, "mask selects no pixels");
  r.value = detail::psnr_from_mse(total / static_cast<double>(total_n));
  return r;
}

inline double psnr(const VideoClip& a, const VideoClip& b, const CoverageVideo* mask = nullptr) {
  return psnr_detail(a, b, mask).value;
}

// ---------------------------------------------------------------------------
// SSIM

struct SsimOptions {
  int window = 11;
  double sigma = 1.5;
  double k1 = 0.01;
  double k2 = 0.03;
  double dynamic_range = 1.0;
};

inline std::vector<double> gaussian_window(int size, double sigma) {
  std::vector<double> w(static_cast<std::size_t>(size));
  const double c = (size - 1) / 2.0;
  double sum = 0;
  for (int i = 0; i < size; ++i) {
    w[i] = std::exp(-(i - c) * (i - c) / (2 * sigma * sigma));
    sum += w[i];
  }
  for (double& v : w) v /= sum;
  return w;
}

/// Windowed SSIM per channel over every full window position ("valid"
/// filtering); a masked run keeps windows whose center pixel is in the mask.
/// Mean over frames, channels and kept windows.
inline SeriesResult ssim_detail(const VideoClip& a, const VideoClip& b, const CoverageVideo* mask = nullptr,
                                const SsimOptions& opt = {}) {
  detail::check_pair(a, b, mask);
  const int K = opt.window;
  if (a.height < K || a.width < K)
    throw Error(ErrorCode::FrameTooSmall, "frames must be at least " + std::to_string(K) + " pixels on each side");
  const std::vector<double> g = gaussian_window(K, opt.sigma);
  const double c1 = std::pow(opt.k1 * opt.dynamic_range, 2), c2 = std::pow(opt.k2 * opt.dynamic_range, 2);
  const int H = a.height, W = a.width, oh = H - K + 1, ow = W - K + 1, half = K / 2;

  // Horizontal then vertical passes over the five moment images.
  std::array<std::vector<double>, 5> src, hor, ver;
  for (auto& v : src) v.resize(static_cast<std::size_t>(H) * W);
  for (auto& v : hor) v.resize(static_cast<std::size_t>(H) * ow);
  for (auto& v : ver) v.resize(static_cast<std::size_t>(oh) * ow);

  double total = 0;
  std::size_t total_n = 0;
  SeriesResult r;
  for (int f = 0; f < a.frames; ++f) {
    double fs = 0;
    std::size_t fn = 0;
    for (int ch = 0; ch < 3; ++ch) {
      for (int y = 0; y < H; ++y)
        for (int x = 0; x < W; ++x) {
          const double p = a.at(f, y, x, ch), q = b.at(f, y, x, ch);
          const std::size_t i = static_cast<std::size_t>(y) * W + x;
          src[0][i] = p;
          src[1][i] = q;
          src[2][i] = p * p;
          src[3][i] = q * q;
          src[4][i] = p * q;
        }
      for (int m = 0; m < 5; ++m) {
        for (int y = 0; y < H; ++y)
          for (int x = 0; x < ow; ++x) {
            double s = 0;
            for (int k = 0; k < K; ++k) s += g[k] * src[m][static_cast<std::size_t>(y) * W + x + k];
            hor[m][static_cast<std::size_t>(y) * ow + x] = s;
          }
        for (int y = 0; y < oh; ++y)
          for (int x = 0; x < ow; ++x) {
            double s = 0;
            for (int k = 0; k < K; ++k) s += g[k] * hor[m][static_cast<std::size_t>(y + k) * ow + x];
            ver[m][static_cast<std::size_t>(y) * ow + x] = s;
          }
      }
      for (int y = 0; y < oh; ++y)
        for (int x = 0; x < ow; ++x) {
          if (mask && !mask->at(f, y + half, x + half)) continue;
          const std::size_t i = static_cast<std::size_t>(y) * ow + x;
          const double mx = ver[0][i], my = ver[1][i];
          const double vx = ver[2][i] - mx * mx, vy = ver[3][i] - my * my, cxy = ver[4][i] - mx * my;
          fs += ((2 * mx * my + c1) * (2 * cxy + c2)) / ((mx * mx + my * my + c1) * (vx + vy + c2));
          ++fn;
        }
    }
    total += fs;
    total_n += fn;
    r.per_frame.push_back(fn ? fs / static_cast<double>(fn) : std::numeric_limits<double>::quiet_NaN());
  }
  if (total_n == 0) throw Error(ErrorCode::EmptyMask, "mask keeps no SSIM windows");
  r.value = total / static_cast<double>(total_n);
  return r;
}

inline double ssim(const VideoClip& a, const VideoClip& b, const CoverageVideo* mask = nullptr, const SsimOptions& opt = {}) {
  return ssim_detail(a, b, mask, opt).value;
}

// ---------------------------------------------------------------------------
// Report

/// Finite numbers as JSON numbers; +inf as the string "inf"; NaN as null.
inline json metric_value(double v) {
  if (std::isinf(v) && v > 0) return "inf";
  if (!std::isfinite(v)) return nullptr;
  return v;
}

struct MetricReport {
  int frames = 0, height = 0, width = 0;
  bool masked = false;
  std::optional<SeriesResult> psnr, ssim;
  std::optional<EpeResult> epe;
  int tracks = 0;

  json to_json() const {
    json metrics = json::object(), series = json::object();
    auto put_series = [&](const char* name, const std::vector<double>& v) {
      json a = json::array();
      for (double x : v) a.push_back(metric_value(x));
      series[name] = std::move(a);
    };
    if (psnr) {
      metrics["psnr"] = metric_value(psnr->value);
      put_series("psnr", psnr->per_frame);
    }
    if (ssim) {
      metrics["ssim"] = metric_value(ssim->value);
      put_series("ssim", ssim->per_frame);
    }
    if (epe) {
      metrics["epe"] = metric_value(epe->mean);
      if (epe->mean_visible) metrics["epe_visible"] = metric_value(*epe->mean_visible);
      put_series("epe", epe->per_frame);
    }
    json meta = {{"frames", frames}, {"height", height}, {"width", width}, {"masked", masked}, {"tracks", tracks}};
    return {{"metrics", std::move(metrics)}, {"per_frame", std::move(series)}, {"metadata", std::move(meta)}};
  }

  /// Fixed-order table: metric, value.
  std::string table() const {
    std::ostringstream os;
    auto row = [&](const char* name, double v) {
      os << std::left << std::setw(12) << name;
      if (std::isinf(v))
        os << "inf\n";
      else
        os << std::fixed << std::setprecision(6) << v << "\n";
    };
    if (psnr) row("psnr_db", psnr->value);
    if (ssim) row("ssim", ssim->value);
    if (epe) row("epe_px", epe->mean);
    if (epe && epe->mean_visible) row("epe_vis_px", *epe->mean_visible);
    return os.str();
  }
};

/// PSNR and SSIM between two clips (SSIM skipped for frames under the
/// window size), and EPE when both track sets are given.
inline MetricReport evaluate(const VideoClip& a, const VideoClip& b, const CoverageVideo* mask = nullptr,
                             const Tracks2D* tracks_a = nullptr, const Tracks2D* tracks_b = nullptr) {
  MetricReport r;
  r.frames = a.frames;
  r.height = a.height;
  r.width = a.width;
  r.masked = mask != nullptr;
  r.psnr = psnr_detail(a, b, mask);
  if (a.height >= SsimOptions{}.window && a.width >= SsimOptions{}.window) r.ssim = ssim_detail(a, b, mask);
  if (tracks_a && tracks_b) {
    r.epe = epe_detail(*tracks_a, *tracks_b);
    r.tracks = tracks_a->count;
  }
  return r;
}

}  // namespace trackedit
