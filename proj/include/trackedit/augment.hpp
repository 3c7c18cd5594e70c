#pragma once

// Training-time track perturbations and clip augmentations. Every op is a
// pure function of its inputs and an Rng; zero magnitudes are exact
// identities. Ops optionally append what they drew to a JSON record so a run
// can be replayed.

#include <algorithm>
#include <cmath>
#include <numbers>
#include <optional>
#include <vector>

#include "trackedit/project_io.hpp"

namespace trackedit {

struct AugmentConfig {
  double epipolar_fraction = 0.1;
  double epipolar_sigma = 0.05;      // relative depth jitter
  double homography_fraction = 0.1;
  double homography_jitter_px = 3.0;
  double drift_fraction = 0.1;
  double drift_velocity_range = 2.0; // px per frame
  double dropout_max = 0.5;
  double overlap_pair_fraction = 0.05;
  double overlap_max = 0.5;
  double flip_prob = 0.5;
  std::uint64_t seed = 0;

  static constexpr double kTrackCap = 0.1;
  static constexpr double kDropoutCap = 0.5;
  static constexpr double kOverlapCap = 0.5;

  void validate(const std::string& file = {}) const {
    auto frac = [&](const char* name, double v, double cap) {
      if (!(v >= 0.0 && v <= cap))
        throw Error(ErrorCode::SchemaViolation, std::string(name) + " must lie in [0, " + std::to_string(cap) + "]",
                    file, std::string("$.") + name);
    };
    auto nonneg = [&](const char* name, double v) {
      if (!(v >= 0.0 && std::isfinite(v)))
        throw Error(ErrorCode::SchemaViolation, std::string(name) + " must be non-negative", file,
                    std::string("$.") + name);
    };
    frac("epipolar_fraction", epipolar_fraction, kTrackCap);
    frac("homography_fraction", homography_fraction, kTrackCap);
    frac("drift_fraction", drift_fraction, kTrackCap);
    frac("dropout_max", dropout_max, kDropoutCap);
    frac("overlap_pair_fraction", overlap_pair_fraction, 1.0);
    frac("overlap_max", overlap_max, kOverlapCap);
    frac("flip_prob", flip_prob, 1.0);
    nonneg("epipolar_sigma", epipolar_sigma);
    nonneg("homography_jitter_px", homography_jitter_px);
    nonneg("drift_velocity_range", drift_velocity_range);
    if (epipolar_sigma >= 1.0)
      throw Error(ErrorCode::SchemaViolation, "epipolar_sigma must be below 1", file, "$.epipolar_sigma");
  }

  /// All magnitudes zero: every op is the identity.
  static AugmentConfig none() {
    AugmentConfig c;
    c.epipolar_sigma = c.homography_jitter_px = c.drift_velocity_range = 0.0;
    c.dropout_max = c.overlap_pair_fraction = c.flip_prob = 0.0;
    return c;
  }
};

inline json to_json(const AugmentConfig& c) {
  return {{"epipolar_fraction", c.epipolar_fraction},
          {"epipolar_sigma", c.epipolar_sigma},
          {"homography_fraction", c.homography_fraction},
          {"homography_jitter_px", c.homography_jitter_px},
          {"drift_fraction", c.drift_fraction},
          {"drift_velocity_range", c.drift_velocity_range},
          {"dropout_max", c.dropout_max},
          {"overlap_pair_fraction", c.overlap_pair_fraction},
          {"overlap_max", c.overlap_max},
          {"flip_prob", c.flip_prob},
          {"seed", c.seed}};
}

/// Missing fields keep their defaults; unknown fields are rejected.
inline AugmentConfig augment_config_from_json(const json& j, const std::string& file = {}) {
  if (!j.is_object()) throw Error(ErrorCode::SchemaViolation, "augment config must be an object", file, "$");
  AugmentConfig c;
  for (auto it = j.begin(); it != j.end(); ++it) {
    const std::string& k = it.key();
    const std::string field = "$." + k;
    if (k == "seed") {
      if (!it->is_number_unsigned() && !(it->is_number_integer() && it->get<std::int64_t>() >= 0))
        throw Error(ErrorCode::SchemaViolation, "seed must be a non-negative integer", file, field);
      c.seed = it->get<std::uint64_t>();
      continue;
    }
    double* slot = k == "epipolar_fraction"       ? &c.epipolar_fraction
                   : k == "epipolar_sigma"        ? &c.epipolar_sigma
                   : k == "homography_fraction"   ? &c.homography_fraction
                   : k == "homography_jitter_px"  ? &c.homography_jitter_px
                   : k == "drift_fraction"        ? &c.drift_fraction
                   : k == "drift_velocity_range"  ? &c.drift_velocity_range
                   : k == "dropout_max"           ? &c.dropout_max
                   : k == "overlap_pair_fraction" ? &c.overlap_pair_fraction
                   : k == "overlap_max"           ? &c.overlap_max
                   : k == "flip_prob"             ? &c.flip_prob
                                                  : nullptr;
    if (!slot) throw Error(ErrorCode::SchemaViolation, "unknown field", file, field);
    if (!it->is_number()) throw Error(ErrorCode::SchemaViolation, "expected a number", file, field);
    *slot = it->get<double>();
  }
  c.validate(file);
  return c;
}

namespace detail {

/// Size of a perturbed subset: uniform in [lo, floor(fraction·n)].
inline int subset_size(Rng& rng, int n, double fraction, int lo = 0) {
  const int cap = static_cast<int>(std::floor(fraction * n + 1e-9));
  if (cap < lo) return cap;
  return static_cast<int>(rng.uniform_int(lo, cap));
}

inline std::vector<int> sorted_subset(Rng& rng, int n, int k) {
  std::vector<int> out;
  for (std::size_t i : rng.choose(static_cast<std::size_t>(n), static_cast<std::size_t>(k)))
    out.push_back(static_cast<int>(i));
  std::sort(out.begin(), out.end());
  return out;
}

inline void record(json* log, const char* op, json entry) {
  if (log) (*log)[op] = std::move(entry);
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Epipolar jitter

/// Scales each selected target point's depth in the source camera frame
/// (same frame index), which keeps its source-camera projection and moves
/// it along the viewing ray. Points at or behind the source camera are left
/// alone.
inline TrackSet epipolar_jitter(const ClipPair& pair, const AugmentConfig& cfg, Rng rng, json* log = nullptr) {
  const TrackSet& in = pair.target_tracks;
  if (static_cast<int>(pair.source_camera.size()) < in.frames)
    throw Error(ErrorCode::ShapeMismatch, "source camera has fewer frames than target tracks");
  TrackSet out = in;
  const int k = detail::subset_size(rng, in.count, cfg.epipolar_fraction);
  const std::vector<int> subset = detail::sorted_subset(rng, in.count, k);
  for (int n : subset)
    for (int f = 0; f < in.frames; ++f) {
      const double s = rng.uniform(1.0 - cfg.epipolar_sigma, 1.0 + cfg.epipolar_sigma);
      if (s == 1.0) continue;
      const RigidPose& pose = pair.source_camera[f].pose;
      const Vec3 c = pose.apply(in.pos(f, n));
      if (!(c.z() > kMinCameraDepth)) continue;
      out.positions[in.index(f, n)] = pose.inverse().apply(c * s);
    }
  detail::record(log, "epipolar", {{"seed", rng.seed()}, {"sigma", cfg.epipolar_sigma}, {"tracks", subset}});
  return out;
}

// ---------------------------------------------------------------------------
// Homography perturbation

struct HomographyFrame {
  int frame = 0;
  std::array<int, 4> tracks{};
  std::array<Vec2, 4> targets{};  // jittered anchor positions, normalized
  Homography h;
};

/// Per non-anchor frame: four subset tracks' anchor-frame positions are
/// jittered by Uniform[−j, j] px, a homography is fit from anchor to
/// jittered positions in normalized screen coordinates, and applied to every
/// existing subset point at that frame. z is unchanged.
inline ProjectedTracks homography_perturb(const ProjectedTracks& pt, const AugmentConfig& cfg, Rng rng,
                                          json* log = nullptr, std::vector<HomographyFrame>* fits = nullptr) {
  const int k = detail::subset_size(rng, pt.count, cfg.homography_fraction, 4);
  if (k < 4)
    throw Error(ErrorCode::TooFewTracks, "homography perturbation needs at least 4 tracks in its subset, cap allows " +
                                             std::to_string(k));
  const std::vector<int> subset = detail::sorted_subset(rng, pt.count, k);
  const int anchor = static_cast<int>(rng.uniform_int(0, pt.frames - 1));
  ProjectedTracks out = pt;
  json frames_log = json::array();
  const double j = cfg.homography_jitter_px;
  std::vector<int> usable;
  for (int n : subset)
    if (pt.existence[pt.index(anchor, n)]) usable.push_back(n);
  if (j > 0 && usable.size() >= 4) {
    for (int f = 0; f < pt.frames; ++f) {
      if (f == anchor) continue;
      Rng fr = rng.split(static_cast<std::uint64_t>(f));
      std::optional<HomographyFrame> fit;
      for (int attempt = 0; attempt < 8 && !fit; ++attempt) {
        HomographyFrame hf;
        hf.frame = f;
        std::array<Correspondence, 4> corr;
        const auto pick = fr.choose(usable.size(), 4);
        for (int i = 0; i < 4; ++i) {
          const int n = usable[pick[i]];
          const Vec3& a = pt.at(anchor, n);
          const Vec2 src(a.x(), a.y());
          const Vec2 dst(a.x() + fr.uniform(-j, j) / pt.width, a.y() + fr.uniform(-j, j) / pt.height);
          hf.tracks[i] = n;
          hf.targets[i] = dst;
          corr[i] = {src, dst};
        }
        try {
          hf.h = fit_homography(std::span<const Correspondence, 4>(corr));
          fit = hf;
        } catch (const Error& e) {
          if (e.code() != ErrorCode::DegenerateConfiguration) throw;
        }
      }
      if (!fit) continue;
      for (int n : subset) {
        if (!pt.existence[pt.index(f, n)]) continue;
        Vec3& c = out.at(f, n);
        const Vec2 p = fit->h.apply(Vec2(c.x(), c.y()));
        c.x() = p.x();
        c.y() = p.y();
      }
      frames_log.push_back({{"frame", f}, {"tracks", fit->tracks}});
      if (fits) fits->push_back(*fit);
    }
  }
  detail::record(log, "homography",
                 {{"seed", rng.seed()}, {"jitter_px", j}, {"anchor", anchor}, {"tracks", subset}, {"frames", frames_log}});
  return out;
}

// ---------------------------------------------------------------------------
// Linear drift

/// Adds f·v pixels at frame f to one track (frame 0 unchanged).
inline void apply_drift(ProjectedTracks& pt, int n, const Vec2& v_px) {
  for (int f = 1; f < pt.frames; ++f) {
    Vec3& c = pt.at(f, n);
    c.x() += f * v_px.x() / pt.width;
    c.y() += f * v_px.y() / pt.height;
  }
}

/// Each selected track gets one velocity drawn uniformly from the disk of
/// radius drift_velocity_range px/frame.
inline ProjectedTracks linear_drift(const ProjectedTracks& pt, const AugmentConfig& cfg, Rng rng,
                                    json* log = nullptr) {
  ProjectedTracks out = pt;
  const int k = detail::subset_size(rng, pt.count, cfg.drift_fraction);
  const std::vector<int> subset = detail::sorted_subset(rng, pt.count, k);
  json vel = json::array();
  const double r = cfg.drift_velocity_range;
  if (r > 0)
    for (int n : subset) {
      const double rad = r * std::sqrt(rng.uniform());
      const double th = rng.uniform(0.0, 2 * std::numbers::pi);
      const Vec2 v(rad * std::cos(th), rad * std::sin(th));
      apply_drift(out, n, v);
      vel.push_back({v.x(), v.y()});
    }
  detail::record(log, "drift", {{"seed", rng.seed()}, {"range", r}, {"tracks", subset}, {"velocities", vel}});
  return out;
}

// ---------------------------------------------------------------------------
// Frame dropout

/// Zeroes a seeded subset of at most floor(dropout_max·F) frames.
inline VideoClip frame_dropout(const VideoClip& video, const AugmentConfig& cfg, Rng rng, json* log = nullptr,
                               std::vector<int>* dropped = nullptr) {
  VideoClip out = video;
  const int k = detail::subset_size(rng, video.frames, cfg.dropout_max);
  const std::vector<int> frames = detail::sorted_subset(rng, video.frames, k);
  for (int f : frames) {
    auto first = out.data.begin() + static_cast<std::ptrdiff_t>(f * out.frame_size());
    std::fill(first, first + static_cast<std::ptrdiff_t>(out.frame_size()), 0.0);
  }
  detail::record(log, "dropout", {{"seed", rng.seed()}, {"frames", frames}});
  if (dropped) *dropped = frames;
  return out;
}

// ---------------------------------------------------------------------------
// Clip pair sampling

/// Frame range of the two windows drawn from a long recording.
struct ClipWindows {
  int source_start = 0;
  int target_start = 0;
  int frames = 0;
  bool overlapping = false;

  int intersection() const {
    const int lo = std::max(source_start, target_start);
    const int hi = std::min(source_start, target_start) + frames;
    return std::max(0, hi - lo);
  }
  /// Frames strictly between the windows; 0 when they touch or overlap.
  int gap() const {
    return std::max(0, std::max(source_start, target_start) - (std::min(source_start, target_start) + frames));
  }
};

struct ClipPolicy {
  int frames = 16;
  double fps = 8.0;
  double gap_min_s = 1.0;
  double gap_max_s = 5.0;
};

/// Two F-frame windows: disjoint with a gap of [fps·gap_min, fps·gap_max]
/// frames, or with probability overlap_pair_fraction overlapping by
/// 1..floor(overlap_max·F) frames. Which window comes first is random.
inline ClipWindows draw_clip_windows(int total_frames, const ClipPolicy& policy, const AugmentConfig& cfg, Rng& rng) {
  const int F = policy.frames;
  const int gmin = static_cast<int>(std::ceil(policy.fps * policy.gap_min_s - 1e-9));
  const int gmax = std::min(static_cast<int>(std::floor(policy.fps * policy.gap_max_s + 1e-9)), total_frames - 2 * F);
  if (F < 1 || gmax < gmin)
    throw Error(ErrorCode::VideoTooShort, "recording of " + std::to_string(total_frames) +
                                              " frames is too short for two " + std::to_string(F) +
                                              "-frame windows " + std::to_string(gmin) + " frames apart");
  ClipWindows w;
  w.frames = F;
  const int max_overlap = static_cast<int>(std::floor(cfg.overlap_max * F + 1e-9));
  int span;  // distance between the two starts
  if (max_overlap >= 1 && rng.bernoulli(cfg.overlap_pair_fraction)) {
    w.overlapping = true;
    span = F - static_cast<int>(rng.uniform_int(1, max_overlap));
  } else {
    span = F + static_cast<int>(rng.uniform_int(gmin, gmax));
  }
  const int first = static_cast<int>(rng.uniform_int(0, total_frames - F - span));
  const bool source_first = rng.bernoulli(0.5);
  w.source_start = source_first ? first : first + span;
  w.target_start = source_first ? first + span : first;
  return w;
}

inline VideoClip slice_frames(const VideoClip& v, int begin, int n) {
  VideoClip out(n, v.height, v.width);
  std::copy_n(v.data.begin() + static_cast<std::ptrdiff_t>(begin * v.frame_size()), n * v.frame_size(),
              out.data.begin());
  return out;
}

template <typename T>
Volume<T> slice_frames(const Volume<T>& v, int begin, int n) {
  Volume<T> out(n, v.height, v.width);
  const std::size_t fs = static_cast<std::size_t>(v.height) * v.width;
  std::copy_n(v.data.begin() + static_cast<std::ptrdiff_t>(begin * fs), n * fs, out.data.begin());
  return out;
}

inline CameraPath slice_frames(const CameraPath& c, int begin, int n) {
  CameraPath out;
  out.frames.assign(c.frames.begin() + begin, c.frames.begin() + begin + n);
  return out;
}

/// A long recording: frames, world tracks and camera over T frames.
struct Recording {
  VideoClip video;
  TrackSet tracks;
  CameraPath camera;
  std::optional<DepthVideo> depth;
  std::optional<LabelVideo> masks;
};

/// Source and target clips cut from one recording; depth and masks follow
/// the source window.
inline ClipPair sample_clip_pair(const Recording& rec, const ClipPolicy& policy, const AugmentConfig& cfg, Rng rng,
                                 json* log = nullptr, ClipWindows* windows = nullptr) {
  const int T = rec.video.frames;
  if (rec.tracks.frames != T || static_cast<int>(rec.camera.size()) != T)
    throw Error(ErrorCode::ShapeMismatch, "recording video, tracks and camera differ in frame count");
  const ClipWindows w = draw_clip_windows(T, policy, cfg, rng);
  const int F = w.frames;
  ClipPair p;
  p.source_video = slice_frames(rec.video, w.source_start, F);
  p.target_video = slice_frames(rec.video, w.target_start, F);
  p.source_camera = slice_frames(rec.camera, w.source_start, F);
  p.target_camera = slice_frames(rec.camera, w.target_start, F);
  p.source_tracks = rec.tracks.slice_frames(w.source_start, F);
  p.target_tracks = rec.tracks.slice_frames(w.target_start, F);
  if (rec.depth) p.depth_maps = slice_frames(*rec.depth, w.source_start, F);
  if (rec.masks) p.masks = slice_frames(*rec.masks, w.source_start, F);
  detail::record(log, "clip_pair",
                 {{"seed", rng.seed()}, {"source_start", w.source_start}, {"target_start", w.target_start},
                  {"frames", F}, {"overlapping", w.overlapping}});
  if (windows) *windows = w;
  return p;
}

// ---------------------------------------------------------------------------
// Horizontal flip

/// Reverses frame columns and maps normalized x to 1 − x. Pixel centers at
/// (c + 0.5) / W map onto each other; for a power-of-two width those values
/// are exact, so flipping twice restores them bit for bit.
inline void horizontal_flip(VideoClip& clip, ProjectedTracks& pt) {
  for (int f = 0; f < clip.frames; ++f)
    for (int r = 0; r < clip.height; ++r)
      for (int c = 0; c < clip.width / 2; ++c)
        for (int ch = 0; ch < 3; ++ch) std::swap(clip.at(f, r, c, ch), clip.at(f, r, clip.width - 1 - c, ch));
  for (Vec3& c : pt.coords) c.x() = 1.0 - c.x();
}

// ---------------------------------------------------------------------------
// Full pipeline

struct AugmentedSample {
  VideoClip source_video;
  std::optional<VideoClip> target_video;
  TrackSet target_tracks3d;
  ProjectedTracks source_tracks;
  ProjectedTracks target_tracks;
  DisparityRange range;
  bool flipped = false;
  json record;
};

/// Applies every augmentation in a fixed order with split seeds: epipolar
/// jitter on target 3D tracks, projection, homography perturbation and
/// linear drift on projected target tracks, source frame dropout, and a
/// horizontal flip of the target clip and tracks. The homography step is
/// skipped when its cap allows fewer than 4 tracks.
inline AugmentedSample augment_pair(const ClipPair& pair, const AugmentConfig& cfg,
                                    const DisparityOptions& disparity = {}) {
  cfg.validate();
  const Rng root(cfg.seed);
  AugmentedSample s;
  s.record = json::object();
  s.record["config"] = to_json(cfg);
  ClipPair jittered = pair;
  jittered.target_tracks = epipolar_jitter(pair, cfg, root.split("epipolar"), &s.record);
  s.target_tracks3d = jittered.target_tracks;
  const ProjectedPair pp = project_pair(jittered, disparity);
  s.range = pp.range;
  s.source_tracks = pp.source;
  ProjectedTracks tgt = pp.target;
  if (std::floor(cfg.homography_fraction * tgt.count + 1e-9) >= 4)
    tgt = homography_perturb(tgt, cfg, root.split("homography"), &s.record);
  tgt = linear_drift(tgt, cfg, root.split("drift"), &s.record);
  s.source_video = frame_dropout(pair.source_video, cfg, root.split("dropout"), &s.record);
  s.target_video = pair.target_video;
  Rng flip = root.split("flip");
  s.flipped = flip.bernoulli(cfg.flip_prob);
  if (s.flipped) {
    VideoClip dummy;
    horizontal_flip(s.target_video ? *s.target_video : dummy, tgt);
  }
  s.record["flip"] = {{"seed", flip.seed()}, {"flipped", s.flipped}};
  s.target_tracks = std::move(tgt);
  return s;
}

}  // namespace trackedit
