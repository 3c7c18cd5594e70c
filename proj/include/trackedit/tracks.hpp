#pragma once

// Track data model: world-space track sets, their screen projections, and
// the clip pair that ties videos, cameras and tracks together.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <numeric>
#include <optional>
#include <span>
#include <vector>

#include "trackedit/error.hpp"
#include "trackedit/geometry.hpp"
#include "trackedit/image.hpp"
#include "trackedit/rng.hpp"

namespace trackedit {

/// F×N world-space trajectories. Visibility is carried for round-tripping
/// estimator output; nothing downstream of projection reads it.
struct TrackSet {
  int frames = 0;
  int count = 0;
  std::vector<Vec3> positions;            // F×N
  std::vector<int> object_id;             // N, 0 = background
  std::vector<std::uint8_t> existence;    // F×N
  std::vector<std::uint8_t> visibility;   // F×N

  TrackSet() = default;
  TrackSet(int f, int n)
      : frames(f),
        count(n),
        positions(static_cast<std::size_t>(f) * n, Vec3::Zero()),
        object_id(static_cast<std::size_t>(n), 0),
        existence(static_cast<std::size_t>(f) * n, 1),
        visibility(static_cast<std::size_t>(f) * n, 1) {}

  std::size_t index(int f, int n) const { return static_cast<std::size_t>(f) * count + n; }
  Vec3& pos(int f, int n) { return positions[index(f, n)]; }
  const Vec3& pos(int f, int n) const { return positions[index(f, n)]; }

  void validate() const {
    const std::size_t fn = static_cast<std::size_t>(frames) * count;
    if (frames < 1 || count < 1)
      throw Error(ErrorCode::ShapeMismatch, "track set needs F >= 1 and N >= 1");
    if (positions.size() != fn || existence.size() != fn || visibility.size() != fn ||
        object_id.size() != static_cast<std::size_t>(count))
      throw Error(ErrorCode::ShapeMismatch, "track arrays inconsistent with F, N");
    for (const auto& p : positions)
      if (!p.allFinite()) throw Error(ErrorCode::SchemaViolation, "non-finite track position");
  }

  std::vector<int> indices_of(int id) const {
    std::vector<int> out;
    for (int n = 0; n < count; ++n)
      if (object_id[n] == id) out.push_back(n);
    return out;
  }

  /// Tracks in the given order; frames unchanged.
  TrackSet subset(std::span<const int> idx) const {
    TrackSet out(frames, static_cast<int>(idx.size()));
    for (std::size_t j = 0; j < idx.size(); ++j) {
      out.object_id[j] = object_id[idx[j]];
      for (int f = 0; f < frames; ++f) {
        out.positions[out.index(f, static_cast<int>(j))] = pos(f, idx[j]);
        out.existence[out.index(f, static_cast<int>(j))] = existence[index(f, idx[j])];
        out.visibility[out.index(f, static_cast<int>(j))] = visibility[index(f, idx[j])];
      }
    }
    return out;
  }

  /// Frames [begin, begin + n).
  TrackSet slice_frames(int begin, int n) const {
    TrackSet out(n, count);
    out.object_id = object_id;
    for (int f = 0; f < n; ++f)
      for (int i = 0; i < count; ++i) {
        out.pos(f, i) = pos(begin + f, i);
        out.existence[out.index(f, i)] = existence[index(begin + f, i)];
        out.visibility[out.index(f, i)] = visibility[index(begin + f, i)];
      }
    return out;
  }

  /// Appends the tracks of `other` (same F) after this set's tracks.
  void append(const TrackSet& other) {
    if (other.frames != frames) throw Error(ErrorCode::ShapeMismatch, "append with different F");
    TrackSet out(frames, count + other.count);
    for (int i = 0; i < count; ++i) out.object_id[i] = object_id[i];
    for (int i = 0; i < other.count; ++i) out.object_id[count + i] = other.object_id[i];
    for (int f = 0; f < frames; ++f) {
      for (int i = 0; i < count; ++i) {
        out.pos(f, i) = pos(f, i);
        out.existence[out.index(f, i)] = existence[index(f, i)];
        out.visibility[out.index(f, i)] = visibility[index(f, i)];
      }
      for (int i = 0; i < other.count; ++i) {
        out.pos(f, count + i) = other.pos(f, i);
        out.existence[out.index(f, count + i)] = other.existence[other.index(f, i)];
        out.visibility[out.index(f, count + i)] = other.visibility[other.index(f, i)];
      }
    }
    *this = std::move(out);
  }

  int max_object_id() const {
    return object_id.empty() ? 0 : *std::max_element(object_id.begin(), object_id.end());
  }

  bool operator==(const TrackSet&) const = default;
};

/// Screen-space tracks: (x / width, y / height, normalized disparity) plus
/// existence. Deliberately has no visibility field.
struct ProjectedTracks {
  int frames = 0;
  int count = 0;
  int width = 1;
  int height = 1;
  std::vector<Vec3> coords;              // frames×N
  std::vector<std::uint8_t> existence;   // frames×N

  ProjectedTracks() = default;
  ProjectedTracks(int f, int n, int w, int h)
      : frames(f),
        count(n),
        width(w),
        height(h),
        coords(static_cast<std::size_t>(f) * n, Vec3::Zero()),
        existence(static_cast<std::size_t>(f) * n, 1) {}

  std::size_t index(int f, int n) const { return static_cast<std::size_t>(f) * count + n; }
  Vec3& at(int f, int n) { return coords[index(f, n)]; }
  const Vec3& at(int f, int n) const { return coords[index(f, n)]; }
  Vec2 pixel(int f, int n) const {
    const Vec3& c = at(f, n);
    return {c.x() * width, c.y() * height};
  }

  bool operator==(const ProjectedTracks&) const = default;
};

struct ClipPair {
  VideoClip source_video;
  std::optional<VideoClip> target_video;
  CameraPath source_camera;
  CameraPath target_camera;
  TrackSet source_tracks;
  TrackSet target_tracks;
  std::optional<DepthVideo> depth_maps;
  std::optional<LabelVideo> masks;

  int frames() const { return source_video.frames; }
  int width() const { return source_video.width; }
  int height() const { return source_video.height; }

  void validate() const {
    const int f = frames();
    const auto require = [](bool ok, const char* what, const char* file) {
      if (!ok) throw Error(ErrorCode::ShapeMismatch, what, file);
    };
    require(f >= 1, "video has no frames", "frames/");
    source_camera.validate();
    target_camera.validate();
    source_tracks.validate();
    target_tracks.validate();
    require(static_cast<int>(source_camera.size()) == f, "camera frame count differs from video",
            "camera.json");
    require(static_cast<int>(target_camera.size()) == f, "target camera frame count differs",
            "target/camera.json");
    require(source_camera.width() == width() && source_camera.height() == height(),
            "camera size differs from frames", "camera.json");
    require(target_camera.width() == width() && target_camera.height() == height(),
            "target camera size differs from frames", "target/camera.json");
    require(source_tracks.frames == f, "track F differs from video F", "tracks.json");
    require(target_tracks.frames == f, "target track F differs from video F", "target/tracks.json");
    require(source_tracks.count == target_tracks.count, "source/target track counts differ",
            "target/tracks.json");
    if (target_video) require(target_video->same_shape(source_video), "target video shape", "target/frames/");
    if (depth_maps)
      require(depth_maps->frames == f && depth_maps->width == width() && depth_maps->height == height(),
              "depth shape differs from video", "depth/");
    if (masks)
      require(masks->frames == f && masks->width == width() && masks->height == height(),
              "mask shape differs from video", "masks/");
  }
};

// ---------------------------------------------------------------------------
// Projection

/// Camera-space depths of every in-front track sample.
inline void append_depths(const TrackSet& ts, const CameraPath& cam, std::vector<double>& pool) {
  for (int f = 0; f < ts.frames; ++f)
    for (int n = 0; n < ts.count; ++n) {
      const double z = cam[f].pose.apply(ts.pos(f, n)).z();
      if (z > kMinCameraDepth) pool.push_back(z);
    }
}

/// Joint disparity range over source and target tracks of a pair.
inline DisparityRange pair_disparity_range(const TrackSet& src, const CameraPath& src_cam,
                                           const TrackSet& tgt, const CameraPath& tgt_cam,
                                           const DisparityOptions& opt = {}) {
  std::vector<double> pool;
  append_depths(src, src_cam, pool);
  append_depths(tgt, tgt_cam, pool);
  return disparity_range(pool, opt);
}

inline ProjectedTracks project_tracks(const TrackSet& ts, const CameraPath& cam,
                                      const DisparityRange& range) {
  if (static_cast<int>(cam.size()) != ts.frames)
    throw Error(ErrorCode::ShapeMismatch, "track F differs from camera F");
  ProjectedTracks out(ts.frames, ts.count, cam.width(), cam.height());
  for (int n = 0; n < ts.count; ++n) {
    std::optional<Vec3> last;
    std::vector<int> pending;  // behind-camera frames before the first valid one
    for (int f = 0; f < ts.frames; ++f) {
      const CameraFrame& c = cam[f];
      const double zc = c.pose.apply(ts.pos(f, n)).z();
      if (zc > kMinCameraDepth) {
        const ScreenPoint sp = project(ts.pos(f, n), c);
        const Vec3 v(sp.x / c.intrinsics.width, sp.y / c.intrinsics.height, range.normalize(sp.depth));
        out.at(f, n) = v;
        out.existence[out.index(f, n)] = ts.existence[ts.index(f, n)];
        if (!last)
          for (int p : pending) out.at(p, n) = v;
        last = v;
      } else {
        out.existence[out.index(f, n)] = 0;
        if (last)
          out.at(f, n) = *last;
        else
          pending.push_back(f);
      }
    }
    if (!last)
      for (int p : pending) out.at(p, n) = Vec3(2.0, 0.5, 0.0);
  }
  return out;
}

struct ProjectedPair {
  ProjectedTracks source;
  ProjectedTracks target;
  DisparityRange range;
};

inline ProjectedPair project_pair(const TrackSet& src, const CameraPath& src_cam, const TrackSet& tgt,
                                  const CameraPath& tgt_cam, const DisparityOptions& opt = {}) {
  const DisparityRange range = pair_disparity_range(src, src_cam, tgt, tgt_cam, opt);
  return {project_tracks(src, src_cam, range), project_tracks(tgt, tgt_cam, range), range};
}

inline ProjectedPair project_pair(const ClipPair& pair, const DisparityOptions& opt = {}) {
  return project_pair(pair.source_tracks, pair.source_camera, pair.target_tracks, pair.target_camera, opt);
}

// ---------------------------------------------------------------------------
// Temporal downsampling

enum class DownsampleRule { Nearest, Floor };

/// Source frame for each of `f` token frames out of `F` frames.
inline std::vector<int> downsample_indices(int F, int f, DownsampleRule rule = DownsampleRule::Nearest) {
  if (f < 1 || f > F) throw Error(ErrorCode::InvalidArgument, "token frames must be in [1, F]");
  std::vector<int> idx(static_cast<std::size_t>(f), 0);
  if (f == 1) return idx;
  for (int k = 0; k < f; ++k) {
    const double s = static_cast<double>(k) * (F - 1) / (f - 1);
    idx[k] = static_cast<int>(rule == DownsampleRule::Nearest ? std::lround(s) : std::floor(s));
  }
  return idx;
}

inline ProjectedTracks temporal_downsample(const ProjectedTracks& pt, int f,
                                           DownsampleRule rule = DownsampleRule::Nearest) {
  const auto idx = downsample_indices(pt.frames, f, rule);
  ProjectedTracks out(f, pt.count, pt.width, pt.height);
  for (int k = 0; k < f; ++k)
    for (int n = 0; n < pt.count; ++n) {
      out.at(k, n) = pt.at(idx[k], n);
      out.existence[out.index(k, n)] = pt.existence[pt.index(idx[k], n)];
    }
  return out;
}

// ---------------------------------------------------------------------------
// Sampling and labeling

inline constexpr double kDefaultForegroundFraction = 0.7;

/// Sorted indices of a foreground-biased subset. n == N returns 0..N-1.
inline std::vector<int> sample_track_indices(const TrackSet& ts, int n, double foreground_fraction, Rng rng) {
  if (n < 1 || n > ts.count) throw Error(ErrorCode::InvalidArgument, "sample size must be in [1, N]");
  std::vector<int> all(static_cast<std::size_t>(ts.count));
  std::iota(all.begin(), all.end(), 0);
  if (n == ts.count) return all;
  std::vector<int> fg, bg;
  for (int i = 0; i < ts.count; ++i) (ts.object_id[i] > 0 ? fg : bg).push_back(i);
  int n_fg = static_cast<int>(std::ceil(std::clamp(foreground_fraction, 0.0, 1.0) * n));
  n_fg = std::min(n_fg, static_cast<int>(fg.size()));
  int n_bg = std::min(n - n_fg, static_cast<int>(bg.size()));
  n_fg = n - n_bg;  // top up from foreground when the background pool is short
  std::vector<int> out;
  for (std::size_t j : rng.choose(fg.size(), static_cast<std::size_t>(n_fg))) out.push_back(fg[j]);
  for (std::size_t j : rng.choose(bg.size(), static_cast<std::size_t>(n_bg))) out.push_back(bg[j]);
  std::sort(out.begin(), out.end());
  return out;
}

inline TrackSet sample_tracks(const TrackSet& ts, int n, double foreground_fraction, Rng rng) {
  const auto idx = sample_track_indices(ts, n, foreground_fraction, std::move(rng));
  return ts.subset(idx);
}

inline bool in_frame(const ScreenPoint& sp, const CameraIntrinsics& k) {
  return sp.x >= 0 && sp.y >= 0 && sp.x < k.width && sp.y < k.height;
}

/// Majority mask label over in-frame frames; ties go to the smaller label.
inline TrackSet label_tracks_by_mask(const TrackSet& ts, const LabelVideo& masks, const CameraPath& cam) {
  TrackSet out = ts;
  for (int n = 0; n < ts.count; ++n) {
    std::map<int, int> votes;
    for (int f = 0; f < ts.frames; ++f) {
      const CameraFrame& c = cam[f];
      if (!(c.pose.apply(ts.pos(f, n)).z() > kMinCameraDepth)) continue;
      const ScreenPoint sp = project(ts.pos(f, n), c);
      if (!in_frame(sp, c.intrinsics)) continue;
      ++votes[masks.at(f, static_cast<int>(sp.y), static_cast<int>(sp.x))];
    }
    int best = 0, best_count = 0;
    for (const auto& [label, cnt] : votes)
      if (cnt > best_count) {
        best = label;
        best_count = cnt;
      }
    out.object_id[n] = best;
  }
  return out;
}

}  // namespace trackedit
