#pragma once

// Preview rendering: unproject each source frame with its depth map, apply
// the edit to the labeled point cloud, and splat it through the edited
// target camera with a z-buffer.

#include <algorithm>
#include <limits>
#include <optional>
#include <vector>

#include "trackedit/edit.hpp"

namespace trackedit {

struct ColoredPointCloud {
  std::vector<Vec3> points;  // world, meters
  std::vector<Vec3> colors;  // [0, 1]
  std::vector<int> labels;   // object ids, 0 = background

  std::size_t size() const { return points.size(); }
  void push(const Vec3& p, const Vec3& c, int label) {
    points.push_back(p);
    colors.push_back(c);
    labels.push_back(label);
  }
};

/// One point per pixel with positive finite depth, placed at the pixel
/// center. Labels come from `masks` when given.
inline ColoredPointCloud unproject_frame(const VideoClip& video, const DepthVideo& depth, const CameraFrame& cam, int f,
                                         const LabelVideo* masks = nullptr) {
  if (depth.height != video.height || depth.width != video.width)
    throw Error(ErrorCode::ShapeMismatch, "depth map size differs from frame size");
  ColoredPointCloud cloud;
  for (int r = 0; r < video.height; ++r)
    for (int c = 0; c < video.width; ++c) {
      const double z = depth.at(f, r, c);
      if (!(z > 0) || !std::isfinite(z)) continue;
      cloud.push(unproject(c + 0.5, r + 0.5, z, cam.intrinsics, cam.pose),
                 Vec3(video.at(f, r, c, 0), video.at(f, r, c, 1), video.at(f, r, c, 2)), masks ? masks->at(f, r, c) : 0);
    }
  return cloud;
}

// ---------------------------------------------------------------------------
// Splatting

struct SplatFrame {
  VideoClip image;         // 1 frame
  CoverageVideo coverage;  // 1 frame, 1 where a point landed
  DepthVideo depth;        // 1 frame, nearest camera depth, 0 where uncovered
};

/// Single-pixel z-buffer splat into frame `f` of the outputs. The nearest
/// camera depth wins; equal depths keep the lower point index.
inline void splat_into(const ColoredPointCloud& cloud, const CameraFrame& cam, int f, VideoClip& image,
                       CoverageVideo& coverage, DepthVideo& depth) {
  const CameraIntrinsics& k = cam.intrinsics;
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    const Vec3 c = cam.pose.apply(cloud.points[i]);
    if (!(c.z() > kMinCameraDepth)) continue;
    const double x = k.fx * (c.x() / c.z()) + k.cx, y = k.fy * (c.y() / c.z()) + k.cy;
    if (!(x >= 0 && x < k.width && y >= 0 && y < k.height)) continue;
    const int col = static_cast<int>(x), row = static_cast<int>(y);
    std::uint8_t& cov = coverage.at(f, row, col);
    double& zb = depth.at(f, row, col);
    if (cov && !(c.z() < zb)) continue;
    cov = 1;
    zb = c.z();
    for (int ch = 0; ch < 3; ++ch) image.at(f, row, col, ch) = cloud.colors[i][ch];
  }
}

/// Uncovered pixels are black with coverage 0.
inline SplatFrame splat_points(const ColoredPointCloud& cloud, const CameraFrame& cam) {
  const int h = cam.intrinsics.height, w = cam.intrinsics.width;
  SplatFrame s{VideoClip(1, h, w), CoverageVideo(1, h, w, 0), DepthVideo(1, h, w, 0.0)};
  splat_into(cloud, cam, 0, s.image, s.coverage, s.depth);
  return s;
}

// ---------------------------------------------------------------------------
// Cloud edits

/// One edit op resolved against the track state it runs on, so the cloud
/// sees the same pivots, selections and transforms as the tracks.
struct CloudOp {
  EditKind kind = EditKind::Rigid;
  std::vector<int> labels;  // object ids the op moves (never 0)
  std::vector<Keyframe> keys;
  Vec3 pivot = Vec3::Zero();
  // LBS
  std::vector<std::vector<Vec3>> handle_points;
  std::vector<std::vector<Keyframe>> handle_keys;
  std::vector<Vec3> handle_pivots;
  double radius = 0;
  // Duplicate
  int new_label = 0;
  // Transfer: object tracks before and after
  TrackSet before, after;

  bool moves(int label) const { return std::find(labels.begin(), labels.end(), label) != labels.end(); }
};

struct CloudEditPlan {
  std::vector<CloudOp> ops;
  ClipPair edited;  // track state and cameras after every op
};

namespace detail {

inline std::vector<int> object_labels(const TrackSet& ts, std::span<const int> idx) {
  std::vector<int> out;
  for (int i : idx)
    if (ts.object_id[i] != 0) out.push_back(ts.object_id[i]);
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

inline int clamp_frame(int f, const TrackSet& ts) { return std::clamp(f, 0, ts.frames - 1); }

}  // namespace detail

/// Resolves every op against the running pair, then advances the pair.
inline CloudEditPlan plan_cloud_edit(const ClipPair& pair, const EditSpec& spec) {
  validate_editspec(spec, pair.frames(), pair.width(), pair.height());
  CloudEditPlan plan;
  plan.edited = pair;
  ClipPair& st = plan.edited;
  for (const EditOp& op : spec.ops) {
    CloudOp c;
    c.kind = op.kind;
    switch (op.kind) {
      case EditKind::Rigid:
      case EditKind::Duplicate: {
        const auto idx = op.kind == EditKind::Rigid ? resolve_selection(st, *op.selection)
                                                    : st.target_tracks.indices_of(op.selection->object_id);
        if (idx.empty()) throw Error(ErrorCode::UnknownObject, "no tracks with object id " + std::to_string(op.selection->object_id));
        c.labels = detail::object_labels(st.target_tracks, idx);
        if (op.kind == EditKind::Duplicate) c.labels = {op.selection->object_id};
        c.keys = to_keyframes(op.keyframes);
        c.pivot = op.pivot ? *op.pivot : centroid(st.target_tracks, idx, detail::clamp_frame(c.keys.front().frame, st.target_tracks));
        c.new_label = std::max(st.source_tracks.max_object_id(), st.target_tracks.max_object_id()) + 1;
        break;
      }
      case EditKind::Lbs: {
        const auto region = resolve_selection(st, *op.selection);
        const auto handles = resolve_handles(st, op);
        c.labels = detail::object_labels(st.target_tracks, region);
        const int anchor = detail::clamp_frame(detail::lbs_anchor_frame(handles), st.target_tracks);
        c.radius = op.radius ? *op.radius : 2.0 * bounding_radius(st.target_tracks, region, anchor);
        for (const auto& h : handles) {
          std::vector<Vec3> pts;
          for (int i : h.indices) pts.push_back(st.target_tracks.pos(anchor, i));
          c.handle_points.push_back(std::move(pts));
          c.handle_keys.push_back(h.keys);
          c.handle_pivots.push_back(centroid(st.target_tracks, h.indices, detail::clamp_frame(h.keys.front().frame, st.target_tracks)));
        }
        break;
      }
      case EditKind::Remove:
        c.labels = {op.selection->object_id};
        break;
      case EditKind::Transfer: {
        const auto idx = st.target_tracks.indices_of(op.selection->object_id);
        c.labels = {op.selection->object_id};
        c.before = st.target_tracks.subset(idx);
        c.after = transfer_tracks(st.target_tracks, op.selection->object_id, *op.replacement).subset(idx);
        break;
      }
      case EditKind::Camera:
      case EditKind::Drop:
      case EditKind::FreezeBackground:
        break;
    }
    apply_op(st, op);
    plan.ops.push_back(std::move(c));
  }
  return plan;
}

/// Applies a planned edit to the cloud of frame `f`. Background points
/// (label 0) are never moved by object edits. Removal deletes the object's
/// points; duplication appends a transformed copy under the fresh id;
/// transfer moves each object point by the displacement of its nearest
/// object track; drop and background freezing leave the cloud unchanged.
inline ColoredPointCloud apply_cloud_edit(const ColoredPointCloud& cloud, const CloudEditPlan& plan, int f) {
  ColoredPointCloud out = cloud;
  for (const CloudOp& op : plan.ops) {
    switch (op.kind) {
      case EditKind::Rigid: {
        const SimilarityTransform T = sample_keyframes(op.keys, f);
        if (T.is_identity()) break;
        for (std::size_t i = 0; i < out.size(); ++i)
          if (op.moves(out.labels[i])) out.points[i] = T.apply_about(out.points[i], op.pivot);
        break;
      }
      case EditKind::Lbs: {
        std::vector<SimilarityTransform> T;
        for (const auto& k : op.handle_keys) T.push_back(sample_keyframes(k, f));
        for (std::size_t i = 0; i < out.size(); ++i) {
          if (!op.moves(out.labels[i])) continue;
          const Vec3 p = out.points[i];
          const auto w = detail::lbs_weights(p, op.handle_points, op.radius);
          Vec3 disp = Vec3::Zero();
          for (std::size_t h = 0; h < T.size(); ++h)
            if (w[h] != 0.0 && !T[h].is_identity()) disp += w[h] * (T[h].apply_about(p, op.handle_pivots[h]) - p);
          out.points[i] = p + disp;
        }
        break;
      }
      case EditKind::Remove: {
        ColoredPointCloud kept;
        for (std::size_t i = 0; i < out.size(); ++i)
          if (!op.moves(out.labels[i])) kept.push(out.points[i], out.colors[i], out.labels[i]);
        out = std::move(kept);
        break;
      }
      case EditKind::Duplicate: {
        const SimilarityTransform T = sample_keyframes(op.keys, f);
        const std::size_t n = out.size();
        for (std::size_t i = 0; i < n; ++i)
          if (op.moves(out.labels[i])) out.push(T.apply_about(out.points[i], op.pivot), out.colors[i], op.new_label);
        break;
      }
      case EditKind::Transfer: {
        const int tf = detail::clamp_frame(f, op.before);
        for (std::size_t i = 0; i < out.size(); ++i) {
          if (!op.moves(out.labels[i])) continue;
          int best = 0;
          double bd = std::numeric_limits<double>::infinity();
          for (int n = 0; n < op.before.count; ++n) {
            const double d = (op.before.pos(tf, n) - out.points[i]).squaredNorm();
            if (d < bd) {
              bd = d;
              best = n;
            }
          }
          out.points[i] += op.after.pos(tf, best) - op.before.pos(tf, best);
        }
        break;
      }
      case EditKind::Camera:
      case EditKind::Drop:
      case EditKind::FreezeBackground:
        break;
    }
  }
  return out;
}

inline ColoredPointCloud apply_cloud_edit(const ColoredPointCloud& cloud, const ClipPair& pair, const EditSpec& spec, int f) {
  return apply_cloud_edit(cloud, plan_cloud_edit(pair, spec), f);
}

// ---------------------------------------------------------------------------
// Preview

struct PreviewResult {
  VideoClip video;
  CoverageVideo coverage;
  DepthVideo depth;
  ClipPair edited;
};

/// Per frame: unproject the source frame with the source camera, apply the
/// edit, and splat through the edited target camera at the same frame.
inline PreviewResult render_preview(const ClipPair& pair, const EditSpec& spec) {
  if (!pair.depth_maps) throw Error(ErrorCode::MissingDepth, "preview needs depth maps");
  const DepthVideo& depth = *pair.depth_maps;
  if (depth.frames != pair.frames()) throw Error(ErrorCode::ShapeMismatch, "depth frame count differs from video");
  CloudEditPlan plan = plan_cloud_edit(pair, spec);
  const CameraPath& cam = plan.edited.target_camera;
  const int F = pair.frames(), H = cam.height(), W = cam.width();
  PreviewResult r{VideoClip(F, H, W), CoverageVideo(F, H, W, 0), DepthVideo(F, H, W, 0.0), {}};
  const LabelVideo* masks = pair.masks ? &*pair.masks : nullptr;
  for (int f = 0; f < F; ++f) {
    const ColoredPointCloud cloud = unproject_frame(pair.source_video, depth, pair.source_camera[f], f, masks);
    splat_into(apply_cloud_edit(cloud, plan, f), cam[f], f, r.video, r.coverage, r.depth);
  }
  r.edited = std::move(plan.edited);
  return r;
}

inline double coverage_fraction(const CoverageVideo& c) {
  if (c.data.empty()) return 0.0;
  std::size_t n = 0;
  for (auto v : c.data) n += v != 0;
  return static_cast<double>(n) / static_cast<double>(c.data.size());
}

}  // namespace trackedit
