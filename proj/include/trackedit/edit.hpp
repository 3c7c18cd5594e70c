#pragma once

// Edit engine: track selection and the track/camera edits an EditSpec
// composes. Every op is a pure function of its inputs; unselected tracks
// are copied untouched.

#include <algorithm>
#include <limits>
#include <set>
#include <utility>
#include <vector>

#include "trackedit/editspec.hpp"

namespace trackedit {

// ---------------------------------------------------------------------------
// Selection

/// Sorted indices matched by `sel`. Boxes are tested on projections at the
/// keyframe (x0 <= x < x1, y0 <= y < y1, in front of the camera).
inline std::vector<int> select_tracks(const TrackSet& ts, const CameraPath& cam, const Selection& sel) {
  std::vector<int> out;
  switch (sel.kind) {
    case Selection::Kind::Object:
      out = ts.indices_of(sel.object_id);
      break;
    case Selection::Kind::Box: {
      const auto& [x0, y0, x1, y1] = sel.box;
      if (!(x1 > x0 && y1 > y0)) throw Error(ErrorCode::EmptySelection, "box has zero area");
      if (sel.keyframe < 0 || sel.keyframe >= ts.frames || sel.keyframe >= static_cast<int>(cam.size()))
        throw Error(ErrorCode::InvalidArgument, "box keyframe outside clip");
      const CameraFrame& c = cam[sel.keyframe];
      for (int n = 0; n < ts.count; ++n) {
        const Vec3& p = ts.pos(sel.keyframe, n);
        if (!(c.pose.apply(p).z() > kMinCameraDepth)) continue;
        const ScreenPoint sp = project(p, c);
        if (sp.x >= x0 && sp.x < x1 && sp.y >= y0 && sp.y < y1) out.push_back(n);
      }
      break;
    }
    case Selection::Kind::Indices: {
      for (int i : sel.indices)
        if (i < 0 || i >= ts.count)
          throw Error(ErrorCode::InvalidArgument, "track index " + std::to_string(i) + " outside [0, " + std::to_string(ts.count) + ")");
      std::set<int> uniq(sel.indices.begin(), sel.indices.end());
      out.assign(uniq.begin(), uniq.end());
      break;
    }
  }
  if (out.empty()) throw Error(ErrorCode::EmptySelection, "selection matched no tracks");
  return out;
}

inline Vec3 centroid(const TrackSet& ts, std::span<const int> idx, int frame) {
  Vec3 c = Vec3::Zero();
  for (int i : idx) c += ts.pos(frame, i);
  return c / static_cast<double>(idx.size());
}

// ---------------------------------------------------------------------------
// Rigid and skinned object edits

/// Pivot defaults to the selection centroid at the first keyframe.
inline TrackSet apply_rigid_edit(const TrackSet& ts, std::span<const int> idx, std::span<const Keyframe> keys,
                                 const std::optional<Vec3>& pivot = std::nullopt) {
  if (keys.empty()) throw Error(ErrorCode::InvalidArgument, "rigid edit needs at least one keyframe");
  TrackSet out = ts;
  if (idx.empty()) return out;
  const Vec3 c = pivot ? *pivot : centroid(ts, idx, std::clamp(keys.front().frame, 0, ts.frames - 1));
  for (int f = 0; f < ts.frames; ++f) {
    const SimilarityTransform T = sample_keyframes(keys, f);
    if (T.is_identity()) continue;
    for (int i : idx) out.pos(f, i) = T.apply_about(ts.pos(f, i), c);
  }
  return out;
}

struct LbsHandle {
  std::vector<int> indices;
  std::vector<Keyframe> keys;
};

inline constexpr double kLbsEpsilon = 1e-6;

namespace detail {

inline int lbs_anchor_frame(std::span<const LbsHandle> handles) {
  int anchor = std::numeric_limits<int>::max();
  for (const auto& h : handles) anchor = std::min(anchor, h.keys.front().frame);
  return anchor;
}

/// Normalized inverse-distance weights of `p` to each handle (distance to
/// the nearest handle point at the anchor frame); all zero when no handle
/// lies within the radius.
inline std::vector<double> lbs_weights(const Vec3& p, const std::vector<std::vector<Vec3>>& handle_points, double radius) {
  std::vector<double> w(handle_points.size(), 0.0);
  double sum = 0;
  for (std::size_t h = 0; h < handle_points.size(); ++h) {
    double d = std::numeric_limits<double>::infinity();
    for (const Vec3& q : handle_points[h]) d = std::min(d, (p - q).norm());
    if (d > radius) continue;
    w[h] = 1.0 / (d + kLbsEpsilon);
    sum += w[h];
  }
  if (sum > 0)
    for (double& x : w) x /= sum;
  return w;
}

}  // namespace detail

/// Radius of the centroid-centered sphere enclosing `idx` at `frame`.
inline double bounding_radius(const TrackSet& ts, std::span<const int> idx, int frame) {
  const Vec3 c = centroid(ts, idx, frame);
  double r = 0;
  for (int i : idx) r = std::max(r, (ts.pos(frame, i) - c).norm());
  return r;
}

/// Blends handle transforms over `region` (all tracks when empty). Handle
/// tracks take their own transform exactly; other region tracks move by
/// the weighted sum of handle displacements. Weights are fixed at the
/// anchor frame (earliest handle keyframe). Default radius is twice the
/// region's bounding radius at the anchor frame.
inline TrackSet apply_lbs_deform(const TrackSet& ts, std::span<const LbsHandle> handles,
                                 std::optional<double> radius = std::nullopt, std::span<const int> region = {}) {
  if (handles.empty()) throw Error(ErrorCode::InvalidArgument, "LBS needs at least one handle");
  std::vector<int> owner(static_cast<std::size_t>(ts.count), -1);
  for (std::size_t h = 0; h < handles.size(); ++h) {
    if (handles[h].keys.empty()) throw Error(ErrorCode::InvalidArgument, "LBS handle needs at least one keyframe");
    if (handles[h].indices.empty()) throw Error(ErrorCode::EmptySelection, "LBS handle selects no tracks");
    for (int i : handles[h].indices) {
      if (i < 0 || i >= ts.count) throw Error(ErrorCode::InvalidArgument, "LBS handle index out of range");
      if (owner[i] >= 0 && owner[i] != static_cast<int>(h)) throw Error(ErrorCode::InvalidArgument, "LBS handle sets overlap");
      owner[i] = static_cast<int>(h);
    }
  }
  std::vector<int> all;
  if (region.empty()) {
    all.resize(static_cast<std::size_t>(ts.count));
    std::iota(all.begin(), all.end(), 0);
    region = all;
  }
  const int anchor = std::clamp(detail::lbs_anchor_frame(handles), 0, ts.frames - 1);
  const double r = radius ? *radius : 2.0 * bounding_radius(ts, region, anchor);

  std::vector<std::vector<Vec3>> anchor_points(handles.size());
  std::vector<Vec3> pivots(handles.size());
  for (std::size_t h = 0; h < handles.size(); ++h) {
    for (int i : handles[h].indices) anchor_points[h].push_back(ts.pos(anchor, i));
    pivots[h] = centroid(ts, handles[h].indices, std::clamp(handles[h].keys.front().frame, 0, ts.frames - 1));
  }

  TrackSet out = ts;
  std::vector<SimilarityTransform> T(handles.size());
  std::vector<std::vector<double>> weights(region.size());
  for (std::size_t j = 0; j < region.size(); ++j)
    if (owner[region[j]] < 0) weights[j] = detail::lbs_weights(ts.pos(anchor, region[j]), anchor_points, r);
  for (int f = 0; f < ts.frames; ++f) {
    for (std::size_t h = 0; h < handles.size(); ++h) T[h] = sample_keyframes(handles[h].keys, f);
    for (std::size_t j = 0; j < region.size(); ++j) {
      const int i = region[j];
      const Vec3& p = ts.pos(f, i);
      if (owner[i] >= 0) {
        out.pos(f, i) = T[owner[i]].apply_about(p, pivots[owner[i]]);
        continue;
      }
      Vec3 disp = Vec3::Zero();
      bool any = false;
      for (std::size_t h = 0; h < handles.size(); ++h) {
        if (weights[j][h] == 0.0 || T[h].is_identity()) continue;
        disp += weights[j][h] * (T[h].apply_about(p, pivots[h]) - p);
        any = true;
      }
      if (any) out.pos(f, i) = p + disp;
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Camera edits

struct CameraEdit {
  CameraMode mode = CameraMode::Relative;
  std::vector<Keyframe> keys;  // scale must be 1
  std::optional<IntrinsicsOverride> intrinsics;
};

/// Camera-to-world pose of a keyframed transform.
inline RigidPose pose_from_transform(const SimilarityTransform& T) {
  RigidPose p;
  p.rotation = T.rotation;
  p.translation = T.translation;
  return p;
}

/// Relative: the interpolated offset is applied to each camera in world
/// space (camera-to-world ← offset ∘ camera-to-world), so a pure
/// translation moves every center by that vector. Absolute: keyframes are
/// camera-to-world poses that replace the path.
inline CameraPath edit_camera_path(const CameraPath& cam, const CameraEdit& e) {
  for (const auto& k : e.keys)
    if (k.transform.scale != 1.0) throw Error(ErrorCode::InvalidArgument, "camera keyframes must have scale 1");
  CameraPath out = cam;
  for (std::size_t f = 0; f < cam.size(); ++f) {
    if (!e.keys.empty()) {
      const SimilarityTransform T = sample_keyframes(e.keys, static_cast<int>(f));
      if (e.mode == CameraMode::Absolute) {
        RigidPose w2c = pose_from_transform(T).inverse();
        w2c.orthonormalize();
        out[f].pose = w2c;
      } else if (!T.is_identity()) {
        out[f].pose = pose_from_transform(T).compose(cam[f].pose.inverse()).inverse();
      }
    }
    if (e.intrinsics) {
      auto& k = out[f].intrinsics;
      k.fx = e.intrinsics->fx;
      k.fy = e.intrinsics->fy;
      k.cx = e.intrinsics->cx;
      k.cy = e.intrinsics->cy;
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Removal, duplication, transfer, partial tracks

/// Horizontal pixel the removal rule pushes tracks past: 2·width plus one
/// pixel of margin so rounding never lands exactly on the boundary.
inline double removal_pixel(const CameraIntrinsics& k) { return 2.0 * k.width + 1.0; }

/// Point moved along the camera-right axis at unchanged camera depth so it
/// projects at or beyond the removal pixel. Points already there, or
/// behind the camera, are returned as is.
inline Vec3 push_off_screen(const Vec3& p, const CameraFrame& c) {
  const Vec3 pc = c.pose.apply(p);
  if (!(pc.z() > kMinCameraDepth)) return p;
  const double x_needed = (removal_pixel(c.intrinsics) - c.intrinsics.cx) * pc.z() / c.intrinsics.fx;
  if (pc.x() >= x_needed) return p;
  const Vec3 right = c.pose.rotation.transpose().col(0);
  return p + (x_needed - pc.x()) * right;
}

/// Existence 0 on every frame and positions pushed off-screen in the given
/// (target) camera.
inline TrackSet remove_object(const TrackSet& ts, int object_id, const CameraPath& cam) {
  const std::vector<int> idx = ts.indices_of(object_id);
  if (idx.empty()) throw Error(ErrorCode::UnknownObject, "no tracks with object id " + std::to_string(object_id));
  if (static_cast<int>(cam.size()) != ts.frames) throw Error(ErrorCode::ShapeMismatch, "camera F differs from track F");
  TrackSet out = ts;
  for (int f = 0; f < ts.frames; ++f)
    for (int i : idx) {
      out.pos(f, i) = push_off_screen(ts.pos(f, i), cam[f]);
      out.existence[out.index(f, i)] = 0;
    }
  return out;
}

struct TrackPairSets {
  TrackSet source;
  TrackSet target;
};

/// Appends the object's source tracks verbatim and its transformed target
/// tracks, under a fresh object id, keeping index pairing.
inline TrackPairSets duplicate_object(const TrackSet& src, const TrackSet& tgt, int object_id,
                                      std::span<const Keyframe> keys, const std::optional<Vec3>& pivot = std::nullopt) {
  if (src.count != tgt.count) throw Error(ErrorCode::CountMismatch, "source and target track counts differ");
  const std::vector<int> idx = tgt.indices_of(object_id);
  if (idx.empty()) throw Error(ErrorCode::UnknownObject, "no tracks with object id " + std::to_string(object_id));
  const int fresh = std::max(src.max_object_id(), tgt.max_object_id()) + 1;
  TrackSet s_new = src.subset(idx);
  TrackSet t_new = apply_rigid_edit(tgt, idx, keys, pivot).subset(idx);
  std::fill(s_new.object_id.begin(), s_new.object_id.end(), fresh);
  std::fill(t_new.object_id.begin(), t_new.object_id.end(), fresh);
  TrackPairSets out{src, tgt};
  out.source.append(s_new);
  out.target.append(t_new);
  return out;
}

/// Replaces the object's target positions by `replacement` (tracks in the
/// object's index order). Existence and ids are kept.
inline TrackSet transfer_tracks(const TrackSet& tgt, int object_id, const TrackSet& replacement) {
  const std::vector<int> idx = tgt.indices_of(object_id);
  if (idx.empty()) throw Error(ErrorCode::UnknownObject, "no tracks with object id " + std::to_string(object_id));
  if (replacement.count != static_cast<int>(idx.size()))
    throw Error(ErrorCode::CountMismatch, "replacement has " + std::to_string(replacement.count) + " tracks, object has " +
                                              std::to_string(idx.size()));
  if (replacement.frames != tgt.frames)
    throw Error(ErrorCode::CountMismatch, "replacement F differs from target F");
  TrackSet out = tgt;
  for (int f = 0; f < tgt.frames; ++f)
    for (std::size_t j = 0; j < idx.size(); ++j) out.pos(f, idx[j]) = replacement.pos(f, static_cast<int>(j));
  return out;
}

/// Deletes tracks from both sides; remaining order is preserved.
inline TrackPairSets drop_tracks(const TrackSet& src, const TrackSet& tgt, std::span<const int> indices) {
  if (src.count != tgt.count) throw Error(ErrorCode::CountMismatch, "source and target track counts differ");
  std::vector<char> drop(static_cast<std::size_t>(src.count), 0);
  for (int i : indices) {
    if (i < 0 || i >= src.count) throw Error(ErrorCode::InvalidArgument, "track index " + std::to_string(i) + " out of range");
    drop[i] = 1;
  }
  std::vector<int> keep;
  for (int i = 0; i < src.count; ++i)
    if (!drop[i]) keep.push_back(i);
  if (keep.empty()) throw Error(ErrorCode::WouldBeEmpty, "dropping every track");
  if (static_cast<int>(keep.size()) == src.count) return {src, tgt};
  return {src.subset(keep), tgt.subset(keep)};
}

/// Background tracks held at their anchor-frame positions.
inline TrackSet freeze_background(const TrackSet& ts, int anchor_frame) {
  if (anchor_frame < 0 || anchor_frame >= ts.frames) throw Error(ErrorCode::InvalidArgument, "anchor frame outside clip");
  TrackSet out = ts;
  for (int n = 0; n < ts.count; ++n) {
    if (ts.object_id[n] != 0) continue;
    for (int f = 0; f < ts.frames; ++f) out.pos(f, n) = ts.pos(anchor_frame, n);
  }
  return out;
}

// ---------------------------------------------------------------------------
// EditSpec application

/// Boxes are drawn on the source clip, so they resolve against source tracks
/// and the source camera; indices are shared by both sides.
inline std::vector<int> resolve_selection(const ClipPair& pair, const Selection& sel) {
  return select_tracks(pair.source_tracks, pair.source_camera, sel);
}

inline std::vector<LbsHandle> resolve_handles(const ClipPair& pair, const EditOp& op) {
  std::vector<LbsHandle> hs;
  for (const auto& h : op.handles) hs.push_back({resolve_selection(pair, h.selection), to_keyframes(h.keyframes)});
  return hs;
}

/// One op on the running pair. Object edits change target tracks only;
/// camera edits change the target camera only.
inline void apply_op(ClipPair& pair, const EditOp& op) {
  switch (op.kind) {
    case EditKind::Rigid: {
      const auto idx = resolve_selection(pair, *op.selection);
      pair.target_tracks = apply_rigid_edit(pair.target_tracks, idx, to_keyframes(op.keyframes), op.pivot);
      break;
    }
    case EditKind::Lbs: {
      const auto region = resolve_selection(pair, *op.selection);
      pair.target_tracks = apply_lbs_deform(pair.target_tracks, resolve_handles(pair, op), op.radius, region);
      break;
    }
    case EditKind::Camera:
      pair.target_camera = edit_camera_path(pair.target_camera, {op.camera_mode, to_keyframes(op.keyframes), op.intrinsics});
      break;
    case EditKind::Remove:
      pair.target_tracks = remove_object(pair.target_tracks, op.selection->object_id, pair.target_camera);
      break;
    case EditKind::Duplicate: {
      auto r = duplicate_object(pair.source_tracks, pair.target_tracks, op.selection->object_id, to_keyframes(op.keyframes), op.pivot);
      pair.source_tracks = std::move(r.source);
      pair.target_tracks = std::move(r.target);
      break;
    }
    case EditKind::Transfer:
      pair.target_tracks = transfer_tracks(pair.target_tracks, op.selection->object_id, *op.replacement);
      break;
    case EditKind::Drop: {
      const auto idx = resolve_selection(pair, *op.selection);
      auto r = drop_tracks(pair.source_tracks, pair.target_tracks, idx);
      pair.source_tracks = std::move(r.source);
      pair.target_tracks = std::move(r.target);
      break;
    }
    case EditKind::FreezeBackground:
      pair.target_tracks = freeze_background(pair.target_tracks, op.anchor_frame);
      break;
  }
}

/// Ops compose in order, each seeing the previous result. The editspec is
/// validated against the clip before anything runs; the input is never
/// modified.
inline ClipPair apply_editspec(const ClipPair& pair, const EditSpec& spec) {
  validate_editspec(spec, pair.frames(), pair.width(), pair.height());
  ClipPair out = pair;
  for (const EditOp& op : spec.ops) apply_op(out, op);
  return out;
}

}  // namespace trackedit
