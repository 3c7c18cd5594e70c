#pragma once

// Procedural clip pairs: a few flat-colored square billboards in front of a
// textured background plane, rendered by ray casting from a pinhole camera.
// The two clips of a pair share the base scene (billboards, colors,
// background) and differ in object motion and camera motion.

#include <array>
#include <cmath>
#include <vector>

#include "trackedit/geometry.hpp"
#include "trackedit/image.hpp"
#include "trackedit/rng.hpp"
#include "trackedit/tracks.hpp"

namespace trackedit {

struct ToySceneConfig {
  int frames = 16;
  int height = 32;
  int width = 32;
  int min_objects = 1;
  int max_objects = 3;
  double depth_near = 2.0;
  double depth_far = 4.0;
  double background_depth = 6.0;
  double object_size = 0.8;         // billboard edge (m)
  double object_travel = 0.45;      // max |offset| of a center per axis, fraction of depth
  double max_spin = 0.6;            // in-plane rotation range over a clip (rad)
  double camera_travel = 0.25;      // max camera center offset per axis (m)
  double camera_yaw = 0.08;         // max camera yaw (rad)
  bool animate = true;              // false: every script is static and both clips share one camera
  int tracks = 48;
  double foreground_fraction = kDefaultForegroundFraction;
  double track_inset = 0.8;         // tracks lie in this fraction of a billboard's extent

  CameraIntrinsics intrinsics() const { return {double(width), double(width), width / 2.0, height / 2.0, width, height}; }
};

/// A billboard's pose at one frame: center and in-plane rotation.
struct BillboardPose {
  Vec3 center = Vec3::Zero();
  double angle = 0;

  Mat3 rotation() const { return Eigen::AngleAxisd(angle, Vec3::UnitZ()).toRotationMatrix(); }
};

/// Linear keyframed motion between a start and end pose.
struct MotionScript {
  BillboardPose start, end;

  BillboardPose at(int f, int frames) const {
    const double s = frames > 1 ? static_cast<double>(f) / (frames - 1) : 0.0;
    return {start.center + s * (end.center - start.center), start.angle + s * (end.angle - start.angle)};
  }
};

struct Billboard {
  int id = 1;
  Vec3 color = Vec3::Zero();
  double size = 0.8;
};

struct ToyScene {
  std::vector<Billboard> objects;
  std::array<double, 12> texture{};  // background pattern coefficients
  double background_depth = 6.0;

  Vec3 background_color(double X, double Y) const {
    const auto& c = texture;
    const double a = std::sin(c[0] * X + c[1] * Y + c[2]) + 0.5 * std::sin(c[3] * X - c[4] * Y + c[5]);
    const double b = std::sin(c[6] * X + c[7] * Y + c[8]) * std::cos(c[9] * Y + c[10]);
    const double g = 0.45 + 0.12 * a + 0.05 * b;
    return Vec3(g + 0.03 * c[11], g, g - 0.03 * c[11]);
  }
};

struct ToyClip {
  VideoClip video;
  DepthVideo depth;
  LabelVideo labels;
};

/// Ray-casts one clip. Returns colors, camera-space depth and object labels
/// (0 = background) per pixel, nearest surface first.
inline ToyClip render_toy_clip(const ToyScene& scene, const std::vector<MotionScript>& scripts,
                               const CameraPath& cam) {
  const int F = static_cast<int>(cam.size()), H = cam.height(), W = cam.width();
  ToyClip out{VideoClip(F, H, W), DepthVideo(F, H, W), LabelVideo(F, H, W)};
  for (int f = 0; f < F; ++f) {
    const auto& fr = cam.frames[f];
    const Mat3 Rt = fr.pose.rotation.transpose();
    const Vec3 origin = fr.pose.center();
    std::vector<BillboardPose> poses;
    for (const auto& s : scripts) poses.push_back(s.at(f, F));
    for (int r = 0; r < H; ++r)
      for (int c = 0; c < W; ++c) {
        const Vec3 dir_cam((c + 0.5 - fr.intrinsics.cx) / fr.intrinsics.fx, (r + 0.5 - fr.intrinsics.cy) / fr.intrinsics.fy, 1);
        const Vec3 dir = Rt * dir_cam;  // parameter along dir equals camera depth
        double best = (scene.background_depth - origin.z()) / dir.z();
        const Vec3 hit = origin + best * dir;
        Vec3 color = scene.background_color(hit.x(), hit.y());
        int label = 0;
        for (std::size_t o = 0; o < scene.objects.size(); ++o) {
          const Mat3 R = poses[o].rotation();
          const Vec3 n = R.col(2);
          const double denom = n.dot(dir);
          if (std::abs(denom) < 1e-12) continue;
          const double t = n.dot(poses[o].center - origin) / denom;
          if (t <= 1e-9 || t >= best) continue;
          const Vec3 local = R.transpose() * (origin + t * dir - poses[o].center);
          const double half = scene.objects[o].size / 2;
          if (std::abs(local.x()) > half || std::abs(local.y()) > half) continue;
          best = t;
          color = scene.objects[o].color;
          label = scene.objects[o].id;
        }
        for (int ch = 0; ch < 3; ++ch) out.video.at(f, r, c, ch) = color[ch];
        out.depth.at(f, r, c) = best;
        out.labels.at(f, r, c) = label;
      }
  }
  return out;
}

namespace detail {

inline const std::array<Vec3, 6>& toy_palette() {
  static const std::array<Vec3, 6> p{Vec3(0.9, 0.1, 0.1), Vec3(0.1, 0.8, 0.15), Vec3(0.15, 0.25, 0.95),
                                     Vec3(0.95, 0.85, 0.1), Vec3(0.85, 0.1, 0.85), Vec3(0.1, 0.85, 0.9)};
  return p;
}

inline MotionScript random_script(const ToySceneConfig& cfg, double depth, Rng& rng) {
  const double r = cfg.object_travel * depth;
  auto pose = [&] {
    return BillboardPose{Vec3(rng.uniform(-r, r), rng.uniform(-r, r), depth), rng.uniform(-0.3, 0.3)};
  };
  MotionScript s{pose(), pose()};
  s.end.angle = s.start.angle + rng.uniform(-cfg.max_spin, cfg.max_spin) / 2;
  if (!cfg.animate) s.end = s.start;
  return s;
}

inline CameraPath random_camera(const ToySceneConfig& cfg, Rng& rng) {
  auto key = [&] {
    const Vec3 c(rng.uniform(-cfg.camera_travel, cfg.camera_travel), rng.uniform(-cfg.camera_travel, cfg.camera_travel), 0);
    return std::pair<Vec3, double>(c, rng.uniform(-cfg.camera_yaw, cfg.camera_yaw));
  };
  auto a = key(), b = key();
  if (!cfg.animate) a = b = {Vec3::Zero(), 0.0};
  CameraPath cam;
  for (int f = 0; f < cfg.frames; ++f) {
    const double s = cfg.frames > 1 ? static_cast<double>(f) / (cfg.frames - 1) : 0.0;
    const Vec3 c = a.first + s * (b.first - a.first);
    const double yaw = a.second + s * (b.second - a.second);
    const Mat3 c2w = Eigen::AngleAxisd(yaw, Vec3::UnitY()).toRotationMatrix();
    cam.frames.push_back({cfg.intrinsics(), RigidPose::from_center(c2w.transpose(), c)});
  }
  return cam;
}

/// World trajectories of local billboard points (or fixed background points).
inline TrackSet toy_tracks(const ToyScene& scene, const std::vector<MotionScript>& scripts, int frames,
                           const std::vector<int>& owner, const std::vector<Vec3>& local) {
  TrackSet ts(frames, static_cast<int>(owner.size()));
  for (int n = 0; n < ts.count; ++n) {
    ts.object_id[n] = owner[n] < 0 ? 0 : scene.objects[owner[n]].id;
    for (int f = 0; f < frames; ++f) {
      if (owner[n] < 0) {
        ts.pos(f, n) = local[n];
      } else {
        const BillboardPose p = scripts[owner[n]].at(f, frames);
        ts.pos(f, n) = p.center + p.rotation() * local[n];
      }
    }
  }
  return ts;
}

/// Visibility from the rendered depth: in frame and within 1% of the surface depth.
inline void mark_visibility(TrackSet& ts, const CameraPath& cam, const DepthVideo& depth) {
  for (int f = 0; f < ts.frames; ++f)
    for (int n = 0; n < ts.count; ++n) {
      std::uint8_t vis = 0;
      const Vec3 pc = cam.frames[f].pose.apply(ts.pos(f, n));
      if (pc.z() > kMinCameraDepth) {
        const ScreenPoint sp = project(ts.pos(f, n), cam.frames[f]);
        if (in_frame(sp, cam.frames[f].intrinsics)) {
          const double d = depth.at(f, static_cast<int>(sp.y), static_cast<int>(sp.x));
          vis = std::abs(d - sp.depth) <= 0.01 * sp.depth ? 1 : 0;
        }
      }
      ts.visibility[ts.index(f, n)] = vis;
    }
}

}  // namespace detail

struct ToyPair {
  ClipPair pair;           // target_video, depth_maps (source) and masks (source) filled
  ToyScene scene;
  std::vector<MotionScript> source_scripts, target_scripts;
  DepthVideo target_depth;
  LabelVideo target_labels;
};

/// Draws a base scene and two motion/camera scripts, renders both clips and
/// samples `cfg.tracks` paired tracks (billboard surfaces and background).
inline ToyPair gen_procedural_pair(std::uint64_t seed, const ToySceneConfig& cfg = {}) {
  Rng rng = Rng(seed).split("toy-scene");
  ToyPair out;
  const int count = rng.uniform_int(cfg.min_objects, cfg.max_objects);
  // Distinct depths: one slot per object across [near, far].
  std::vector<std::size_t> colors = rng.choose(detail::toy_palette().size(), count);
  const double slot = (cfg.depth_far - cfg.depth_near) / count;
  std::vector<double> depths;
  for (int o = 0; o < count; ++o) depths.push_back(cfg.depth_near + slot * (o + rng.uniform(0.15, 0.85)));
  rng.shuffle(depths.begin(), depths.end());
  for (int o = 0; o < count; ++o) out.scene.objects.push_back({o + 1, detail::toy_palette()[colors[o]], cfg.object_size});
  for (double& c : out.scene.texture) c = rng.uniform(0.5, 3.0);
  out.scene.background_depth = cfg.background_depth;

  for (int o = 0; o < count; ++o) out.source_scripts.push_back(detail::random_script(cfg, depths[o], rng));
  for (int o = 0; o < count; ++o) out.target_scripts.push_back(detail::random_script(cfg, depths[o], rng));
  if (!cfg.animate) out.target_scripts = out.source_scripts;
  CameraPath src_cam = detail::random_camera(cfg, rng);
  CameraPath tgt_cam = cfg.animate ? detail::random_camera(cfg, rng) : src_cam;

  // Track anchors: billboard-local points or background points seen by the
  // first source frame.
  const int n_fg = static_cast<int>(std::ceil(cfg.foreground_fraction * cfg.tracks));
  std::vector<int> owner;
  std::vector<Vec3> local;
  const double inset = cfg.track_inset * cfg.object_size / 2;
  for (int n = 0; n < cfg.tracks; ++n) {
    if (n < n_fg) {
      owner.push_back(static_cast<int>(n % count));
      local.emplace_back(rng.uniform(-inset, inset), rng.uniform(-inset, inset), 0);
    } else {
      const auto& fr = src_cam.frames[0];
      const double x = rng.uniform(0, cfg.width), y = rng.uniform(0, cfg.height);
      const Vec3 dir = fr.pose.rotation.transpose() *
                       Vec3((x - fr.intrinsics.cx) / fr.intrinsics.fx, (y - fr.intrinsics.cy) / fr.intrinsics.fy, 1);
      const Vec3 o = fr.pose.center();
      owner.push_back(-1);
      local.push_back(o + (cfg.background_depth - o.z()) / dir.z() * dir);
    }
  }

  ToyClip src = render_toy_clip(out.scene, out.source_scripts, src_cam);
  ToyClip tgt = render_toy_clip(out.scene, out.target_scripts, tgt_cam);
  ClipPair& p = out.pair;
  p.source_tracks = detail::toy_tracks(out.scene, out.source_scripts, cfg.frames, owner, local);
  p.target_tracks = detail::toy_tracks(out.scene, out.target_scripts, cfg.frames, owner, local);
  detail::mark_visibility(p.source_tracks, src_cam, src.depth);
  detail::mark_visibility(p.target_tracks, tgt_cam, tgt.depth);
  p.source_video = std::move(src.video);
  p.target_video = std::move(tgt.video);
  p.source_camera = std::move(src_cam);
  p.target_camera = std::move(tgt_cam);
  p.depth_maps = std::move(src.depth);
  p.masks = std::move(src.labels);
  out.target_depth = std::move(tgt.depth);
  out.target_labels = std::move(tgt.labels);
  return out;
}

}  // namespace trackedit
