#pragma once

// Small synthetic scenes shared by the unit tests.

#include <filesystem>
#include <string>

#include "trackedit/geometry.hpp"
#include "trackedit/image.hpp"
#include "trackedit/rng.hpp"
#include "trackedit/tracks.hpp"

namespace fixtures {

using namespace trackedit;

inline CameraIntrinsics intrinsics(int w = 32, int h = 24, double f = 30.0) {
  return CameraIntrinsics{f, f, w / 2.0, h / 2.0, w, h};
}

/// Camera translating along +x by `step` meters per frame, looking down +z.
inline CameraPath sliding_camera(int frames, double step, int w = 32, int h = 24) {
  CameraPath cam;
  for (int f = 0; f < frames; ++f)
    cam.frames.push_back({intrinsics(w, h), RigidPose::from_center(Mat3::Identity(), Vec3(step * f, 0, 0))});
  return cam;
}

/// Two objects (ids 1 and 2) of `per_object` tracks each plus `background`
/// static tracks on a far plane. Objects drift slowly along x.
struct TwoObjectScene {
  TrackSet tracks;
  std::vector<int> object1, object2, background;
};

inline TwoObjectScene two_object_scene(int frames = 4, int per_object = 5, int background = 6, std::uint64_t seed = 1) {
  Rng rng(seed);
  const int n = 2 * per_object + background;
  TwoObjectScene s;
  s.tracks = TrackSet(frames, n);
  int i = 0;
  for (int obj = 1; obj <= 2; ++obj) {
    const Vec3 center(obj == 1 ? -0.5 : 0.5, 0.0, obj == 1 ? 2.0 : 3.0);
    for (int k = 0; k < per_object; ++k, ++i) {
      const Vec3 off(rng.uniform(-0.15, 0.15), rng.uniform(-0.15, 0.15), rng.uniform(-0.05, 0.05));
      s.tracks.object_id[i] = obj;
      (obj == 1 ? s.object1 : s.object2).push_back(i);
      for (int f = 0; f < frames; ++f) s.tracks.pos(f, i) = center + off + Vec3(0.02 * f * (obj == 1 ? 1 : -1), 0, 0);
    }
  }
  for (int k = 0; k < background; ++k, ++i) {
    const Vec3 p(rng.uniform(-2, 2), rng.uniform(-1.5, 1.5), 6.0);
    s.background.push_back(i);
    for (int f = 0; f < frames; ++f) s.tracks.pos(f, i) = p;
  }
  return s;
}

inline ClipPair two_object_pair(int frames = 4, int w = 32, int h = 24) {
  ClipPair pair;
  pair.source_video = VideoClip(frames, h, w);
  Rng rng(7);
  for (auto& v : pair.source_video.data) v = static_cast<double>(rng.uniform_int(0, 255)) / 255.0;
  pair.source_camera = sliding_camera(frames, 0.0, w, h);
  pair.target_camera = sliding_camera(frames, 0.05, w, h);
  const auto scene = two_object_scene(frames);
  pair.source_tracks = scene.tracks;
  pair.target_tracks = scene.tracks;
  return pair;
}

inline std::filesystem::path temp_dir(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("trackedit_test_" + name);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

}  // namespace fixtures
