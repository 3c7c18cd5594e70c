#include <gtest/gtest.h>

#include <cmath>

#include "fixtures.hpp"
#include "trackedit/augment.hpp"

using namespace trackedit;

namespace {

Mat3 rot(const Vec3& axis, double angle) { return Eigen::AngleAxisd(angle, axis.normalized()).toRotationMatrix(); }

Mat3 kmat(const CameraIntrinsics& k) {
  Mat3 m;
  m << k.fx, 0, k.cx, 0, k.fy, k.cy, 0, 0, 1;
  return m;
}

Mat3 skew(const Vec3& v) {
  Mat3 m;
  m << 0, -v.z(), v.y(), v.z(), 0, -v.x(), -v.y(), v.x(), 0;
  return m;
}

/// Fundamental matrix taking source pixels to epipolar lines in the other view.
Mat3 fundamental(const CameraFrame& a, const CameraFrame& b) {
  const Mat3 r = b.pose.rotation * a.pose.rotation.transpose();
  const Vec3 t = b.pose.translation - r * a.pose.translation;
  return kmat(b.intrinsics).inverse().transpose() * skew(t) * r * kmat(a.intrinsics).inverse();
}

double line_distance(const Vec3& line, const Vec2& p) {
  return std::abs(line.x() * p.x() + line.y() * p.y() + line.z()) / std::hypot(line.x(), line.y());
}

/// 200 random tracks in front of a static source camera; the target camera
/// is rotated and translated per frame.
ClipPair random_pair(int frames = 6, int n = 200, std::uint64_t seed = 3) {
  Rng rng(seed);
  ClipPair p;
  p.source_video = VideoClip(frames, 24, 32, 0.5);
  p.source_camera = fixtures::sliding_camera(frames, 0.0);
  for (int f = 0; f < frames; ++f)
    p.target_camera.frames.push_back(
        {fixtures::intrinsics(), RigidPose::from_center(rot(Vec3(0.2, 1, 0.1), 0.05 + 0.02 * f), Vec3(0.3 + 0.05 * f, 0.1, -0.2))});
  p.source_tracks = TrackSet(frames, n);
  for (int i = 0; i < n; ++i) {
    const Vec3 base(rng.uniform(-1.5, 1.5), rng.uniform(-1, 1), rng.uniform(3, 8));
    for (int f = 0; f < frames; ++f) p.source_tracks.pos(f, i) = base + Vec3(0.01 * f, 0, 0);
  }
  p.target_tracks = p.source_tracks;
  return p;
}

ProjectedTracks random_projected(int frames, int n, std::uint64_t seed) {
  Rng rng(seed);
  ProjectedTracks pt(frames, n, 32, 24);
  for (Vec3& c : pt.coords) c = Vec3(rng.uniform(0.1, 0.9), rng.uniform(0.1, 0.9), rng.uniform());
  return pt;
}

std::vector<int> changed_tracks(const ProjectedTracks& a, const ProjectedTracks& b) {
  std::vector<int> out;
  for (int n = 0; n < a.count; ++n)
    for (int f = 0; f < a.frames; ++f)
      if (a.at(f, n) != b.at(f, n)) {
        out.push_back(n);
        break;
      }
  return out;
}

}  // namespace

TEST(AugmentConfig, JsonRoundTripAndCaps) {
  AugmentConfig c;
  c.seed = 42;
  c.drift_velocity_range = 1.5;
  const AugmentConfig back = augment_config_from_json(to_json(c));
  EXPECT_EQ(to_json(back), to_json(c));
  for (const char* field : {"epipolar_fraction", "homography_fraction", "drift_fraction"}) {
    json j = to_json(c);
    j[field] = 0.11;
    EXPECT_THROW(augment_config_from_json(j), Error) << field;
  }
  json j = to_json(c);
  j["dropout_max"] = 0.6;
  EXPECT_THROW(augment_config_from_json(j), Error);
  j = to_json(c);
  j["epipolar_sigma"] = -0.1;
  EXPECT_THROW(augment_config_from_json(j), Error);
  j = to_json(c);
  j["colour_jitter"] = 1;
  try {
    augment_config_from_json(j, "augment.json");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.field(), "$.colour_jitter");
  }
}

TEST(EpipolarJitter, ZeroSigmaIsBitIdentical) {
  const ClipPair p = random_pair();
  AugmentConfig c;
  c.epipolar_sigma = 0;
  EXPECT_EQ(epipolar_jitter(p, c, Rng(1)), p.target_tracks);
}

TEST(EpipolarJitter, PreservesSourceProjection) {
  const ClipPair p = random_pair();
  AugmentConfig c;
  c.epipolar_sigma = 0.2;
  const TrackSet out = epipolar_jitter(p, c, Rng(2));
  int moved = 0;
  for (int f = 0; f < out.frames; ++f)
    for (int n = 0; n < out.count; ++n) {
      const ScreenPoint a = project(p.target_tracks.pos(f, n), p.source_camera[f]);
      const ScreenPoint b = project(out.pos(f, n), p.source_camera[f]);
      EXPECT_LT(std::hypot(a.x - b.x, a.y - b.y), 1e-6);
      moved += out.pos(f, n) != p.target_tracks.pos(f, n);
    }
  EXPECT_GT(moved, 0);
}

TEST(EpipolarJitter, DisplacesAlongEpipolarLines) {
  const ClipPair p = random_pair();
  AugmentConfig c;
  c.epipolar_sigma = 0.2;
  const TrackSet out = epipolar_jitter(p, c, Rng(3));
  double worst = 0, moved = 0;
  for (int f = 0; f < out.frames; ++f) {
    const Mat3 F = fundamental(p.source_camera[f], p.target_camera[f]);
    for (int n = 0; n < out.count; ++n) {
      const ScreenPoint s = project(p.target_tracks.pos(f, n), p.source_camera[f]);
      const Vec3 line = F * Vec3(s.x, s.y, 1.0);
      const ScreenPoint a = project(p.target_tracks.pos(f, n), p.target_camera[f]);
      const ScreenPoint b = project(out.pos(f, n), p.target_camera[f]);
      worst = std::max({worst, line_distance(line, {a.x, a.y}), line_distance(line, {b.x, b.y})});
      moved = std::max(moved, std::hypot(a.x - b.x, a.y - b.y));
    }
  }
  EXPECT_LT(worst, 1e-6);
  EXPECT_GT(moved, 0.1);
}

TEST(EpipolarJitter, DepthFactorWithinRange) {
  const ClipPair p = random_pair();
  AugmentConfig c;
  c.epipolar_sigma = 0.05;
  const TrackSet out = epipolar_jitter(p, c, Rng(4));
  for (int f = 0; f < out.frames; ++f)
    for (int n = 0; n < out.count; ++n) {
      const double z0 = p.source_camera[f].pose.apply(p.target_tracks.pos(f, n)).z();
      const double z1 = p.source_camera[f].pose.apply(out.pos(f, n)).z();
      EXPECT_GE(z1 / z0, 0.95 - 1e-12);
      EXPECT_LE(z1 / z0, 1.05 + 1e-12);
    }
}

TEST(EpipolarJitter, Deterministic) {
  const ClipPair p = random_pair();
  const AugmentConfig c;
  EXPECT_EQ(epipolar_jitter(p, c, Rng(5)), epipolar_jitter(p, c, Rng(5)));
  EXPECT_NE(epipolar_jitter(p, c, Rng(5)), epipolar_jitter(p, c, Rng(6)));
}

TEST(HomographyPerturb, ZeroJitterIsIdentity) {
  const ProjectedTracks pt = random_projected(5, 100, 1);
  AugmentConfig c;
  c.homography_jitter_px = 0;
  EXPECT_EQ(homography_perturb(pt, c, Rng(1)), pt);
}

TEST(HomographyPerturb, AnchorFrameUntouchedAndZUnchanged) {
  const ProjectedTracks pt = random_projected(6, 100, 2);
  const AugmentConfig c;
  json log;
  const ProjectedTracks out = homography_perturb(pt, c, Rng(2), &log);
  const int anchor = log["homography"]["anchor"];
  for (int n = 0; n < pt.count; ++n) {
    EXPECT_EQ(out.at(anchor, n), pt.at(anchor, n));
    for (int f = 0; f < pt.frames; ++f) EXPECT_EQ(out.at(f, n).z(), pt.at(f, n).z());
  }
  const auto changed = changed_tracks(pt, out);
  EXPECT_FALSE(changed.empty());
  EXPECT_LE(changed.size(), 10u);
}

TEST(HomographyPerturb, DefiningTracksLandOnTargets) {
  // Static tracks: a frame's positions equal the anchor positions, so the
  // four defining tracks must land exactly on their jittered targets.
  ProjectedTracks pt = random_projected(1, 60, 3);
  ProjectedTracks stat(6, 60, 32, 24);
  for (int f = 0; f < 6; ++f)
    for (int n = 0; n < 60; ++n) stat.at(f, n) = pt.at(0, n);
  AugmentConfig c;
  c.homography_jitter_px = 3;
  std::vector<HomographyFrame> fits;
  const ProjectedTracks out = homography_perturb(stat, c, Rng(3), nullptr, &fits);
  ASSERT_EQ(fits.size(), 5u);
  for (const auto& hf : fits)
    for (int i = 0; i < 4; ++i) {
      const Vec3& p = out.at(hf.frame, hf.tracks[i]);
      const double dx = (p.x() - hf.targets[i].x()) * 32, dy = (p.y() - hf.targets[i].y()) * 24;
      EXPECT_LT(std::hypot(dx, dy), 1e-8);
    }
}

TEST(HomographyPerturb, TooFewTracks) {
  try {
    homography_perturb(random_projected(3, 39, 4), AugmentConfig{}, Rng(1));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::TooFewTracks);
  }
}

TEST(LinearDrift, ZeroRangeIsIdentity) {
  const ProjectedTracks pt = random_projected(5, 50, 5);
  AugmentConfig c;
  c.drift_velocity_range = 0;
  EXPECT_EQ(linear_drift(pt, c, Rng(1)), pt);
}

TEST(LinearDrift, UnitVelocityAtFrameTen) {
  ProjectedTracks pt = random_projected(11, 1, 6);
  const ProjectedTracks orig = pt;
  apply_drift(pt, 0, Vec2(1, 0));
  EXPECT_NEAR(pt.pixel(10, 0).x() - orig.pixel(10, 0).x(), 10.0, 1e-12);
  EXPECT_EQ(pt.at(0, 0), orig.at(0, 0));
  EXPECT_EQ(pt.at(10, 0).y(), orig.at(10, 0).y());
}

TEST(LinearDrift, UniformVelocitySecondDifferencesVanish) {
  const ProjectedTracks pt = random_projected(12, 100, 7);
  json log;
  const ProjectedTracks out = linear_drift(pt, AugmentConfig{}, Rng(7), &log);
  const auto& vel = log["drift"]["velocities"];
  EXPECT_EQ(vel.size(), log["drift"]["tracks"].size());
  for (int n = 0; n < pt.count; ++n)
    for (int f = 2; f < pt.frames; ++f) {
      auto d = [&](int k) -> Vec2 { return out.pixel(k, n) - pt.pixel(k, n); };
      EXPECT_LT((d(f) - 2 * d(f - 1) + d(f - 2)).norm(), 1e-12);
    }
  for (const auto& v : vel) EXPECT_LE(std::hypot(v[0].get<double>(), v[1].get<double>()), 2.0);
}

TEST(FrameDropout, ZeroIsIdentityAndDroppedFramesAreZero) {
  const VideoClip v = fixtures::two_object_pair(16).source_video;
  AugmentConfig c;
  c.dropout_max = 0;
  EXPECT_EQ(frame_dropout(v, c, Rng(1)), v);
  std::vector<int> dropped;
  const VideoClip out = frame_dropout(v, AugmentConfig{}, Rng(9), nullptr, &dropped);
  ASSERT_FALSE(dropped.empty());
  for (int f = 0; f < v.frames; ++f) {
    const bool d = std::find(dropped.begin(), dropped.end(), f) != dropped.end();
    for (std::size_t i = 0; i < v.frame_size(); ++i) {
      const std::size_t k = f * v.frame_size() + i;
      ASSERT_EQ(out.data[k], d ? 0.0 : v.data[k]);
    }
  }
}

TEST(Caps, RespectedOverThousandDraws) {
  const ClipPair p = random_pair(4, 100);
  const ProjectedTracks pt = random_projected(4, 100, 8);
  const VideoClip v(16, 2, 2, 1.0);
  const AugmentConfig c;
  bool first_or_last_dropped = false;
  for (std::uint64_t s = 0; s < 1000; ++s) {
    const Rng r(s);
    const TrackSet e = epipolar_jitter(p, c, r.split("e"));
    int moved = 0;
    for (int n = 0; n < e.count; ++n)
      for (int f = 0; f < e.frames; ++f)
        if (e.pos(f, n) != p.target_tracks.pos(f, n)) {
          ++moved;
          break;
        }
    ASSERT_LE(moved, 10);
    ASSERT_LE(changed_tracks(pt, homography_perturb(pt, c, r.split("h"))).size(), 10u);
    ASSERT_LE(changed_tracks(pt, linear_drift(pt, c, r.split("d"))).size(), 10u);
    std::vector<int> dropped;
    frame_dropout(v, c, r.split("f"), nullptr, &dropped);
    ASSERT_LE(dropped.size(), 8u);
    for (int f : dropped) first_or_last_dropped |= f == 0 || f == 15;
  }
  EXPECT_TRUE(first_or_last_dropped);
}

TEST(ClipPair, DisjointDrawsRespectGapRange) {
  ClipPolicy pol;
  pol.frames = 8;
  pol.fps = 4;
  AugmentConfig c;
  c.overlap_pair_fraction = 0;
  Rng rng(1);
  for (int i = 0; i < 500; ++i) {
    const ClipWindows w = draw_clip_windows(60, pol, c, rng);
    ASSERT_EQ(w.intersection(), 0);
    ASSERT_GE(w.gap(), 4);
    ASSERT_LE(w.gap(), 20);
    ASSERT_GE(std::min(w.source_start, w.target_start), 0);
    ASSERT_LE(std::max(w.source_start, w.target_start) + 8, 60);
  }
}

TEST(ClipPair, OverlapDrawsAtMostHalf) {
  ClipPolicy pol;
  pol.frames = 9;
  pol.fps = 2;
  AugmentConfig c;
  c.overlap_pair_fraction = 1;
  Rng rng(2);
  for (int i = 0; i < 500; ++i) {
    const ClipWindows w = draw_clip_windows(40, pol, c, rng);
    ASSERT_TRUE(w.overlapping);
    ASSERT_GE(w.intersection(), 1);
    ASSERT_LE(w.intersection(), 4);
  }
}

TEST(ClipPair, SlicesConsistently) {
  const int T = 40;
  Recording rec;
  rec.video = VideoClip(T, 4, 4);
  for (int f = 0; f < T; ++f)
    for (std::size_t i = 0; i < rec.video.frame_size(); ++i) rec.video.data[f * rec.video.frame_size() + i] = f / 100.0;
  rec.camera = fixtures::sliding_camera(T, 0.1, 4, 4);
  rec.tracks = TrackSet(T, 2);
  for (int f = 0; f < T; ++f) rec.tracks.pos(f, 0) = Vec3(f, 0, 1);
  ClipPolicy pol;
  pol.frames = 6;
  pol.fps = 3;
  ClipWindows w;
  const ClipPair p = sample_clip_pair(rec, pol, AugmentConfig{}, Rng(3), nullptr, &w);
  for (int f = 0; f < 6; ++f) {
    EXPECT_EQ(p.source_video.at(f, 0, 0, 0), (w.source_start + f) / 100.0);
    EXPECT_EQ(p.target_video->at(f, 0, 0, 0), (w.target_start + f) / 100.0);
    EXPECT_EQ(p.source_tracks.pos(f, 0).x(), w.source_start + f);
    EXPECT_EQ(p.target_tracks.pos(f, 0).x(), w.target_start + f);
    EXPECT_EQ(p.target_camera[f], rec.camera[w.target_start + f]);
  }
}

TEST(ClipPair, VideoTooShort) {
  Recording rec;
  rec.video = VideoClip(20, 2, 2);
  rec.camera = fixtures::sliding_camera(20, 0.0, 2, 2);
  rec.tracks = TrackSet(20, 1);
  ClipPolicy pol;
  pol.frames = 8;
  pol.fps = 8;
  try {
    sample_clip_pair(rec, pol, AugmentConfig{}, Rng(1));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::VideoTooShort);
  }
}

TEST(HorizontalFlip, PixelOracleOnEightByEight) {
  VideoClip v(1, 8, 8);
  for (std::size_t i = 0; i < v.data.size(); ++i) v.data[i] = static_cast<double>(i);
  const VideoClip orig = v;
  ProjectedTracks pt(1, 1, 8, 8);
  pt.at(0, 0) = Vec3(0.25, 0.4, 0.3);
  horizontal_flip(v, pt);
  for (int r = 0; r < 8; ++r)
    for (int c = 0; c < 8; ++c)
      for (int ch = 0; ch < 3; ++ch) ASSERT_EQ(v.at(0, r, 8 - 1 - c, ch), orig.at(0, r, c, ch));
  EXPECT_EQ(pt.at(0, 0), Vec3(0.75, 0.4, 0.3));
}

TEST(HorizontalFlip, TwiceIsIdentity) {
  VideoClip v = fixtures::two_object_pair(3).source_video;
  const VideoClip orig = v;
  ProjectedTracks pt(3, 32, 32, 24);
  for (int f = 0; f < 3; ++f)
    for (int n = 0; n < 32; ++n) pt.at(f, n) = Vec3((n + 0.5) / 32, 0.5, 0.25 * f);
  const ProjectedTracks pt0 = pt;
  horizontal_flip(v, pt);
  horizontal_flip(v, pt);
  EXPECT_EQ(v, orig);
  EXPECT_EQ(pt, pt0);
  // Arbitrary doubles come back within one rounding step.
  ProjectedTracks r = random_projected(3, 50, 9);
  const ProjectedTracks r0 = r;
  VideoClip none;
  horizontal_flip(none, r);
  horizontal_flip(none, r);
  for (std::size_t i = 0; i < r.coords.size(); ++i) EXPECT_NEAR(r.coords[i].x(), r0.coords[i].x(), 1e-16);
}

TEST(AugmentPair, NoneIsIdentityAndRecordReplays) {
  const ClipPair p = random_pair(6, 100);
  const AugmentedSample id = augment_pair(p, AugmentConfig::none());
  const ProjectedPair pp = project_pair(p);
  EXPECT_EQ(id.source_video, p.source_video);
  EXPECT_EQ(id.target_tracks3d, p.target_tracks);
  EXPECT_EQ(id.target_tracks, pp.target);
  EXPECT_FALSE(id.flipped);

  AugmentConfig c;
  c.seed = 11;
  const AugmentedSample a = augment_pair(p, c), b = augment_pair(p, c);
  EXPECT_EQ(a.record, b.record);
  EXPECT_EQ(a.target_tracks, b.target_tracks);
  EXPECT_EQ(augment_config_from_json(a.record["config"]).seed, 11u);
  for (const char* k : {"epipolar", "homography", "drift", "dropout", "flip"}) EXPECT_TRUE(a.record.contains(k)) << k;
}
