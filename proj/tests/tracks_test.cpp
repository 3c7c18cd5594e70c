#include <gtest/gtest.h>

#include <fstream>

#include "fixtures.hpp"
#include "trackedit/project_io.hpp"
#include "trackedit/tracks.hpp"

using namespace trackedit;

TEST(ProjectTracks, StaticPointStaysConstant) {
  TrackSet ts(5, 2);
  for (int f = 0; f < 5; ++f) {
    ts.pos(f, 0) = Vec3(0, 0, 2);
    ts.pos(f, 1) = Vec3(0.3, 0.1, 4);
  }
  const auto cam = fixtures::sliding_camera(5, 0.0);
  const auto range = pair_disparity_range(ts, cam, ts, cam);
  const auto pt = project_tracks(ts, cam, range);
  for (int f = 0; f < 5; ++f) {
    EXPECT_EQ(pt.at(f, 0), pt.at(0, 0));
    EXPECT_DOUBLE_EQ(pt.at(f, 0).x(), 0.5);
    EXPECT_DOUBLE_EQ(pt.at(f, 0).y(), 0.5);
  }
  EXPECT_EQ(pt.at(0, 0).z(), 1.0);  // nearest in pool
  EXPECT_EQ(pt.at(0, 1).z(), 0.0);  // farthest in pool
}

TEST(ProjectTracks, CameraMovingRightMovesPointsLeft) {
  TrackSet ts(8, 1);
  for (int f = 0; f < 8; ++f) ts.pos(f, 0) = Vec3(0.2, -0.1, 3);
  const auto cam = fixtures::sliding_camera(8, 0.1);
  const auto pt = project_tracks(ts, cam, pair_disparity_range(ts, cam, ts, cam));
  for (int f = 1; f < 8; ++f) {
    EXPECT_LT(pt.at(f, 0).x(), pt.at(f - 1, 0).x());
    // per-frame oracle: x = fx * (X - cx_world) / Z + cx
    const double x = 30.0 * (0.2 - 0.1 * f) / 3.0 + 16.0;
    EXPECT_NEAR(pt.at(f, 0).x() * 32, x, 1e-12);
  }
}

TEST(ProjectTracks, BehindCameraCarriesForward) {
  TrackSet ts(4, 1);
  ts.pos(0, 0) = Vec3(0, 0, -1);
  ts.pos(1, 0) = Vec3(0.1, 0, 2);
  ts.pos(2, 0) = Vec3(0, 0, -3);
  ts.pos(3, 0) = Vec3(0.2, 0, 2);
  const auto cam = fixtures::sliding_camera(4, 0.0);
  const auto pt = project_tracks(ts, cam, pair_disparity_range(ts, cam, ts, cam));
  EXPECT_EQ(pt.existence[0], 0);
  EXPECT_EQ(pt.existence[1], 1);
  EXPECT_EQ(pt.existence[2], 0);
  EXPECT_EQ(pt.at(0, 0), pt.at(1, 0));  // first valid value carried back
  EXPECT_EQ(pt.at(2, 0), pt.at(1, 0));  // last valid value carried forward
  for (const auto& c : pt.coords) EXPECT_TRUE(c.allFinite());
}

TEST(ProjectTracks, ZAlwaysInUnitRangeAndExistenceOnlyDrops) {
  Rng rng(4);
  TrackSet ts(6, 50);
  for (auto& p : ts.positions) p = Vec3(rng.uniform(-3, 3), rng.uniform(-3, 3), rng.uniform(-1, 30));
  for (auto& e : ts.existence) e = static_cast<std::uint8_t>(rng.bernoulli(0.8));
  const auto cam = fixtures::sliding_camera(6, 0.2);
  const auto pt = project_tracks(ts, cam, pair_disparity_range(ts, cam, ts, cam));
  for (std::size_t i = 0; i < pt.coords.size(); ++i) {
    EXPECT_GE(pt.coords[i].z(), 0.0);
    EXPECT_LE(pt.coords[i].z(), 1.0);
    EXPECT_LE(pt.existence[i], ts.existence[i]);
  }
}

TEST(TemporalDownsample, IdentityWhenEqual) {
  ProjectedTracks pt(5, 3, 10, 10);
  Rng rng(1);
  for (auto& c : pt.coords) c = Vec3(rng.uniform(), rng.uniform(), rng.uniform());
  EXPECT_EQ(temporal_downsample(pt, 5), pt);
}

TEST(TemporalDownsample, FormulaIndices) {
  EXPECT_EQ(downsample_indices(5, 3), (std::vector<int>{0, 2, 4}));
  std::vector<int> expected;
  for (int k = 0; k <= 20; ++k) expected.push_back(4 * k);
  EXPECT_EQ(downsample_indices(81, 21), expected);
  EXPECT_EQ(downsample_indices(7, 1), (std::vector<int>{0}));
  EXPECT_EQ(downsample_indices(16, 8), (std::vector<int>{0, 2, 4, 6, 9, 11, 13, 15}));
  EXPECT_THROW(downsample_indices(4, 5), Error);
}

TEST(TemporalDownsample, ValuesAreCopiedSubset) {
  ProjectedTracks pt(9, 2, 10, 10);
  Rng rng(2);
  for (auto& c : pt.coords) c = Vec3(rng.uniform(), rng.uniform(), rng.uniform());
  const auto ds = temporal_downsample(pt, 4);
  const auto idx = downsample_indices(9, 4);
  for (int k = 0; k < 4; ++k)
    for (int n = 0; n < 2; ++n) EXPECT_EQ(ds.at(k, n), pt.at(idx[k], n));
}

TEST(SampleTracks, FullSetCanonicalOrder) {
  const auto s = fixtures::two_object_scene();
  const auto idx = sample_track_indices(s.tracks, s.tracks.count, 0.7, Rng(3));
  for (int i = 0; i < s.tracks.count; ++i) EXPECT_EQ(idx[i], i);
}

TEST(SampleTracks, DeterministicAndForegroundBiased) {
  TrackSet ts(2, 3000);
  for (int i = 0; i < 3000; ++i) ts.object_id[i] = i % 3 == 0 ? 0 : 1 + i % 2;
  const auto a = sample_track_indices(ts, 1000, 0.7, Rng(9));
  const auto b = sample_track_indices(ts, 1000, 0.7, Rng(9));
  EXPECT_EQ(a, b);
  ASSERT_EQ(a.size(), 1000u);
  int fg = 0;
  for (int i : a) fg += ts.object_id[i] > 0;
  EXPECT_EQ(fg, 700);
  EXPECT_TRUE(std::is_sorted(a.begin(), a.end()));
  EXPECT_NE(a, sample_track_indices(ts, 1000, 0.7, Rng(10)));
}

TEST(SampleTracks, FallsBackWhenPoolSmall) {
  TrackSet ts(1, 10);
  ts.object_id = {1, 1, 0, 0, 0, 0, 0, 0, 0, 0};
  const auto idx = sample_track_indices(ts, 5, 0.9, Rng(1));
  ASSERT_EQ(idx.size(), 5u);
  EXPECT_EQ(idx[0], 0);
  EXPECT_EQ(idx[1], 1);
}

TEST(SampleTracks, PairingPreserved) {
  auto pair = fixtures::two_object_pair();
  const auto idx = sample_track_indices(pair.source_tracks, 7, 0.7, Rng(5));
  const auto src = pair.source_tracks.subset(idx);
  const auto tgt = pair.target_tracks.subset(idx);
  for (std::size_t j = 0; j < idx.size(); ++j) EXPECT_EQ(src.object_id[j], tgt.object_id[j]);
}

TEST(LabelTracks, MajorityLabels) {
  const int F = 3, W = 32, H = 24;
  const auto scene = fixtures::two_object_scene(F);
  const auto cam = fixtures::sliding_camera(F, 0.0, W, H);
  LabelVideo masks(F, H, W, 0);
  // generator oracle: paint each object's projected pixels with its id
  for (int f = 0; f < F; ++f)
    for (int n = 0; n < scene.tracks.count; ++n) {
      if (scene.tracks.object_id[n] == 0) continue;
      const auto sp = project(scene.tracks.pos(f, n), cam[f]);
      if (in_frame(sp, cam[f].intrinsics)) masks.at(f, static_cast<int>(sp.y), static_cast<int>(sp.x)) = scene.tracks.object_id[n];
    }
  TrackSet unlabeled = scene.tracks;
  std::fill(unlabeled.object_id.begin(), unlabeled.object_id.end(), 0);
  const auto labeled = label_tracks_by_mask(unlabeled, masks, cam);
  EXPECT_EQ(labeled.object_id, scene.tracks.object_id);
}

TEST(LabelTracks, OutsideEveryMaskIsZero) {
  TrackSet ts(2, 1);
  ts.pos(0, 0) = ts.pos(1, 0) = Vec3(0, 0, 2);
  const auto cam = fixtures::sliding_camera(2, 0.0);
  LabelVideo masks(2, 24, 32, 0);
  EXPECT_EQ(label_tracks_by_mask(ts, masks, cam).object_id[0], 0);
  masks = LabelVideo(2, 24, 32, 4);
  EXPECT_EQ(label_tracks_by_mask(ts, masks, cam).object_id[0], 4);
}

// ---------------------------------------------------------------------------

TEST(ProjectIo, MinimalTwoFrameFixture) {
  const auto dir = fixtures::temp_dir("minimal");
  auto pair = fixtures::two_object_pair(2);
  save_project(dir, pair);
  const ClipPair loaded = load_project(dir);
  EXPECT_EQ(loaded.frames(), 2);
  EXPECT_EQ(loaded.source_tracks, pair.source_tracks);
  EXPECT_EQ(loaded.target_camera, pair.target_camera);
  EXPECT_EQ(loaded.source_video, pair.source_video);
}

TEST(ProjectIo, RoundTripIsBitIdentical) {
  const auto a = fixtures::temp_dir("rt_a");
  const auto b = fixtures::temp_dir("rt_b");
  auto pair = fixtures::two_object_pair(3);
  pair.depth_maps = DepthVideo(3, 24, 32, 2.5);
  pair.masks = LabelVideo(3, 24, 32, 1);
  pair.target_video = pair.source_video;
  Rng rng(2);
  for (auto& p : pair.source_tracks.positions) p += Vec3(rng.normal(), rng.normal(), 0) * 1e-3;
  save_project(a, pair);
  const auto loaded = load_project(a);
  save_project(b, loaded);
  for (const char* f : {"tracks.json", "camera.json", "target/tracks.json", "target/camera.json", "frames/000001.png",
                        "depth/000002.bin", "masks/000000.png"}) {
    std::ifstream fa(a / f, std::ios::binary), fb(b / f, std::ios::binary);
    std::string sa((std::istreambuf_iterator<char>(fa)), {}), sb((std::istreambuf_iterator<char>(fb)), {});
    EXPECT_FALSE(sa.empty()) << f;
    EXPECT_EQ(sa, sb) << f;
  }
  const auto again = load_project(b);
  EXPECT_EQ(again.source_tracks, loaded.source_tracks);
  EXPECT_EQ(again.source_tracks.positions, pair.source_tracks.positions);  // exact decimal round trip
  EXPECT_EQ(*again.depth_maps, *loaded.depth_maps);
}

TEST(ProjectIo, TrackCountMismatchingCameraIsShapeMismatch) {
  const auto dir = fixtures::temp_dir("mismatch");
  auto pair = fixtures::two_object_pair(3);
  save_project(dir, pair);
  auto j = tracks_to_json(pair.source_tracks.slice_frames(0, 2));
  io::write_json(dir / "tracks.json", j);
  try {
    load_project(dir);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::ShapeMismatch);
    EXPECT_NE(e.file().find("tracks.json"), std::string::npos);
    EXPECT_EQ(e.field(), "$.F");
  }
}

TEST(ProjectIo, SchemaViolationsNameField) {
  const auto dir = fixtures::temp_dir("schema");
  auto pair = fixtures::two_object_pair(2);
  save_project(dir, pair);
  auto j = io::read_json(dir / "camera.json");
  j[1]["fx"] = "wide";
  io::write_json(dir / "camera.json", j);
  try {
    load_project(dir);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::SchemaViolation);
    EXPECT_EQ(e.field(), "$[1].fx");
  }
  std::filesystem::remove(dir / "camera.json");
  try {
    load_project(dir);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::MissingFile);
  }
}

TEST(ProjectIo, SixteenBitDepthPngIsMillimeters) {
  const auto dir = fixtures::temp_dir("depthpng");
  auto pair = fixtures::two_object_pair(2);
  save_project(dir, pair);
  std::filesystem::create_directories(dir / "depth");
  for (int f = 0; f < 2; ++f) {
    PngImage img{32, 24, 1, 16, std::vector<std::uint16_t>(32 * 24, static_cast<std::uint16_t>(1500 + f))};
    write_png(dir / "depth" / frame_name(f), img);
  }
  const auto loaded = load_project(dir);
  ASSERT_TRUE(loaded.depth_maps);
  EXPECT_DOUBLE_EQ(loaded.depth_maps->at(1, 3, 4), 1.501);
}
