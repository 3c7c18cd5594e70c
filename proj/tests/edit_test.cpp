#include <gtest/gtest.h>

#include <cmath>

#include "fixtures.hpp"
#include "trackedit/edit.hpp"

using namespace trackedit;

namespace {

Keyframe key(int frame, const SimilarityTransform& t) { return {frame, t}; }

std::vector<Keyframe> constant(const SimilarityTransform& t) { return {key(0, t)}; }

SimilarityTransform yaw(double angle) {
  SimilarityTransform s;
  s.rotation = axis_angle(Vec3::UnitY(), angle);
  return s;
}

template <typename F>
ErrorCode code_of(F&& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "expected an error";
  return ErrorCode::IoError;
}

// 4×4 homogeneous form of a world-to-camera pose.
Eigen::Matrix4d mat4(const RigidPose& p) {
  Eigen::Matrix4d m = Eigen::Matrix4d::Identity();
  m.topLeftCorner<3, 3>() = p.rotation;
  m.topRightCorner<3, 1>() = p.translation;
  return m;
}

}  // namespace

// ---------------------------------------------------------------------------
// Selection

TEST(SelectTracks, BoxesMatchPerTrackProjectionOracle) {
  const ClipPair pair = fixtures::two_object_pair();
  const auto& cam = pair.target_camera;
  auto oracle = [&](int f, double x0, double y0, double x1, double y1) {
    std::vector<int> out;
    for (int n = 0; n < pair.target_tracks.count; ++n) {
      const Vec3 pc = cam[f].pose.rotation * pair.target_tracks.pos(f, n) + cam[f].pose.translation;
      const double u = cam[f].intrinsics.fx * pc.x() / pc.z() + cam[f].intrinsics.cx;
      const double v = cam[f].intrinsics.fy * pc.y() / pc.z() + cam[f].intrinsics.cy;
      if (pc.z() > 0 && u >= x0 && u < x1 && v >= y0 && v < y1) out.push_back(n);
    }
    return out;
  };
  // full frame: every in-frame track
  const auto full = oracle(2, 0, 0, pair.width(), pair.height());
  ASSERT_FALSE(full.empty());
  EXPECT_EQ(select_tracks(pair.target_tracks, cam, Selection::box_at(2, 0, 0, pair.width(), pair.height())), full);
  const auto left = oracle(1, 0, 0, 16, 24);
  ASSERT_FALSE(left.empty());
  ASSERT_LT(left.size(), full.size());
  EXPECT_EQ(select_tracks(pair.target_tracks, cam, Selection::box_at(1, 0, 0, 16, 24)), left);
}

TEST(SelectTracks, ObjectIdReturnsGeneratorIndices) {
  const auto scene = fixtures::two_object_scene();
  const auto cam = fixtures::sliding_camera(4, 0.0);
  EXPECT_EQ(select_tracks(scene.tracks, cam, Selection::object(2)), scene.object2);
  EXPECT_EQ(select_tracks(scene.tracks, cam, Selection::object(0)), scene.background);
}

TEST(SelectTracks, ZeroAreaBoxIsEmptySelection) {
  const auto scene = fixtures::two_object_scene();
  const auto cam = fixtures::sliding_camera(4, 0.0);
  EXPECT_EQ(code_of([&] { select_tracks(scene.tracks, cam, Selection::box_at(0, 5, 5, 5, 20)); }), ErrorCode::EmptySelection);
  EXPECT_EQ(code_of([&] { select_tracks(scene.tracks, cam, Selection::object(9)); }), ErrorCode::EmptySelection);
}

TEST(SelectTracks, IndexListIsSortedAndChecked) {
  const auto scene = fixtures::two_object_scene();
  const auto cam = fixtures::sliding_camera(4, 0.0);
  EXPECT_EQ(select_tracks(scene.tracks, cam, Selection::list({5, 1, 5, 3})), (std::vector<int>{1, 3, 5}));
  EXPECT_EQ(code_of([&] { select_tracks(scene.tracks, cam, Selection::list({99})); }), ErrorCode::InvalidArgument);
}

// ---------------------------------------------------------------------------
// Rigid edits

TEST(RigidEdit, IdentityIsBitExact) {
  const auto scene = fixtures::two_object_scene();
  const std::vector<Keyframe> keys{key(0, {}), key(3, {})};
  EXPECT_EQ(apply_rigid_edit(scene.tracks, scene.object1, keys), scene.tracks);
}

TEST(RigidEdit, ConstantTranslationShiftsExactly) {
  const auto scene = fixtures::two_object_scene();
  const TrackSet out = apply_rigid_edit(scene.tracks, scene.object1, constant(SimilarityTransform::translate({1, 0, 0})));
  for (int f = 0; f < scene.tracks.frames; ++f) {
    for (int i : scene.object1) EXPECT_EQ(out.pos(f, i), scene.tracks.pos(f, i) + Vec3(1, 0, 0));
    for (int i : scene.object2) EXPECT_EQ(out.pos(f, i), scene.tracks.pos(f, i));
    for (int i : scene.background) EXPECT_EQ(out.pos(f, i), scene.tracks.pos(f, i));
  }
  EXPECT_EQ(out.object_id, scene.tracks.object_id);
  EXPECT_EQ(out.existence, scene.tracks.existence);
}

TEST(RigidEdit, HalfTurnAboutCentroidIsIsometry) {
  const auto scene = fixtures::two_object_scene(4, 12);
  const TrackSet out = apply_rigid_edit(scene.tracks, scene.object1, constant(yaw(M_PI)));
  for (int f = 0; f < scene.tracks.frames; ++f) {
    const Vec3 c_in = centroid(scene.tracks, scene.object1, f);
    const Vec3 c_out = centroid(out, scene.object1, f);
    const Vec3 pivot = centroid(scene.tracks, scene.object1, 0);
    // The rotation is about the frame-0 centroid; the frame-f centroid maps accordingly.
    EXPECT_LT((c_out - (pivot + axis_angle(Vec3::UnitY(), M_PI) * (c_in - pivot))).norm(), 1e-9);
    if (f == 0) EXPECT_LT((c_out - c_in).norm(), 1e-9);
    for (int i : scene.object1)
      EXPECT_NEAR((out.pos(f, i) - c_out).norm(), (scene.tracks.pos(f, i) - c_in).norm(), 1e-9);
  }
}

TEST(RigidEdit, RotationPreservesPairwiseDistances) {
  const auto scene = fixtures::two_object_scene(4, 10);
  SimilarityTransform r;
  r.rotation = axis_angle(Vec3(0.3, -1.0, 0.4), 1.1);
  const TrackSet out = apply_rigid_edit(scene.tracks, scene.object2, constant(r), Vec3(0.2, -0.1, 1.0));
  for (int f = 0; f < scene.tracks.frames; ++f)
    for (int a : scene.object2)
      for (int b : scene.object2) {
        if (a == b) continue;
        const double d0 = (scene.tracks.pos(f, a) - scene.tracks.pos(f, b)).norm();
        const double d1 = (out.pos(f, a) - out.pos(f, b)).norm();
        EXPECT_LE(std::abs(d1 - d0), 1e-9 * d0);
      }
}

TEST(RigidEdit, KeyframesInterpolateBetweenAndHoldOutside) {
  const auto scene = fixtures::two_object_scene(5);
  const std::vector<Keyframe> keys{key(1, {}), key(3, SimilarityTransform::translate({0, 2, 0}))};
  const TrackSet out = apply_rigid_edit(scene.tracks, scene.object1, keys);
  const int i = scene.object1[0];
  EXPECT_EQ(out.pos(0, i), scene.tracks.pos(0, i));
  EXPECT_EQ(out.pos(1, i), scene.tracks.pos(1, i));
  EXPECT_NEAR(out.pos(2, i).y() - scene.tracks.pos(2, i).y(), 1.0, 1e-12);
  EXPECT_NEAR(out.pos(4, i).y() - scene.tracks.pos(4, i).y(), 2.0, 1e-12);
}

// ---------------------------------------------------------------------------
// LBS

TEST(LbsDeform, SingleHandleOverEverythingEqualsRigid) {
  const auto scene = fixtures::two_object_scene();
  std::vector<int> all(static_cast<std::size_t>(scene.tracks.count));
  std::iota(all.begin(), all.end(), 0);
  SimilarityTransform t = yaw(0.7);
  t.translation = Vec3(0.1, 0.2, -0.3);
  const std::vector<Keyframe> keys{key(0, {}), key(3, t)};
  const std::vector<LbsHandle> handles{{all, keys}};
  EXPECT_EQ(apply_lbs_deform(scene.tracks, handles), apply_rigid_edit(scene.tracks, all, keys));
}

TEST(LbsDeform, HandlePointsGetExactTransform) {
  const auto scene = fixtures::two_object_scene();
  const auto keys = constant(SimilarityTransform::translate({0, 0.5, 0}));
  const TrackSet out = apply_lbs_deform(scene.tracks, std::vector<LbsHandle>{{scene.object1, keys}}, 10.0);
  EXPECT_EQ(out.subset(scene.object1), apply_rigid_edit(scene.tracks, scene.object1, keys).subset(scene.object1));
}

TEST(LbsDeform, PointBeyondRadiusIsUnchanged) {
  const auto scene = fixtures::two_object_scene();
  const auto keys = constant(SimilarityTransform::translate({0, 0.5, 0}));
  // Background plane sits ≥ 3 m from object 1; a 0.5 m radius excludes it.
  const TrackSet out = apply_lbs_deform(scene.tracks, std::vector<LbsHandle>{{scene.object1, keys}}, 0.5);
  for (int f = 0; f < scene.tracks.frames; ++f)
    for (int i : scene.background) EXPECT_EQ(out.pos(f, i), scene.tracks.pos(f, i));
}

TEST(LbsDeform, OppositeHandlesCancelAtEquidistantPoint) {
  TrackSet ts(3, 5);
  const Vec3 pts[5] = {{-1, 0, 2}, {-1.2, 0, 2}, {1, 0, 2}, {1.2, 0, 2}, {0, 0.3, 2}};
  for (int f = 0; f < 3; ++f)
    for (int i = 0; i < 5; ++i) ts.pos(f, i) = pts[i];
  const std::vector<LbsHandle> handles{{{0, 1}, constant(SimilarityTransform::translate({1, 0, 0}))},
                                       {{2, 3}, constant(SimilarityTransform::translate({-1, 0, 0}))}};
  const TrackSet out = apply_lbs_deform(ts, handles, 5.0);
  for (int f = 0; f < 3; ++f) EXPECT_LT((out.pos(f, 4) - pts[4]).norm(), 1e-9);
  EXPECT_EQ(out.pos(0, 0), pts[0] + Vec3(1, 0, 0));
}

TEST(LbsDeform, WeightsSumToOneInsideRadiusAndZeroOutside) {
  const std::vector<std::vector<Vec3>> handles{{Vec3(0, 0, 0)}, {Vec3(1, 0, 0), Vec3(1, 1, 0)}};
  Rng rng(3);
  for (int k = 0; k < 200; ++k) {
    const Vec3 p(rng.uniform(-3, 3), rng.uniform(-3, 3), rng.uniform(-3, 3));
    const auto w = detail::lbs_weights(p, handles, 2.0);
    const double sum = w[0] + w[1];
    const bool any_inside = p.norm() <= 2.0 || (p - Vec3(1, 0, 0)).norm() <= 2.0 || (p - Vec3(1, 1, 0)).norm() <= 2.0;
    if (any_inside)
      EXPECT_NEAR(sum, 1.0, 1e-12);
    else
      EXPECT_EQ(sum, 0.0);
  }
}

TEST(LbsDeform, RegionLimitsTheEdit) {
  const auto scene = fixtures::two_object_scene();
  const auto keys = constant(SimilarityTransform::translate({0, 0.5, 0}));
  const TrackSet out = apply_lbs_deform(scene.tracks, std::vector<LbsHandle>{{{scene.object1[0]}, keys}}, 100.0, scene.object1);
  for (int f = 0; f < scene.tracks.frames; ++f) {
    for (int i : scene.object2) EXPECT_EQ(out.pos(f, i), scene.tracks.pos(f, i));
    for (int i : scene.object1) EXPECT_NE(out.pos(f, i), scene.tracks.pos(f, i));
  }
}

TEST(LbsDeform, OverlappingHandlesRejected) {
  const auto scene = fixtures::two_object_scene();
  const auto keys = constant({});
  const std::vector<LbsHandle> handles{{{0, 1}, keys}, {{1, 2}, keys}};
  EXPECT_EQ(code_of([&] { apply_lbs_deform(scene.tracks, handles); }), ErrorCode::InvalidArgument);
}

// ---------------------------------------------------------------------------
// Camera edits

TEST(CameraEdit, ZeroOffsetsAreBitExact) {
  const auto cam = fixtures::sliding_camera(5, 0.1);
  CameraEdit e;
  e.keys = {key(0, {}), key(4, {})};
  EXPECT_EQ(edit_camera_path(cam, e), cam);
}

TEST(CameraEdit, ConstantOffsetTranslationShiftsCenters) {
  CameraPath cam = fixtures::sliding_camera(5, 0.1);
  for (std::size_t f = 0; f < cam.size(); ++f)
    cam[f].pose = RigidPose::from_center(axis_angle(Vec3(0.2, 1, 0.1), 0.1 * f), cam[f].pose.center());
  CameraEdit e;
  e.keys = constant(SimilarityTransform::translate({0.3, -0.2, 0.5}));
  const CameraPath out = edit_camera_path(cam, e);
  Eigen::Matrix4d offset = Eigen::Matrix4d::Identity();
  offset.topRightCorner<3, 1>() = Vec3(0.3, -0.2, 0.5);
  for (std::size_t f = 0; f < cam.size(); ++f) {
    EXPECT_LT((out[f].pose.center() - (cam[f].pose.center() + Vec3(0.3, -0.2, 0.5))).norm(), 1e-12);
    // world-to-camera after = (offset · camera-to-world)^-1
    const Eigen::Matrix4d expected = (offset * mat4(cam[f].pose).inverse()).inverse();
    EXPECT_LT((mat4(out[f].pose) - expected).cwiseAbs().maxCoeff(), 1e-12);
    EXPECT_TRUE(out[f].pose.valid());
    EXPECT_EQ(out[f].intrinsics, cam[f].intrinsics);
  }
}

TEST(CameraEdit, AbsoluteOrbitCentersLieOnCircle) {
  const auto cam = fixtures::sliding_camera(12, 0.1);
  const double r = 2.5;
  CameraEdit e;
  e.mode = CameraMode::Absolute;
  for (int f = 0; f < 12; ++f) {
    const double a = 2.0 * M_PI * f / 12;
    const Vec3 c(r * std::sin(a), 0, -r * std::cos(a));
    SimilarityTransform c2w;
    c2w.rotation = axis_angle(Vec3::UnitY(), -a);  // looks at the origin
    c2w.translation = c;
    e.keys.push_back(key(f, c2w));
  }
  const CameraPath out = edit_camera_path(cam, e);
  for (std::size_t f = 0; f < out.size(); ++f) {
    const Vec3 c = out[f].pose.center();
    EXPECT_NEAR(std::hypot(c.x(), c.z()), r, 1e-9);
    EXPECT_NEAR(c.y(), 0.0, 1e-9);
    EXPECT_TRUE(out[f].pose.valid());
    EXPECT_GT(out[f].pose.apply(Vec3::Zero()).z(), 0.0);  // origin in front
  }
}

TEST(CameraEdit, IntrinsicsOverrideAndTracksUntouched) {
  ClipPair pair = fixtures::two_object_pair();
  EditOp op;
  op.kind = EditKind::Camera;
  op.keyframes = {KeyframeSpec{0, 1.0, {1, 0, 0, 0}, Vec3(0, 0, -0.5)}};
  op.intrinsics = IntrinsicsOverride{40, 41, 15, 11};
  const ClipPair before = pair;
  apply_op(pair, op);
  EXPECT_EQ(pair.target_tracks, before.target_tracks);
  EXPECT_EQ(pair.source_tracks, before.source_tracks);
  EXPECT_EQ(pair.source_camera, before.source_camera);
  EXPECT_EQ(pair.target_camera[0].intrinsics.fx, 40);
  EXPECT_EQ(pair.target_camera[0].intrinsics.cy, 11);
  EXPECT_EQ(pair.target_camera[0].intrinsics.width, before.target_camera[0].intrinsics.width);
}

// ---------------------------------------------------------------------------
// Removal

TEST(RemoveObject, ProjectionsLeaveFrameAndExistenceClears) {
  const ClipPair pair = fixtures::two_object_pair(6);
  const TrackSet out = remove_object(pair.target_tracks, 1, pair.target_camera);
  const auto idx = pair.target_tracks.indices_of(1);
  for (int f = 0; f < out.frames; ++f) {
    const CameraFrame& c = pair.target_camera[f];
    for (int i : idx) {
      const ScreenPoint sp = project(out.pos(f, i), c);
      EXPECT_GE(sp.x / c.intrinsics.width, 2.0);
      EXPECT_EQ(out.existence[out.index(f, i)], 0);
      EXPECT_NEAR(c.pose.apply(out.pos(f, i)).z(), c.pose.apply(pair.target_tracks.pos(f, i)).z(), 1e-12);
    }
  }
}

TEST(RemoveObject, OtherTracksBitIdentical) {
  const ClipPair pair = fixtures::two_object_pair();
  const TrackSet out = remove_object(pair.target_tracks, 1, pair.target_camera);
  std::vector<int> others;
  for (int n = 0; n < out.count; ++n)
    if (out.object_id[n] != 1) others.push_back(n);
  EXPECT_EQ(out.subset(others), pair.target_tracks.subset(others));
  EXPECT_EQ(out.object_id, pair.target_tracks.object_id);
}

TEST(RemoveObject, UnknownObject) {
  const ClipPair pair = fixtures::two_object_pair();
  EXPECT_EQ(code_of([&] { remove_object(pair.target_tracks, 7, pair.target_camera); }), ErrorCode::UnknownObject);
}

// ---------------------------------------------------------------------------
// Duplication

TEST(DuplicateObject, IdentityAppendsVerbatimCopies) {
  ClipPair pair = fixtures::two_object_pair();
  pair.target_tracks = apply_rigid_edit(pair.target_tracks, pair.target_tracks.indices_of(2),
                                        constant(SimilarityTransform::translate({0, 0.1, 0})));
  const auto idx = pair.target_tracks.indices_of(2);
  const auto r = duplicate_object(pair.source_tracks, pair.target_tracks, 2, constant({}));
  const int n0 = pair.source_tracks.count, k = static_cast<int>(idx.size());
  ASSERT_EQ(r.source.count, n0 + k);
  ASSERT_EQ(r.target.count, n0 + k);
  for (int j = 0; j < k; ++j) {
    EXPECT_EQ(r.source.object_id[n0 + j], 3);
    EXPECT_EQ(r.target.object_id[n0 + j], 3);
    for (int f = 0; f < pair.frames(); ++f) {
      EXPECT_EQ(r.source.pos(f, n0 + j), pair.source_tracks.pos(f, idx[j]));
      EXPECT_EQ(r.target.pos(f, n0 + j), pair.target_tracks.pos(f, idx[j]));
    }
  }
  EXPECT_EQ(r.source.subset(std::vector<int>(idx)), pair.source_tracks.subset(idx));
}

TEST(DuplicateObject, TranslationShiftsAppendedProjections) {
  const ClipPair pair = fixtures::two_object_pair();
  const Vec3 t(0.2, -0.1, 0.0);
  const auto r = duplicate_object(pair.source_tracks, pair.target_tracks, 1, constant(SimilarityTransform::translate(t)));
  const auto idx = pair.target_tracks.indices_of(1);
  const int n0 = pair.target_tracks.count;
  for (int f = 0; f < pair.frames(); ++f) {
    const CameraFrame& c = pair.target_camera[f];
    for (std::size_t j = 0; j < idx.size(); ++j) {
      // pinhole by hand on the shifted original
      const Vec3 pw = pair.target_tracks.pos(f, idx[j]) + t;
      const Vec3 pc = c.pose.rotation * pw + c.pose.translation;
      const ScreenPoint sp = project(r.target.pos(f, n0 + static_cast<int>(j)), c);
      EXPECT_NEAR(sp.x, c.intrinsics.fx * pc.x() / pc.z() + c.intrinsics.cx, 1e-9);
      EXPECT_NEAR(sp.y, c.intrinsics.fy * pc.y() / pc.z() + c.intrinsics.cy, 1e-9);
    }
  }
}

TEST(DuplicateObject, UnknownObject) {
  const ClipPair pair = fixtures::two_object_pair();
  EXPECT_EQ(code_of([&] { duplicate_object(pair.source_tracks, pair.target_tracks, 5, constant({})); }), ErrorCode::UnknownObject);
}

// ---------------------------------------------------------------------------
// Transfer

TEST(TransferTracks, OriginalReplacementIsNoOp) {
  const auto scene = fixtures::two_object_scene();
  EXPECT_EQ(transfer_tracks(scene.tracks, 1, scene.tracks.subset(scene.object1)), scene.tracks);
}

TEST(TransferTracks, OffsetReplacementEqualsRigidTranslation) {
  const auto scene = fixtures::two_object_scene();
  TrackSet rep = scene.tracks.subset(scene.object1);
  for (auto& p : rep.positions) p = p + Vec3(0, 1, 0);
  EXPECT_EQ(transfer_tracks(scene.tracks, 1, rep),
            apply_rigid_edit(scene.tracks, scene.object1, constant(SimilarityTransform::translate({0, 1, 0}))));
}

TEST(TransferTracks, GeneratedSwapMatchesExactly) {
  const auto scene = fixtures::two_object_scene(4, 5, 6, 1);
  const auto other = fixtures::two_object_scene(4, 5, 6, 99);  // same layout, different pose
  const TrackSet rep = other.tracks.subset(other.object2);
  const TrackSet out = transfer_tracks(scene.tracks, 2, rep);
  EXPECT_EQ(out.subset(scene.object2).positions, rep.positions);
  EXPECT_EQ(out.subset(scene.object1), scene.tracks.subset(scene.object1));
  EXPECT_EQ(out.existence, scene.tracks.existence);
  EXPECT_EQ(out.object_id, scene.tracks.object_id);
}

TEST(TransferTracks, CountMismatch) {
  const auto scene = fixtures::two_object_scene();
  EXPECT_EQ(code_of([&] { transfer_tracks(scene.tracks, 1, scene.tracks.subset(std::vector<int>{0, 1})); }),
            ErrorCode::CountMismatch);
  EXPECT_EQ(code_of([&] { transfer_tracks(scene.tracks, 1, scene.tracks.subset(scene.object1).slice_frames(0, 2)); }),
            ErrorCode::CountMismatch);
}

// ---------------------------------------------------------------------------
// Partial tracks

TEST(DropTracks, DropNoneIsIdentity) {
  const auto scene = fixtures::two_object_scene();
  const auto r = drop_tracks(scene.tracks, scene.tracks, {});
  EXPECT_EQ(r.source, scene.tracks);
  EXPECT_EQ(r.target, scene.tracks);
}

TEST(DropTracks, DroppingAnObjectReducesBothSides) {
  const auto scene = fixtures::two_object_scene(4, 7);
  const auto r = drop_tracks(scene.tracks, scene.tracks, scene.object2);
  EXPECT_EQ(r.source.count, scene.tracks.count - 7);
  EXPECT_EQ(r.target.count, scene.tracks.count - 7);
  EXPECT_TRUE(r.target.indices_of(2).empty());
}

TEST(DropTracks, SelectionAfterDropIsRemapped) {
  const auto scene = fixtures::two_object_scene();
  const std::vector<int> dropped{0, 2};
  const auto r = drop_tracks(scene.tracks, scene.tracks, dropped);
  const auto cam = fixtures::sliding_camera(4, 0.0);
  const auto idx = select_tracks(r.target, cam, Selection::object(1));
  ASSERT_EQ(idx.size(), scene.object1.size() - 2);
  std::vector<int> expected_old;
  for (int i : scene.object1)
    if (i != 0 && i != 2) expected_old.push_back(i);
  for (std::size_t j = 0; j < idx.size(); ++j)
    for (int f = 0; f < 4; ++f) EXPECT_EQ(r.target.pos(f, idx[j]), scene.tracks.pos(f, expected_old[j]));
}

TEST(DropTracks, DroppingEverythingIsWouldBeEmpty) {
  const auto scene = fixtures::two_object_scene();
  std::vector<int> all(static_cast<std::size_t>(scene.tracks.count));
  std::iota(all.begin(), all.end(), 0);
  EXPECT_EQ(code_of([&] { drop_tracks(scene.tracks, scene.tracks, all); }), ErrorCode::WouldBeEmpty);
}

// ---------------------------------------------------------------------------
// Background freezing

TEST(FreezeBackground, StaticBackgroundUnchanged) {
  const auto scene = fixtures::two_object_scene();
  EXPECT_EQ(freeze_background(scene.tracks, 1), scene.tracks);
}

TEST(FreezeBackground, JitteredBackgroundBecomesStatic) {
  auto scene = fixtures::two_object_scene(6);
  Rng rng(4);
  for (int f = 0; f < 6; ++f)
    for (int i : scene.background) scene.tracks.pos(f, i) += Vec3(rng.normal(0, 0.01), rng.normal(0, 0.01), rng.normal(0, 0.01));
  const TrackSet out = freeze_background(scene.tracks, 2);
  for (int i : scene.background)
    for (int f = 0; f < 6; ++f) EXPECT_EQ(out.pos(f, i), scene.tracks.pos(2, i));
  EXPECT_EQ(out.subset(scene.object1), scene.tracks.subset(scene.object1));
  EXPECT_EQ(out.subset(scene.object2), scene.tracks.subset(scene.object2));
}

// ---------------------------------------------------------------------------
// EditSpec documents

namespace {

const char* kSpecText = R"({
  "ops": [
    {"selection": {"object_id": 1}, "kind": "rigid",
     "keyframes": [{"frame": 0}, {"t": [0.5, 0, 0], "frame": 3, "quat": [0.9238795325112867, 0, 0.3826834323650898, 0]}]},
    {"kind": "camera", "keyframes": [{"frame": 0, "t": [0, 0, -0.2]}], "params": {"mode": "relative"}},
    {"kind": "lbs", "selection": {"object_id": 2},
     "params": {"handles": [{"selection": {"indices": [5]}, "keyframes": [{"frame": 1, "t": [0, 0.1, 0]}]}]}},
    {"kind": "freeze_background", "params": {"anchor_frame": 0}},
    {"kind": "drop", "selection": {"keyframe": 0, "box": [0, 0, 16, 24]}}
  ]
})";

}  // namespace

TEST(EditSpec, CanonicalFormRoundTripsByteIdentically) {
  const EditSpec a = editspec_from_string(kSpecText);
  const std::string canon = canonical_json(a);
  const EditSpec b = editspec_from_string(canon);
  EXPECT_EQ(a, b);
  EXPECT_EQ(canonical_json(b), canon);
  EXPECT_EQ(canon.find(' '), std::string::npos);
  EXPECT_EQ(canon.rfind("{\"ops\":[{\"keyframes\":", 0), 0u);  // keys sorted
}

TEST(EditSpec, HashIsSha256OfCanonicalBytes) {
  EXPECT_EQ(sha256_hex("abc"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
  const EditSpec s = editspec_from_string(kSpecText);
  EXPECT_EQ(editspec_hash(s), sha256_hex(canonical_json(s)));
  EXPECT_EQ(editspec_hash(s).size(), 64u);
  // whitespace and key order in the input do not matter
  EXPECT_EQ(editspec_hash(editspec_from_string(canonical_json(s))), editspec_hash(s));
}

TEST(EditSpec, SchemaErrorsNameTheField) {
  auto field_of = [](const std::string& text) {
    try {
      editspec_from_string(text);
    } catch (const Error& e) {
      EXPECT_EQ(e.code(), ErrorCode::SchemaViolation);
      return e.field();
    }
    return std::string("<no error>");
  };
  EXPECT_EQ(field_of(R"({"ops":[{"kind":"warp","selection":{"object_id":1}}]})"), "$.ops[0].kind");
  EXPECT_EQ(field_of(R"({"ops":[{"kind":"rigid","selection":{"object_id":1},"keyframes":[{"frame":2},{"frame":2}]}]})"),
            "$.ops[0].keyframes[1].frame");
  EXPECT_EQ(field_of(R"({"ops":[{"kind":"rigid","keyframes":[{"frame":0}]}]})"), "$.ops[0].selection");
  EXPECT_EQ(field_of(R"({"ops":[{"kind":"remove","selection":{"indices":[1]}}]})"), "$.ops[0].selection");
  EXPECT_EQ(field_of(R"({"ops":[{"kind":"rigid","selection":{"object_id":1},"keyframes":[{"frame":0,"scale":-1}]}]})"),
            "$.ops[0].keyframes[0].scale");
  EXPECT_EQ(field_of(R"({"ops":[{"kind":"drop","selection":{"object_id":1},"bogus":1}]})"), "$.ops[0].bogus");
  EXPECT_EQ(field_of(R"({"ops":3})"), "$.ops");
}

TEST(EditSpec, BoundsAreCheckedAgainstTheClip) {
  const ClipPair pair = fixtures::two_object_pair();
  auto field_of = [&](const std::string& text) {
    try {
      apply_editspec(pair, editspec_from_string(text));
    } catch (const Error& e) {
      return e.field();
    }
    return std::string("<no error>");
  };
  EXPECT_EQ(field_of(R"({"ops":[{"kind":"rigid","selection":{"object_id":1},"keyframes":[{"frame":4}]}]})"),
            "$.ops[0].keyframes[0].frame");
  EXPECT_EQ(field_of(R"({"ops":[{"kind":"drop","selection":{"keyframe":0,"box":[0,0,33,4]}}]})"), "$.ops[0].selection.box");
}

TEST(EditSpec, EmptySpecIsIdentity) {
  const ClipPair pair = fixtures::two_object_pair();
  const ClipPair out = apply_editspec(pair, editspec_from_string(R"({"ops":[]})"));
  EXPECT_EQ(out.target_tracks, pair.target_tracks);
  EXPECT_EQ(out.target_camera, pair.target_camera);
  EXPECT_EQ(out.source_tracks, pair.source_tracks);
}

TEST(EditSpec, ApplicationIsDeterministicAndOrdered) {
  const ClipPair pair = fixtures::two_object_pair();
  const EditSpec s = editspec_from_string(kSpecText);
  const ClipPair a = apply_editspec(pair, s), b = apply_editspec(pair, s);
  EXPECT_EQ(a.target_tracks, b.target_tracks);
  EXPECT_EQ(a.source_tracks, b.source_tracks);
  EXPECT_EQ(a.target_camera, b.target_camera);

  // The same ops applied one at a time by hand.
  ClipPair m = pair;
  for (const auto& op : s.ops) apply_op(m, op);
  EXPECT_EQ(m.target_tracks, a.target_tracks);

  // Order matters: translate-then-rotate differs from rotate-then-translate.
  const char* t_then_r = R"({"ops":[
    {"kind":"rigid","selection":{"object_id":1},"keyframes":[{"frame":0,"t":[1,0,0]}]},
    {"kind":"rigid","selection":{"object_id":1},"keyframes":[{"frame":0,"quat":[0,0,1,0]}],"params":{"pivot":[0,0,0]}}]})";
  const char* r_then_t = R"({"ops":[
    {"kind":"rigid","selection":{"object_id":1},"keyframes":[{"frame":0,"quat":[0,0,1,0]}],"params":{"pivot":[0,0,0]}},
    {"kind":"rigid","selection":{"object_id":1},"keyframes":[{"frame":0,"t":[1,0,0]}]}]})";
  const ClipPair x = apply_editspec(pair, editspec_from_string(t_then_r));
  const ClipPair y = apply_editspec(pair, editspec_from_string(r_then_t));
  const int i = pair.target_tracks.indices_of(1)[0];
  EXPECT_NEAR((x.target_tracks.pos(0, i) - y.target_tracks.pos(0, i)).norm(), 2.0, 1e-9);
}

TEST(EditSpec, DuplicateAndTransferThroughSpec) {
  const ClipPair pair = fixtures::two_object_pair();
  TrackSet rep = pair.target_tracks.subset(pair.target_tracks.indices_of(2));
  for (auto& p : rep.positions) p.y() += 0.25;
  EditSpec s;
  EditOp dup;
  dup.kind = EditKind::Duplicate;
  dup.selection = Selection::object(1);
  dup.keyframes = {KeyframeSpec{0, 1.0, {1, 0, 0, 0}, Vec3(0.3, 0, 0)}};
  EditOp tr;
  tr.kind = EditKind::Transfer;
  tr.selection = Selection::object(2);
  tr.replacement = rep;
  s.ops = {dup, tr};
  const EditSpec parsed = editspec_from_string(canonical_json(s));
  EXPECT_EQ(parsed, s);
  const ClipPair out = apply_editspec(pair, parsed);
  EXPECT_EQ(out.source_tracks.count, pair.source_tracks.count + 5);
  EXPECT_EQ(out.target_tracks.subset(out.target_tracks.indices_of(2)).positions, rep.positions);
}
