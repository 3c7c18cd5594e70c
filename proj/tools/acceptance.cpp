// Acceptance suite: one PASS/FAIL line per primary criterion.
//
//   acceptance --cli <path to trackedit> [--skip-toy] [--work <dir>]

#include <time.h>

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <map>
#include <mutex>
#include <numeric>
#include <sstream>
#include <thread>

#include "fixtures.hpp"
#include "reference_nn.hpp"
#include "trackedit/augment.hpp"
#include "trackedit/flow.hpp"
#include "trackedit/metrics.hpp"
#include "trackedit/preview.hpp"
#include "trackedit/toy_train.hpp"

using namespace trackedit;
using nn::Mat;

namespace {

std::string sci(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2e", v);
  return buf;
}

std::string fixed(double v, int digits = 2) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

/// Conjunction of named checks with a short summary of each.
struct Tally {
  bool ok = true;
  std::vector<std::string> parts;
  void check(bool c, const std::string& summary) {
    ok = ok && c;
    parts.push_back(c ? summary : summary + " (FAILED)");
  }
  std::string str() const {
    std::string s;
    for (std::size_t i = 0; i < parts.size(); ++i) s += (i ? "; " : "") + parts[i];
    return s;
  }
};

double thread_cpu_seconds() {
  timespec ts{};
  clock_gettime(CLOCK_THREAD_CPUTIME_ID, &ts);
  return ts.tv_sec + ts.tv_nsec * 1e-9;
}

int g_failed = 0;

void report(const std::string& name, bool ok, const std::string& detail) {
  std::printf("[%s] %s: %s\n", ok ? "PASS" : "FAIL", name.c_str(), detail.c_str());
  std::fflush(stdout);
  g_failed += !ok;
}

/// Runs `body`, then appends the runtime check against `budget_s` (none if <= 0).
void criterion(const std::string& name, double budget_s, const std::function<void(Tally&)>& body) {
  Tally t;
  const auto t0 = std::chrono::steady_clock::now();
  try {
    body(t);
  } catch (const std::exception& e) {
    t.check(false, std::string("threw: ") + e.what());
  }
  const double s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  if (budget_s > 0)
    t.check(s < budget_s, "runtime " + fixed(s) + " s < " + fixed(budget_s, 0) + " s");
  else
    t.parts.push_back("runtime " + fixed(s) + " s");
  report(name, t.ok, t.str());
}

Mat<double> random_mat(Eigen::Index r, Eigen::Index c, Rng& rng, double lo = -1, double hi = 1) {
  Mat<double> m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.uniform(lo, hi);
  return m;
}

// ---------------------------------------------------------------------------
// Geometry

void geometry(Tally& t) {
  Rng rng(5);
  double worst_rt = 0;
  for (int i = 0; i < 1000; ++i) {
    RigidPose pose;
    pose.rotation = Eigen::Quaterniond(rng.normal(), rng.normal(), rng.normal(), rng.normal()).normalized().toRotationMatrix();
    pose.translation = Vec3(rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1));
    CameraIntrinsics k{rng.uniform(200, 800), rng.uniform(200, 800), rng.uniform(100, 540), rng.uniform(100, 380), 640, 480};
    const double x = rng.uniform(-100, 740), y = rng.uniform(-100, 580), d = rng.uniform(0.1, 50);
    const ScreenPoint sp = project(unproject(x, y, d, k, pose), k, pose);
    worst_rt = std::max({worst_rt, std::abs(sp.x - x) / std::max(1.0, std::abs(x)), std::abs(sp.y - y) / std::max(1.0, std::abs(y)),
                         std::abs(sp.depth - d) / d});
  }
  t.check(worst_rt < 1e-9, "round-trip max rel err " + sci(worst_rt) + " < 1e-9 (1000 samples)");

  double worst_h = 0;
  int fitted = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    std::array<Correspondence, 4> c;
    for (auto& x : c) {
      x.src = Vec2(rng.uniform(0, 640), rng.uniform(0, 480));
      x.dst = x.src + Vec2(rng.uniform(-40, 40), rng.uniform(-40, 40));
    }
    try {
      const Homography h = fit_homography(c);
      ++fitted;
      for (const auto& x : c) worst_h = std::max(worst_h, (h.apply(x.src) - x.dst).norm());
    } catch (const Error& e) {
      if (e.code() != ErrorCode::DegenerateConfiguration) throw;
    }
  }
  t.check(worst_h < 1e-8 && fitted > 990, "DLT residual " + sci(worst_h) + " px < 1e-8 (" + std::to_string(fitted) + "/1000 fitted)");

  bool in_range = true, monotone = true;
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<double> depths(500);
    for (auto& d : depths) d = std::exp(rng.uniform(-2, 4));
    depths[0] = 1e-4;
    const auto z = normalize_disparity(depths);
    std::vector<int> order(depths.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](int a, int b) { return depths[a] < depths[b]; });
    for (std::size_t i = 0; i < z.size(); ++i) in_range = in_range && z[i] >= 0 && z[i] <= 1;
    for (std::size_t i = 1; i < order.size(); ++i) monotone = monotone && z[order[i]] <= z[order[i - 1]];
  }
  t.check(in_range && monotone, std::string("disparity in [0,1] ") + (in_range ? "yes" : "no") + ", monotone " + (monotone ? "yes" : "no"));
}

// ---------------------------------------------------------------------------
// Conditioner

ConditionerConfig small_conditioner() {
  ConditionerConfig c;
  c.d = 8;
  c.heads = 2;
  c.pe.dim = 8;
  return c;
}

Mat<double> random_coords(int f, int N, Rng& rng) {
  Mat<double> m(Eigen::Index(f) * N, 4);
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    m.row(r) << rng.uniform(-0.1, 1.1), rng.uniform(-0.1, 1.1), rng.uniform(), double(rng.bernoulli(0.8));
  return m;
}

TokenGrid<double> random_grid(int f, int h, int w, int d, Rng& rng) {
  TokenGrid<double> g(f, h, w, d);
  g.data = random_mat(g.data.rows(), d, rng);
  return g;
}

Mat<double> permute_tracks(const Mat<double>& m, int f, const std::vector<int>& perm) {
  const int N = static_cast<int>(perm.size());
  Mat<double> out(m.rows(), m.cols());
  for (int k = 0; k < f; ++k)
    for (int n = 0; n < N; ++n) out.row(k * N + n) = m.row(k * N + perm[n]);
  return out;
}

void conditioner(Tally& t) {
  Rng rng(5);
  nn::CrossAttention<double> a(8, 8, 2);
  a.init(rng);
  const Mat<double> q = random_mat(3, 8, rng), k = random_mat(2, 8, rng), v = random_mat(2, 8, rng);
  nn::CrossAttention<double>::Cache ac;
  const double d_attend = ref::max_abs_diff(ref::attend(ref::from(q), ref::from(k), ref::from(v), a), a.forward(q, k, v, ac));
  t.check(d_attend < 1e-12, "attend vs scalar oracle " + sci(d_attend) + " < 1e-12");

  {
    Conditioner<double> cond(small_conditioner(), 19);
    Rng r(19);
    const int f = 2, N = 3, h = 4, w = 4;
    const auto vid = random_grid(f, h, w, 8, r);
    const Mat<double> src = random_coords(f, N, r), tgt = random_coords(f, N, r);
    typename Conditioner<double>::Cache c;
    const auto out = cond.forward(vid, src, tgt, c);
    const auto o = ref::conditioner(cond, ref::from(vid.data), ref::from(src), ref::from(tgt), f, h, w);
    const double d = std::max(ref::max_abs_diff(o.src, out.src.data), ref::max_abs_diff(o.tgt, out.tgt.data));
    t.check(d < 1e-10, "full forward vs oracle " + sci(d) + " < 1e-10");
  }
  {
    Conditioner<double> cond(small_conditioner(), 6);
    Rng r(6);
    typename Conditioner<double>::Cache c;
    cond.forward(random_grid(3, 4, 4, 8, r), random_coords(3, 5, r), random_coords(3, 5, r), c);
    double worst = 0;
    auto rows = [&](const Mat<double>& p) {
      for (Eigen::Index i = 0; i < p.rows(); ++i) worst = std::max(worst, std::abs(p.row(i).sum() - 1.0));
    };
    for (const auto& tr : c.sample.tracks) {
      for (const auto& p : tr.probs) rows(p);
      for (const auto& bc : tr.blocks)
        for (const auto& p : bc.core.probs) rows(p);
    }
    for (const auto* sc : {&c.splat_src, &c.splat_tgt})
      for (const auto& fc : sc->frames)
        for (const auto& p : fc.core.probs) rows(p);
    t.check(worst <= 1e-6, "softmax row sums |1 - s| " + sci(worst) + " <= 1e-6");
  }
  {
    Conditioner<double> cond(small_conditioner(), 9);
    Rng r(9);
    const int f = 3, N = 7, h = 4, w = 4;
    const Mat<double> coords = random_coords(f, N, r), vid = random_mat(f * h * w, 8, r), tt = random_mat(f * N, 8, r);
    std::vector<int> perm(N);
    std::iota(perm.begin(), perm.end(), 0);
    r.shuffle(perm.begin(), perm.end());
    const Mat<double> grid = build_grid_key<double>(h, w, cond.cfg.pe);
    const Mat<double> pe = posenc_rows<double>(coords, cond.cfg.pe);
    const Mat<double> pe_perm = posenc_rows<double>(permute_tracks(coords, f, perm), cond.cfg.pe);
    typename Conditioner<double>::SampleCache s1, s2;
    const Mat<double> sa = cond.sample_context(pe, N, grid, vid, f, s1);
    const Mat<double> sb = cond.sample_context(pe_perm, N, grid, vid, f, s2);
    t.check(sb == permute_tracks(sa, f, perm), std::string("sampling permutation-equivariant bit-exact ") + (sb == permute_tracks(sa, f, perm) ? "yes" : "no"));
    typename Conditioner<double>::SplatCache c;
    const Mat<double> pa = cond.splat(tt, pe, N, grid, f, c);
    const Mat<double> pb = cond.splat(permute_tracks(tt, f, perm), pe_perm, N, grid, f, c);
    const double d = (pa - pb).cwiseAbs().maxCoeff();
    t.check(d < 1e-9, "splatting permutation-invariant " + sci(d) + " < 1e-9");
  }
}

// ---------------------------------------------------------------------------
// Gradients

void gradients(Tally& t) {
  FlowModelConfig cfg = FlowModelConfig::toy(8, 2, 2, PatchSize{1, 2, 2});
  cfg.conditioner.pe.dim = 8;
  cfg.denoiser.pos.dim = 8;
  cfg.denoiser.time_dim = 8;
  Rng rng(11);
  FlowModel<double> model(cfg, 11);
  FlowSample<double> s;
  s.dims = {2, 4, 4};
  s.source = random_mat(s.dims.count(), cfg.patch.dim(), rng);
  s.src_in.resize(6, 4);
  s.tgt_in.resize(6, 4);
  for (int r = 0; r < 6; ++r) {
    s.src_in.row(r) << rng.uniform(), rng.uniform(), rng.uniform(), double(r != 4);
    s.tgt_in.row(r) << rng.uniform(), rng.uniform(), rng.uniform(), double(r != 1);
  }
  const Mat<double> x_t = random_mat(s.dims.count(), cfg.patch.dim(), rng);
  const Mat<double> weights = random_mat(s.dims.count(), cfg.patch.dim(), rng);
  model.visit([&](const std::string& name, nn::Param<double>& prm) {
    if (name.find("ln") != std::string::npos || name.find("norm") != std::string::npos)
      for (Eigen::Index i = 0; i < prm.value.size(); ++i) prm.value.data()[i] += rng.uniform(-0.3, 0.3);
  });
  const double time = 0.37;
  auto loss = [&] {
    typename FlowModel<double>::Cache c;
    return (model.forward(s, x_t, time, c).array() * weights.array()).sum();
  };
  nn::zero_grads<double>(model);
  typename FlowModel<double>::Cache c;
  model.forward(s, x_t, time, c);
  model.backward(weights, c);
  constexpr double eps = 1e-5;
  double worst = 0;
  int values = 0, tensors = 0, conditioner_tensors = 0;
  std::string worst_name;
  model.visit([&](const std::string& name, nn::Param<double>& prm) {
    ++tensors;
    conditioner_tensors += name.rfind("conditioner", 0) == 0;
    for (Eigen::Index i = 0; i < prm.value.size(); ++i) {
      double& v = prm.value.data()[i];
      const double keep = v;
      v = keep + eps;
      const double up = loss();
      v = keep - eps;
      const double down = loss();
      v = keep;
      const double num = (up - down) / (2 * eps), an = prm.grad.data()[i];
      // Floor of 1e-5 on the denominator: central differences carry ~1e-10 roundoff.
      const double e = std::abs(an - num) / std::max({std::abs(an), std::abs(num), 1e-5});
      if (e > worst) {
        worst = e;
        worst_name = name;
      }
      ++values;
    }
  });
  t.check(worst < 1e-4, "max rel err " + sci(worst) + " < 1e-4 over " + std::to_string(values) + " values in " +
                            std::to_string(tensors) + " tensors (" + std::to_string(conditioner_tensors) + " conditioner), worst " +
                            worst_name);
  t.check(conditioner_tensors > 0 && tensors > conditioner_tensors, "conditioner and denoiser both covered");
}

// ---------------------------------------------------------------------------
// Augmentation

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

Mat3 fundamental(const CameraFrame& a, const CameraFrame& b) {
  const Mat3 r = b.pose.rotation * a.pose.rotation.transpose();
  const Vec3 tr = b.pose.translation - r * a.pose.translation;
  return kmat(b.intrinsics).inverse().transpose() * skew(tr) * r * kmat(a.intrinsics).inverse();
}

ClipPair augment_fixture(int frames, int n, std::uint64_t seed) {
  Rng rng(seed);
  ClipPair p;
  p.source_video = VideoClip(frames, 24, 32, 0.5);
  p.source_camera = fixtures::sliding_camera(frames, 0.0);
  for (int f = 0; f < frames; ++f)
    p.target_camera.frames.push_back(
        {fixtures::intrinsics(),
         RigidPose::from_center(Eigen::AngleAxisd(0.05 + 0.02 * f, Vec3(0.2, 1, 0.1).normalized()).toRotationMatrix(),
                                Vec3(0.3 + 0.05 * f, 0.1, -0.2))});
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

int changed_tracks(const ProjectedTracks& a, const ProjectedTracks& b) {
  int out = 0;
  for (int n = 0; n < a.count; ++n)
    for (int f = 0; f < a.frames; ++f)
      if (a.at(f, n) != b.at(f, n)) {
        ++out;
        break;
      }
  return out;
}

void augmentation(Tally& t) {
  const ClipPair p = augment_fixture(6, 200, 3);
  AugmentConfig c;
  c.epipolar_sigma = 0.2;
  c.epipolar_fraction = 0.1;
  double src_err = 0, line_err = 0, moved = 0;
  for (std::uint64_t s = 0; s < 20; ++s) {
    const TrackSet out = epipolar_jitter(p, c, Rng(s));
    for (int f = 0; f < out.frames; ++f) {
      const Mat3 F = fundamental(p.source_camera[f], p.target_camera[f]);
      for (int n = 0; n < out.count; ++n) {
        const ScreenPoint a0 = project(p.target_tracks.pos(f, n), p.source_camera[f]);
        const ScreenPoint a1 = project(out.pos(f, n), p.source_camera[f]);
        src_err = std::max(src_err, std::hypot(a0.x - a1.x, a0.y - a1.y));
        const Vec3 line = F * Vec3(a0.x, a0.y, 1.0);
        const ScreenPoint b = project(out.pos(f, n), p.target_camera[f]);
        const ScreenPoint b0 = project(p.target_tracks.pos(f, n), p.target_camera[f]);
        line_err = std::max(line_err, std::abs(line.x() * b.x + line.y() * b.y + line.z()) / std::hypot(line.x(), line.y()));
        moved = std::max(moved, std::hypot(b.x - b0.x, b.y - b0.y));
      }
    }
  }
  t.check(src_err < 1e-6, "epipolar: source projection drift " + sci(src_err) + " px < 1e-6");
  t.check(line_err < 1e-6 && moved > 0.1, "distance to oracle epipolar line " + sci(line_err) + " px < 1e-6 (max move " + fixed(moved) + " px)");

  const AugmentConfig none = AugmentConfig::none();
  const ProjectedTracks pt = random_projected(5, 100, 1);
  const VideoClip v = fixtures::two_object_pair(16).source_video;
  const AugmentedSample id = augment_pair(p, none);
  const bool identities = epipolar_jitter(p, none, Rng(1)) == p.target_tracks && homography_perturb(pt, none, Rng(1)) == pt &&
                          linear_drift(pt, none, Rng(1)) == pt && frame_dropout(v, none, Rng(1)) == v &&
                          id.source_video == p.source_video && id.target_tracks3d == p.target_tracks &&
                          id.target_tracks == project_pair(p).target && !id.flipped;
  t.check(identities, std::string("zero-magnitude perturbations exact identities ") + (identities ? "yes" : "no"));

  const ClipPair cp = augment_fixture(4, 100, 5);
  const ProjectedTracks cpt = random_projected(4, 100, 8);
  const VideoClip clip(16, 2, 2, 1.0);
  const AugmentConfig d;
  ClipPolicy pol;
  pol.frames = 9;
  pol.fps = 2;
  AugmentConfig overlap = d;
  overlap.overlap_pair_fraction = 1;
  int worst_tracks = 0, worst_frames = 0, worst_overlap = 0;
  Rng orng(2);
  for (std::uint64_t s = 0; s < 1000; ++s) {
    const Rng r(s);
    const TrackSet e = epipolar_jitter(cp, d, r.split("e"));
    int moved_tracks = 0;
    for (int n = 0; n < e.count; ++n)
      for (int f = 0; f < e.frames; ++f)
        if (e.pos(f, n) != cp.target_tracks.pos(f, n)) {
          ++moved_tracks;
          break;
        }
    worst_tracks = std::max({worst_tracks, moved_tracks, changed_tracks(cpt, homography_perturb(cpt, d, r.split("h"))),
                             changed_tracks(cpt, linear_drift(cpt, d, r.split("d")))});
    std::vector<int> dropped;
    frame_dropout(clip, d, r.split("f"), nullptr, &dropped);
    worst_frames = std::max(worst_frames, static_cast<int>(dropped.size()));
    worst_overlap = std::max(worst_overlap, draw_clip_windows(40, pol, overlap, orng).intersection());
  }
  t.check(worst_tracks <= 10, "track caps: max " + std::to_string(worst_tracks) + "/100 perturbed <= 10%");
  t.check(worst_frames <= 8 && worst_overlap <= 4, "dropout max " + std::to_string(worst_frames) + "/16 frames, overlap max " +
                                                      std::to_string(worst_overlap) + "/9 frames (<= 50%) over 1000 draws");
}

// ---------------------------------------------------------------------------
// Edit engine

Keyframe key(int frame, const SimilarityTransform& s) { return {frame, s}; }

void edit_engine(Tally& t) {
  const ClipPair pair = fixtures::two_object_pair(6);
  const ClipPair same = apply_editspec(pair, EditSpec{});
  const auto scene = fixtures::two_object_scene(4, 10);
  const bool identity = same.target_tracks == pair.target_tracks && same.source_tracks == pair.source_tracks &&
                        camera_to_json(same.target_camera) == camera_to_json(pair.target_camera) &&
                        apply_rigid_edit(scene.tracks, scene.object1, std::vector<Keyframe>{key(0, {}), key(3, {})}) == scene.tracks;
  t.check(identity, std::string("identity edits bit-exact ") + (identity ? "yes" : "no"));

  SimilarityTransform r;
  r.rotation = axis_angle(Vec3(0.3, -1.0, 0.4), 1.1);
  const TrackSet rot = apply_rigid_edit(scene.tracks, scene.object2, std::vector<Keyframe>{key(0, r)}, Vec3(0.2, -0.1, 1.0));
  double iso = 0;
  for (int f = 0; f < scene.tracks.frames; ++f)
    for (int a : scene.object2)
      for (int b : scene.object2) {
        if (a == b) continue;
        const double d0 = (scene.tracks.pos(f, a) - scene.tracks.pos(f, b)).norm();
        iso = std::max(iso, std::abs((rot.pos(f, a) - rot.pos(f, b)).norm() - d0) / d0);
      }
  t.check(iso < 1e-9, "rotation isometry rel err " + sci(iso) + " < 1e-9");

  const TrackSet removed = remove_object(pair.target_tracks, 1, pair.target_camera);
  bool gone = true;
  for (int f = 0; f < removed.frames; ++f)
    for (int i : pair.target_tracks.indices_of(1))
      gone = gone && removed.existence[removed.index(f, i)] == 0 &&
             !in_frame(project(removed.pos(f, i), pair.target_camera[f]), pair.target_camera[f].intrinsics);
  t.check(gone, std::string("removal off-screen with existence 0 on every frame ") + (gone ? "yes" : "no"));

  const auto idx = pair.target_tracks.indices_of(2);
  const Vec3 shift(0.2, -0.1, 0.0);
  const auto dup = duplicate_object(pair.source_tracks, pair.target_tracks, 2, std::vector<Keyframe>{key(0, SimilarityTransform::translate(shift))});
  const int n0 = pair.source_tracks.count;
  bool paired = dup.source.count == dup.target.count && dup.source.count == n0 + static_cast<int>(idx.size());
  for (std::size_t j = 0; paired && j < idx.size(); ++j) {
    const int n = n0 + static_cast<int>(j);
    paired = dup.source.object_id[n] == dup.target.object_id[n] && dup.source.object_id[n] != 2;
    for (int f = 0; f < pair.frames(); ++f)
      paired = paired && dup.source.pos(f, n) == pair.source_tracks.pos(f, idx[j]) &&
               (dup.target.pos(f, n) - pair.target_tracks.pos(f, idx[j]) - shift).norm() < 1e-12;
  }
  t.check(paired, std::string("duplication keeps source/target index pairing ") + (paired ? "yes" : "no"));

  const auto s4 = fixtures::two_object_scene();
  const std::vector<Keyframe> up{key(0, SimilarityTransform::translate({0, 0.5, 0}))};
  const TrackSet wide = apply_lbs_deform(s4.tracks, std::vector<LbsHandle>{{s4.object1, up}}, 10.0);
  const bool handle_exact = wide.subset(s4.object1) == apply_rigid_edit(s4.tracks, s4.object1, up).subset(s4.object1);
  const TrackSet narrow = apply_lbs_deform(s4.tracks, std::vector<LbsHandle>{{s4.object1, up}}, 0.5);
  bool outside = true;
  for (int f = 0; f < s4.tracks.frames; ++f)
    for (int i : s4.background) outside = outside && narrow.pos(f, i) == s4.tracks.pos(f, i);
  t.check(handle_exact && outside, std::string("LBS handles exact ") + (handle_exact ? "yes" : "no") + ", outside radius untouched " +
                                       (outside ? "yes" : "no"));
}

// ---------------------------------------------------------------------------
// Preview

constexpr int kW = 32, kH = 24;

ClipPair preview_scene(int frames) {
  ClipPair p = fixtures::two_object_pair(frames, kW, kH);
  p.target_camera = p.source_camera;
  p.depth_maps = DepthVideo(frames, kH, kW, 6.0);
  p.masks = LabelVideo(frames, kH, kW, 0);
  for (int f = 0; f < frames; ++f) {
    for (int r = 8; r < 16; ++r)
      for (int c = 6; c < 14; ++c) {
        p.depth_maps->at(f, r, c) = 2.0;
        p.masks->at(f, r, c) = 1;
      }
    p.depth_maps->at(f, 0, 0) = 0.0;
  }
  TrackSet ts(frames, 2);
  for (int f = 0; f < frames; ++f) {
    ts.pos(f, 0) = unproject(9.5, 10.5, 2.0, p.source_camera[f]);
    ts.pos(f, 1) = unproject(25.5, 3.5, 6.0, p.source_camera[f]);
  }
  ts.object_id = {1, 0};
  p.source_tracks = p.target_tracks = ts;
  return p;
}

SplatFrame brute_splat(const ColoredPointCloud& cloud, const CameraFrame& cam) {
  const auto& k = cam.intrinsics;
  SplatFrame s{VideoClip(1, k.height, k.width), CoverageVideo(1, k.height, k.width, 0), DepthVideo(1, k.height, k.width, 0.0)};
  for (int r = 0; r < k.height; ++r)
    for (int c = 0; c < k.width; ++c) {
      double best = std::numeric_limits<double>::infinity();
      long win = -1;
      for (std::size_t i = 0; i < cloud.size(); ++i) {
        const Vec3 q = cam.pose.apply(cloud.points[i]);
        if (q.z() <= kMinCameraDepth) continue;
        const double x = k.fx * q.x() / q.z() + k.cx, y = k.fy * q.y() / q.z() + k.cy;
        if (std::floor(x) != c || std::floor(y) != r) continue;
        if (q.z() < best) {
          best = q.z();
          win = static_cast<long>(i);
        }
      }
      if (win < 0) continue;
      s.coverage.at(0, r, c) = 1;
      s.depth.at(0, r, c) = best;
      for (int ch = 0; ch < 3; ++ch) s.image.at(0, r, c, ch) = cloud.colors[win][ch];
    }
  return s;
}

void preview(Tally& t) {
  const ClipPair p = preview_scene(3);
  const PreviewResult r = render_preview(p, EditSpec{});
  long covered = 0, mismatched = 0;
  for (int f = 0; f < p.frames(); ++f)
    for (int y = 0; y < kH; ++y)
      for (int x = 0; x < kW; ++x) {
        if (!r.coverage.at(f, y, x)) continue;
        ++covered;
        for (int ch = 0; ch < 3; ++ch) mismatched += r.video.at(f, y, x, ch) != p.source_video.at(f, y, x, ch);
      }
  t.check(mismatched == 0 && covered == 3L * (kW * kH - 1),
          "identity preview: " + std::to_string(mismatched) + " mismatched samples on " + std::to_string(covered) + " covered pixels");

  Rng rng(5);
  CameraFrame cam{fixtures::intrinsics(), RigidPose{}};
  ColoredPointCloud c;
  for (int i = 0; i < 3000; ++i) {
    const double x = rng.uniform_int(12, 15) + rng.uniform(0.0, 1.0), y = rng.uniform_int(9, 11) + rng.uniform(0.0, 1.0);
    c.push(unproject(x, y, rng.uniform_int(1, 20) * 0.5, cam), Vec3(rng.uniform(), rng.uniform(), rng.uniform()), 0);
  }
  for (int i = 0; i < 100; ++i) c.push(Vec3(rng.uniform(-1, 1), rng.uniform(-1, 1), -rng.uniform(0.1, 3)), Vec3(1, 1, 1), 0);
  const SplatFrame a = splat_points(c, cam), b = brute_splat(c, cam);
  const bool zbuf = a.coverage == b.coverage && a.depth == b.depth && a.image == b.image;
  t.check(zbuf, std::string("z-buffer equals brute-force minimum depth on adversarial fixture ") + (zbuf ? "yes" : "no"));
}

// ---------------------------------------------------------------------------
// Metrics

void metrics(Tally& t) {
  Rng rng(1);
  Tracks2D ta(5, 7), tb(5, 7);
  for (Vec2& p : ta.px) p = Vec2(rng.uniform(0.0, 32.0), rng.uniform(0.0, 32.0));
  for (std::size_t i = 0; i < ta.px.size(); ++i) tb.px[i] = ta.px[i] + Vec2(3.0, 4.0);
  const double e = epe(ta, tb);
  t.check(e == 5.0, "epe((3,4) offset) = " + fixed(e, 12));

  VideoClip v(4, 24, 24);
  for (double& x : v.data) x = rng.uniform();
  const double pid = psnr(v, v);
  t.check(std::isinf(pid) && metric_value(pid) == "inf", "psnr identity = " + metric_value(pid).dump());
  const double half = psnr(VideoClip(2, 8, 8, 0.0), VideoClip(2, 8, 8, 0.5));
  t.check(std::abs(half - 6.0206) <= 1e-3, "psnr(0 vs 0.5) = " + fixed(half, 6) + " dB");
  const double sid = ssim(v, v);
  t.check(std::abs(sid - 1.0) <= 1e-9, "ssim identity = 1 - " + sci(1.0 - sid));
  VideoClip w = v;
  for (double& x : w.data) x = std::clamp(x + rng.uniform(-0.1, 0.1), 0.0, 1.0);
  const CoverageVideo ones(4, 24, 24, 1);
  const bool bit = psnr(v, w) == psnr(v, w, &ones) && ssim(v, w) == ssim(v, w, &ones);
  t.check(bit, std::string("all-ones mask bit-exact ") + (bit ? "yes" : "no"));
}

// ---------------------------------------------------------------------------
// Toy conditioning ablation

struct ToyRun {
  double epe = 0, smoothed = 0, cpu_s = 0;
};

void toy_ablation(int seeds) {
  const auto t0 = std::chrono::steady_clock::now();
  std::mutex log_mu;
  double data_s = 0;
  std::vector<ToyTrainConfig> cfgs;
  std::vector<std::vector<ToyPair>> train(seeds), val(seeds);
  for (int s = 0; s < seeds; ++s) {
    ToyTrainConfig c;  // 200 pairs of 16×32×32 with 48 tracks, 20 epochs
    c.seed = c.data_seed = static_cast<std::uint64_t>(s);
    c.eval_every = c.epochs;
    train[s] = toy_dataset(c.scene, c.data_seed, 0, c.train_pairs);
    val[s] = toy_dataset(c.scene, c.data_seed, c.train_pairs, c.val_pairs);
    for (bool use : {true, false}) {
      c.use_tracks = use;
      cfgs.push_back(c);
    }
  }
  data_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  std::vector<ToyRun> runs(cfgs.size());
  std::vector<std::thread> pool;
  for (std::size_t i = 0; i < cfgs.size(); ++i)
    pool.emplace_back([&, i] {
      const ToyTrainConfig& c = cfgs[i];
      const double c0 = thread_cpu_seconds();
      const TrainResult r = train_loop(train[c.seed], val[c.seed], c, [&](const EpochMetrics& m) {
        std::lock_guard lock(log_mu);
        std::fprintf(stderr, "  toy seed %llu %s epoch %d loss %.5f\n", static_cast<unsigned long long>(c.seed),
                     c.use_tracks ? "full" : "ablated", m.epoch, m.loss);
      });
      runs[i] = {*r.log.back().val_epe, smoothed_loss(r.log, c.epochs), thread_cpu_seconds() - c0};
    });
  for (auto& th : pool) th.join();
  const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

  Tally t;
  int held = 0;
  double longest = 0;
  for (int s = 0; s < seeds; ++s) {
    const ToyRun& full = runs[2 * s];
    const ToyRun& abl = runs[2 * s + 1];
    longest = std::max({longest, full.cpu_s, abl.cpu_s});
    const bool ok = full.epe <= 0.5 * abl.epe && full.smoothed < abl.smoothed;
    held += ok;
    t.parts.push_back("seed " + std::to_string(s) + ": EPE " + fixed(full.epe, 3) + " vs " + fixed(abl.epe, 3) + " px (ratio " +
                      fixed(full.epe / abl.epe, 3) + "), smoothed loss " + fixed(full.smoothed, 4) + " vs " + fixed(abl.smoothed, 4) +
                      (ok ? "" : " (FAILED)"));
  }
  t.ok = held == seeds;
  t.parts.push_back(std::to_string(held) + "/" + std::to_string(seeds) + " seeds hold");
  // The six runs are independent single-threaded jobs; with at least one
  // thread per run the wall time is the longest run plus data generation.
  const unsigned hw = std::max(1u, std::thread::hardware_concurrency());
  const double eight_thread = hw >= cfgs.size() ? wall : data_s + longest;
  t.check(eight_thread < 45 * 60, "runtime " + fixed(wall / 60, 1) + " min measured on " + std::to_string(hw) + " thread(s); " +
                                      (hw >= cfgs.size() ? "" : "8-thread estimate (data + longest run CPU time) ") + fixed(eight_thread / 60, 1) + " min < 45 min");
  report("toy conditioning ablation", t.ok, t.str());
}

// ---------------------------------------------------------------------------
// CLI reproducibility

std::string quote(const fs::path& p) { return "'" + p.string() + "'"; }

std::map<std::string, std::string> tree_bytes(const fs::path& root) {
  std::map<std::string, std::string> out;
  if (!fs::exists(root)) return out;
  for (const auto& e : fs::recursive_directory_iterator(root)) {
    if (!e.is_regular_file()) continue;
    std::ifstream f(e.path(), std::ios::binary);
    out[fs::relative(e.path(), root).generic_string()] = std::string(std::istreambuf_iterator<char>(f), {});
  }
  return out;
}

void reproducibility(Tally& t, const fs::path& cli, const fs::path& work) {
  fs::remove_all(work);
  fs::create_directories(work);
  io::write_json(work / "toy.json", {{"frames", 4},
                                     {"height", 16},
                                     {"width", 16},
                                     {"tracks", 12},
                                     {"d", 32},
                                     {"train_pairs", 3},
                                     {"val_pairs", 1},
                                     {"epochs", 2},
                                     {"generate_steps", 2}});
  io::write_text(work / "edit.json",
                 R"({"ops":[{"kind":"rigid","selection":{"object_id":1},"keyframes":[{"frame":0},{"frame":3,"t":[0.1,0.05,0]}]}]})");
  io::write_json(work / "augment.json", {{"homography_fraction", 0.1}});
  const fs::path data = work / "run0" / "gen-toy";
  const fs::path project = data / "val" / "000000";
  const std::string cfg = quote(work / "toy.json");
  // Commands in dependency order; each reads from run0 so both runs see the same inputs.
  const std::vector<std::pair<std::string, std::string>> cmds = {
      {"gen-toy", "gen-toy --config " + cfg},
      {"ingest", "ingest --project " + quote(project) + " --tracks 8"},
      {"edit", "edit --project " + quote(project) + " --edit " + quote(work / "edit.json")},
      {"preview", "preview --project " + quote(project) + " --edit " + quote(work / "edit.json")},
      {"augment", "augment --project " + quote(project) + " --config " + quote(work / "augment.json")},
      {"train-toy", "train-toy --config " + cfg},
      {"generate", "generate --project " + quote(project) + " --edit " + quote(work / "edit.json") + " --checkpoint " +
                       quote(work / "run0" / "train-toy" / "model") + " --steps 2"},
      {"eval", "eval " + quote(project / "target") + " " + quote(work / "run0" / "generate") + " --project " + quote(project)},
  };
  std::vector<std::string> differing;
  for (const auto& [name, args] : cmds) {
    std::map<std::string, std::string> trees[2];
    for (int run = 0; run < 2; ++run) {
      const fs::path out = work / ("run" + std::to_string(run)) / name;
      const fs::path stdout_file = work / ("run" + std::to_string(run)) / (name + ".stdout");
      fs::create_directories(out.parent_path());
      const std::string cmd = quote(cli) + " " + args + " --seed 0 -q --out " + quote(out) + " > " + quote(stdout_file) + " 2> " +
                              quote(work / ("run" + std::to_string(run)) / (name + ".stderr"));
      if (std::system(cmd.c_str()) != 0) {
        std::ifstream err(work / ("run" + std::to_string(run)) / (name + ".stderr"));
        std::string line;
        std::getline(err, line);
        throw Error(ErrorCode::IoError, name + " exited nonzero: " + line);
      }
      trees[run] = tree_bytes(out);
      std::ifstream so(stdout_file, std::ios::binary);
      trees[run]["<stdout>"] = std::string(std::istreambuf_iterator<char>(so), {});
    }
    if (trees[0] != trees[1] || trees[0].size() < 2) differing.push_back(name);
  }
  t.check(differing.empty(), std::to_string(cmds.size() - differing.size()) + "/" + std::to_string(cmds.size()) +
                                 " commands byte-identical across two --seed 0 runs" +
                                 (differing.empty() ? "" : " (differ: " + [&] {
                                   std::string s;
                                   for (const auto& d : differing) s += (s.empty() ? "" : ",") + d;
                                   return s;
                                 }() + ")"));
}

}  // namespace

int main(int argc, char** argv) {
  fs::path cli;
  fs::path work = fs::temp_directory_path() / "trackedit_acceptance";
  bool skip_toy = false;
  for (int i = 1; i < argc; ++i) {
    const std::string a = argv[i];
    if (a == "--cli" && i + 1 < argc)
      cli = argv[++i];
    else if (a == "--work" && i + 1 < argc)
      work = argv[++i];
    else if (a == "--skip-toy")
      skip_toy = true;
    else {
      std::fprintf(stderr, "usage: acceptance --cli <trackedit> [--work <dir>] [--skip-toy]\n");
      return 2;
    }
  }
  criterion("geometry suite", 5, geometry);
  criterion("conditioner correctness", 30, conditioner);
  criterion("gradient suite", 300, gradients);
  criterion("augmentation suite", 60, augmentation);
  criterion("edit-engine suite", 30, edit_engine);
  criterion("preview suite", 30, preview);
  criterion("metrics suite", 10, metrics);
  if (cli.empty())
    report("reproducibility", false, "no --cli given");
  else
    criterion("reproducibility", 0, [&](Tally& t) { reproducibility(t, cli, work); });
  if (skip_toy)
    std::printf("[SKIP] toy conditioning ablation: --skip-toy\n");
  else
    toy_ablation(3);
  std::printf("%d criterion(s) failed\n", g_failed);
  return g_failed == 0 ? 0 : 1;
}
