#include <gtest/gtest.h>

#include <cmath>

#include "trackedit/metrics.hpp"

using namespace trackedit;

namespace {

VideoClip random_clip(int f, int h, int w, std::uint64_t seed) {
  Rng rng(seed);
  VideoClip v(f, h, w);
  for (double& x : v.data) x = rng.uniform(0.0, 1.0);
  return v;
}

Tracks2D random_tracks(int f, int n, std::uint64_t seed) {
  Rng rng(seed);
  Tracks2D t(f, n);
  for (Vec2& p : t.px) p = Vec2(rng.uniform(0.0, 32.0), rng.uniform(0.0, 32.0));
  return t;
}

// Direct per-window SSIM with no separable passes.
double ssim_oracle(const VideoClip& a, const VideoClip& b) {
  const auto g = gaussian_window(11, 1.5);
  const double c1 = 1e-4, c2 = 9e-4;
  double sum = 0;
  std::size_t n = 0;
  for (int f = 0; f < a.frames; ++f)
    for (int ch = 0; ch < 3; ++ch)
      for (int y = 0; y + 11 <= a.height; ++y)
        for (int x = 0; x + 11 <= a.width; ++x) {
          double mx = 0, my = 0;
          for (int i = 0; i < 11; ++i)
            for (int j = 0; j < 11; ++j) {
              mx += g[i] * g[j] * a.at(f, y + i, x + j, ch);
              my += g[i] * g[j] * b.at(f, y + i, x + j, ch);
            }
          double vx = 0, vy = 0, cxy = 0;
          for (int i = 0; i < 11; ++i)
            for (int j = 0; j < 11; ++j) {
              const double p = a.at(f, y + i, x + j, ch) - mx, q = b.at(f, y + i, x + j, ch) - my;
              vx += g[i] * g[j] * p * p;
              vy += g[i] * g[j] * q * q;
              cxy += g[i] * g[j] * p * q;
            }
          sum += ((2 * mx * my + c1) * (2 * cxy + c2)) / ((mx * mx + my * my + c1) * (vx + vy + c2));
          ++n;
        }
  return sum / n;
}

}  // namespace

TEST(Epe, ConstantOffsetIsExact) {
  Tracks2D a = random_tracks(5, 7, 1), b = a;
  for (Vec2& p : b.px) p += Vec2(3.0, 4.0);
  EXPECT_EQ(epe(a, b), 5.0);
  for (double v : epe_detail(a, b).per_frame) EXPECT_EQ(v, 5.0);
}

TEST(Epe, IdentityIsZeroAndSymmetric) {
  const Tracks2D a = random_tracks(4, 9, 2), b = random_tracks(4, 9, 3);
  EXPECT_EQ(epe(a, a), 0.0);
  EXPECT_NEAR(epe(a, b), epe(b, a), 1e-12);
}

TEST(Epe, VisibleAverageSkipsOccluded) {
  Tracks2D a(1, 2), b(1, 2);
  b.at(0, 0) = Vec2(1, 0);
  b.at(0, 1) = Vec2(10, 0);
  a.visibility = {1, 0};
  const EpeResult r = epe_detail(a, b);
  EXPECT_DOUBLE_EQ(r.mean, 5.5);
  ASSERT_TRUE(r.mean_visible.has_value());
  EXPECT_DOUBLE_EQ(*r.mean_visible, 1.0);
}

TEST(Epe, ShapeMismatchRejected) {
  try {
    epe(random_tracks(4, 9, 1), random_tracks(4, 8, 1));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::ShapeMismatch);
  }
}

TEST(Psnr, IdentityIsInfinite) {
  const VideoClip a = random_clip(2, 16, 16, 4);
  EXPECT_TRUE(std::isinf(psnr(a, a)));
  EXPECT_EQ(metric_value(psnr(a, a)), json("inf"));
}

TEST(Psnr, HalfGreyAgainstBlack) {
  const VideoClip a(2, 8, 8, 0.0), b(2, 8, 8, 0.5);
  EXPECT_NEAR(psnr(a, b), 6.0206, 1e-3);
  EXPECT_DOUBLE_EQ(psnr(a, b), 10.0 * std::log10(4.0));
}

TEST(Psnr, AllOnesMaskIsBitExact) {
  const VideoClip a = random_clip(3, 16, 20, 5), b = random_clip(3, 16, 20, 6);
  const CoverageVideo ones(3, 16, 20, 1);
  EXPECT_EQ(psnr(a, b, &ones), psnr(a, b));
}

TEST(Psnr, MaskRestrictsPixels) {
  VideoClip a(1, 4, 4, 0.0), b(1, 4, 4, 0.0);
  CoverageVideo m(1, 4, 4, 0);
  for (int x = 0; x < 4; ++x) {
    m.at(0, 0, x) = 1;
    for (int ch = 0; ch < 3; ++ch) b.at(0, 0, x, ch) = 0.5;
  }
  for (int ch = 0; ch < 3; ++ch) b.at(0, 3, 3, ch) = 1.0;  // outside the mask
  EXPECT_DOUBLE_EQ(psnr(a, b, &m), 10.0 * std::log10(4.0));
}

TEST(Psnr, EmptyMaskRejected) {
  const VideoClip a = random_clip(1, 8, 8, 7);
  const CoverageVideo zeros(1, 8, 8, 0);
  try {
    psnr(a, a, &zeros);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::EmptyMask);
  }
}

TEST(Psnr, ShapeMismatchRejected) {
  EXPECT_THROW(psnr(VideoClip(1, 8, 8), VideoClip(1, 8, 9)), Error);
  const CoverageVideo m(1, 8, 9, 1);
  EXPECT_THROW(psnr(VideoClip(1, 8, 8), VideoClip(1, 8, 8), &m), Error);
}

TEST(Ssim, IdentityIsOne) {
  const VideoClip a = random_clip(2, 24, 20, 8);
  EXPECT_NEAR(ssim(a, a), 1.0, 1e-9);
}

TEST(Ssim, SymmetricAndBounded) {
  const VideoClip a = random_clip(2, 16, 16, 9), b = random_clip(2, 16, 16, 10);
  const double ab = ssim(a, b);
  EXPECT_NEAR(ab, ssim(b, a), 1e-9);
  EXPECT_LE(ab, 1.0);
  EXPECT_GE(ab, -1.0);
}

TEST(Ssim, MatchesDirectWindowOracle) {
  const VideoClip a = random_clip(2, 14, 15, 11);
  VideoClip b = a;
  Rng rng(12);
  for (double& x : b.data) x = std::clamp(x + rng.normal(0.0, 0.1), 0.0, 1.0);
  EXPECT_NEAR(ssim(a, b), ssim_oracle(a, b), 1e-9);
}

TEST(Ssim, AllOnesMaskIsBitExact) {
  const VideoClip a = random_clip(2, 16, 16, 13), b = random_clip(2, 16, 16, 14);
  const CoverageVideo ones(2, 16, 16, 1);
  EXPECT_EQ(ssim(a, b, &ones), ssim(a, b));
}

TEST(Ssim, FrameTooSmall) {
  const VideoClip a(1, 10, 32);
  try {
    ssim(a, a);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::FrameTooSmall);
  }
}

TEST(Ssim, MaskSelectsWindowCenters) {
  const VideoClip a = random_clip(1, 12, 12, 15), b = random_clip(1, 12, 12, 16);
  CoverageVideo m(1, 12, 12, 0);
  EXPECT_THROW(ssim(a, b, &m), Error);
  m.at(0, 5, 5) = 1;  // center of the first of four windows
  const SeriesResult one = ssim_detail(a, b, &m);
  ASSERT_EQ(one.per_frame.size(), 1u);
  VideoClip a0(1, 11, 11), b0(1, 11, 11);
  for (int y = 0; y < 11; ++y)
    for (int x = 0; x < 11; ++x)
      for (int ch = 0; ch < 3; ++ch) {
        a0.at(0, y, x, ch) = a.at(0, y, x, ch);
        b0.at(0, y, x, ch) = b.at(0, y, x, ch);
      }
  EXPECT_NEAR(one.value, ssim(a0, b0), 1e-12);
}

TEST(Report, JsonAndTable) {
  const VideoClip a = random_clip(2, 16, 16, 17);
  const Tracks2D t = random_tracks(2, 3, 18);
  const MetricReport r = evaluate(a, a, nullptr, &t, &t);
  const json j = r.to_json();
  EXPECT_EQ(j["metrics"]["psnr"], "inf");
  EXPECT_NEAR(j["metrics"]["ssim"].get<double>(), 1.0, 1e-9);
  EXPECT_EQ(j["metrics"]["epe"].get<double>(), 0.0);
  EXPECT_EQ(j["per_frame"]["psnr"].size(), 2u);
  EXPECT_EQ(j["metadata"]["tracks"], 3);
  EXPECT_NE(r.table().find("psnr_db     inf"), std::string::npos);
}
