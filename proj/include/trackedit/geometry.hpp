#pragma once

// Pinhole camera math, rigid and similarity transforms, homography fitting
// and disparity normalization. Everything here is double precision.

#include <Eigen/Dense>
#include <Eigen/Geometry>

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <span>
#include <vector>

#include "trackedit/error.hpp"

namespace trackedit {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

inline constexpr double kMinCameraDepth = 1e-9;

struct CameraIntrinsics {
  double fx = 1.0;
  double fy = 1.0;
  double cx = 0.0;
  double cy = 0.0;
  int width = 1;
  int height = 1;

  bool valid() const {
    return fx > 0 && fy > 0 && width > 0 && height > 0 && cx >= 0 && cx < width && cy >= 0 &&
           cy < height && std::isfinite(fx) && std::isfinite(fy);
  }
  bool operator==(const CameraIntrinsics&) const = default;
};

/// World-to-camera rigid transform: p_cam = rotation * p_world + translation.
struct RigidPose {
  Mat3 rotation = Mat3::Identity();
  Vec3 translation = Vec3::Zero();

  Vec3 apply(const Vec3& p) const { return rotation * p + translation; }

  RigidPose inverse() const {
    RigidPose inv;
    inv.rotation = rotation.transpose();
    inv.translation = -(inv.rotation * translation);
    return inv;
  }

  /// (this ∘ other)(p) = this(other(p)).
  RigidPose compose(const RigidPose& other) const {
    RigidPose out;
    out.rotation = rotation * other.rotation;
    out.translation = rotation * other.translation + translation;
    out.orthonormalize();
    return out;
  }

  /// Camera center in world coordinates.
  Vec3 center() const { return -(rotation.transpose() * translation); }

  static RigidPose from_center(const Mat3& world_to_cam, const Vec3& center) {
    RigidPose p;
    p.rotation = world_to_cam;
    p.translation = -(world_to_cam * center);
    return p;
  }

  bool valid(double tol = 1e-9) const {
    return (rotation.transpose() * rotation - Mat3::Identity()).cwiseAbs().maxCoeff() <= tol &&
           std::abs(rotation.determinant() - 1.0) <= tol && translation.allFinite();
  }

  void orthonormalize() {
    Eigen::JacobiSVD<Mat3> svd(rotation, Eigen::ComputeFullU | Eigen::ComputeFullV);
    Mat3 r = svd.matrixU() * svd.matrixV().transpose();
    if (r.determinant() < 0) {
      Mat3 u = svd.matrixU();
      u.col(2) *= -1.0;
      r = u * svd.matrixV().transpose();
    }
    rotation = r;
  }

  bool operator==(const RigidPose& o) const {
    return rotation == o.rotation && translation == o.translation;
  }
};

struct CameraFrame {
  CameraIntrinsics intrinsics;
  RigidPose pose;
  bool operator==(const CameraFrame&) const = default;
};

struct CameraPath {
  std::vector<CameraFrame> frames;

  std::size_t size() const { return frames.size(); }
  int width() const { return frames.empty() ? 0 : frames.front().intrinsics.width; }
  int height() const { return frames.empty() ? 0 : frames.front().intrinsics.height; }
  const CameraFrame& operator[](std::size_t i) const { return frames[i]; }
  CameraFrame& operator[](std::size_t i) { return frames[i]; }

  void validate() const {
    if (frames.empty()) throw Error(ErrorCode::ShapeMismatch, "camera path has no frames");
    for (std::size_t i = 0; i < frames.size(); ++i) {
      const auto& k = frames[i].intrinsics;
      if (!k.valid())
        throw Error(ErrorCode::SchemaViolation,
                    "invalid intrinsics at frame " + std::to_string(i));
      if (k.width != width() || k.height != height())
        throw Error(ErrorCode::ShapeMismatch,
                    "frame size differs at frame " + std::to_string(i));
      if (!frames[i].pose.valid(1e-6))
        throw Error(ErrorCode::SchemaViolation,
                    "rotation not orthonormal at frame " + std::to_string(i));
    }
  }

  static CameraPath constant(const CameraIntrinsics& k, const RigidPose& pose, std::size_t n) {
    CameraPath p;
    p.frames.assign(n, CameraFrame{k, pose});
    return p;
  }

  bool operator==(const CameraPath&) const = default;
};

/// p -> scale * rotation * p + translation.
struct SimilarityTransform {
  double scale = 1.0;
  Mat3 rotation = Mat3::Identity();
  Vec3 translation = Vec3::Zero();

  Vec3 apply(const Vec3& p) const { return scale * (rotation * p) + translation; }

  /// Applies the transform about a pivot. Written as a displacement so the
  /// identity leaves p bit-exact.
  Vec3 apply_about(const Vec3& p, const Vec3& pivot) const {
    if (is_identity()) return p;
    const Mat3 a = scale * rotation - Mat3::Identity();
    return p + (a * (p - pivot) + translation);
  }

  bool is_identity() const {
    return scale == 1.0 && rotation == Mat3::Identity() && translation == Vec3::Zero();
  }

  static SimilarityTransform translate(const Vec3& t) {
    SimilarityTransform s;
    s.translation = t;
    return s;
  }
  static SimilarityTransform rotate(const Eigen::Quaterniond& q) {
    SimilarityTransform s;
    s.rotation = q.normalized().toRotationMatrix();
    return s;
  }

  bool operator==(const SimilarityTransform& o) const {
    return scale == o.scale && rotation == o.rotation && translation == o.translation;
  }
};

struct Homography {
  Mat3 matrix = Mat3::Identity();

  Vec2 apply(const Vec2& p) const {
    const Vec3 h = matrix * Vec3(p.x(), p.y(), 1.0);
    return {h.x() / h.z(), h.y() / h.z()};
  }
};

struct ScreenPoint {
  double x = 0;
  double y = 0;
  double depth = 0;
};

inline ScreenPoint project(const Vec3& p, const CameraIntrinsics& k, const RigidPose& pose) {
  const Vec3 c = pose.apply(p);
  if (!(c.z() > kMinCameraDepth))
    throw Error(ErrorCode::BehindCamera, "point has camera depth " + std::to_string(c.z()));
  return {k.fx * (c.x() / c.z()) + k.cx, k.fy * (c.y() / c.z()) + k.cy, c.z()};
}

inline ScreenPoint project(const Vec3& p, const CameraFrame& cam) {
  return project(p, cam.intrinsics, cam.pose);
}

inline Vec3 unproject(double x, double y, double depth, const CameraIntrinsics& k,
                      const RigidPose& pose) {
  if (!(depth > 0))
    throw Error(ErrorCode::NonPositiveDepth, "depth " + std::to_string(depth));
  const Vec3 c((x - k.cx) / k.fx * depth, (y - k.cy) / k.fy * depth, depth);
  return pose.rotation.transpose() * (c - pose.translation);
}

inline Vec3 unproject(double x, double y, double depth, const CameraFrame& cam) {
  return unproject(x, y, depth, cam.intrinsics, cam.pose);
}

// ---------------------------------------------------------------------------
// Disparity normalization

struct DisparityOptions {
  double low_percentile = 0.01;
  double high_percentile = 0.99;
};

/// Disparity bounds over a depth pool; maps depth to z in [0, 1] with nearer
/// points getting larger z.
struct DisparityRange {
  double d_min = 0.0;
  double d_max = 0.0;

  bool degenerate() const {
    return !(d_max - d_min > std::numeric_limits<double>::epsilon() * std::abs(d_max));
  }

  double normalize(double depth) const {
    if (degenerate()) return 0.5;
    const double z = (1.0 / depth - d_min) / (d_max - d_min);
    return std::clamp(z, 0.0, 1.0);
  }
};

/// Nearest-rank percentiles, so small pools use their exact min/max.
inline DisparityRange disparity_range(std::span<const double> depths,
                                      const DisparityOptions& opt = {}) {
  if (depths.empty()) return {};
  std::vector<double> disp;
  disp.reserve(depths.size());
  for (double d : depths) {
    if (!(d > 0)) throw Error(ErrorCode::NonPositiveDepth, "depth pool contains " + std::to_string(d));
    disp.push_back(1.0 / d);
  }
  const auto rank = [&](double p) {
    const double r = std::ceil(p * static_cast<double>(disp.size())) - 1.0;
    return static_cast<std::size_t>(std::clamp(r, 0.0, static_cast<double>(disp.size() - 1)));
  };
  const std::size_t lo = rank(opt.low_percentile);
  const std::size_t hi = rank(opt.high_percentile);
  std::nth_element(disp.begin(), disp.begin() + static_cast<std::ptrdiff_t>(lo), disp.end());
  const double d_min = disp[lo];
  std::nth_element(disp.begin(), disp.begin() + static_cast<std::ptrdiff_t>(hi), disp.end());
  return {d_min, disp[hi]};
}

inline std::vector<double> normalize_disparity(std::span<const double> depths,
                                               const DisparityOptions& opt = {}) {
  const DisparityRange range = disparity_range(depths, opt);
  std::vector<double> z;
  z.reserve(depths.size());
  for (double d : depths) z.push_back(range.normalize(d));
  return z;
}

// ---------------------------------------------------------------------------
// Homography

namespace detail {

/// Similarity that moves the centroid to the origin and the mean distance
/// to sqrt(2).
inline Mat3 hartley_normalizer(std::span<const Vec2> pts) {
  Vec2 c = Vec2::Zero();
  for (const auto& p : pts) c += p;
  c /= static_cast<double>(pts.size());
  double mean = 0;
  for (const auto& p : pts) mean += (p - c).norm();
  mean /= static_cast<double>(pts.size());
  const double s = mean > 0 ? std::sqrt(2.0) / mean : 1.0;
  Mat3 t;
  t << s, 0, -s * c.x(), 0, s, -s * c.y(), 0, 0, 1;
  return t;
}

inline bool any_three_collinear(std::span<const Vec2> pts) {
  double scale = 0;
  for (std::size_t i = 0; i < pts.size(); ++i)
    for (std::size_t j = i + 1; j < pts.size(); ++j) scale = std::max(scale, (pts[i] - pts[j]).norm());
  if (scale == 0) return true;
  for (std::size_t i = 0; i < pts.size(); ++i)
    for (std::size_t j = i + 1; j < pts.size(); ++j)
      for (std::size_t k = j + 1; k < pts.size(); ++k) {
        const Vec2 a = pts[j] - pts[i];
        const Vec2 b = pts[k] - pts[i];
        if (std::abs(a.x() * b.y() - a.y() * b.x()) <= 1e-10 * scale * scale) return true;
      }
  return false;
}

}  // namespace detail

struct Correspondence {
  Vec2 src;
  Vec2 dst;
};

/// Four-point direct linear transform with Hartley normalization.
inline Homography fit_homography(std::span<const Correspondence, 4> corr) {
  std::array<Vec2, 4> src, dst;
  for (std::size_t i = 0; i < 4; ++i) {
    src[i] = corr[i].src;
    dst[i] = corr[i].dst;
  }
  if (detail::any_three_collinear(src) || detail::any_three_collinear(dst))
    throw Error(ErrorCode::DegenerateConfiguration, "three correspondences are collinear");

  const Mat3 ts = detail::hartley_normalizer(src);
  const Mat3 td = detail::hartley_normalizer(dst);
  Eigen::Matrix<double, 8, 9> a;
  for (int i = 0; i < 4; ++i) {
    const Vec3 s = ts * Vec3(src[i].x(), src[i].y(), 1.0);
    const Vec3 d = td * Vec3(dst[i].x(), dst[i].y(), 1.0);
    const double x = s.x() / s.z(), y = s.y() / s.z();
    const double u = d.x() / d.z(), v = d.y() / d.z();
    a.row(2 * i) << -x, -y, -1, 0, 0, 0, u * x, u * y, u;
    a.row(2 * i + 1) << 0, 0, 0, -x, -y, -1, v * x, v * y, v;
  }
  Eigen::JacobiSVD<Eigen::Matrix<double, 8, 9>> svd(a, Eigen::ComputeFullV);
  const auto& sv = svd.singularValues();
  if (!(sv(7) > 1e-10 * sv(0)))
    throw Error(ErrorCode::DegenerateConfiguration, "DLT system is rank deficient");
  const Eigen::Matrix<double, 9, 1> h = svd.matrixV().col(8);
  Mat3 hn;
  hn << h(0), h(1), h(2), h(3), h(4), h(5), h(6), h(7), h(8);
  Mat3 m = td.inverse() * hn * ts;
  if (std::abs(m(2, 2)) > 1e-15) m /= m(2, 2);
  return {m};
}

// ---------------------------------------------------------------------------
// Keyframe interpolation

inline SimilarityTransform interpolate_transform(const SimilarityTransform& a, double fa,
                                                 const SimilarityTransform& b, double fb,
                                                 double f) {
  if (f <= fa || fa == fb) return a;
  if (f >= fb) return b;
  const double alpha = (f - fa) / (fb - fa);
  SimilarityTransform out;
  out.translation = (1.0 - alpha) * a.translation + alpha * b.translation;
  out.scale = std::exp((1.0 - alpha) * std::log(a.scale) + alpha * std::log(b.scale));
  const Eigen::Quaterniond qa(a.rotation), qb(b.rotation);
  // Eigen's slerp flips the sign of the dot product, so it takes the short arc.
  out.rotation = qa.slerp(alpha, qb).normalized().toRotationMatrix();
  return out;
}

struct Keyframe {
  int frame = 0;
  SimilarityTransform transform;
};

/// Held constant before the first and after the last keyframe.
inline SimilarityTransform sample_keyframes(std::span<const Keyframe> keys, int frame) {
  if (keys.empty()) return {};
  if (frame <= keys.front().frame) return keys.front().transform;
  if (frame >= keys.back().frame) return keys.back().transform;
  for (std::size_t i = 0; i + 1 < keys.size(); ++i) {
    if (frame >= keys[i].frame && frame <= keys[i + 1].frame)
      return interpolate_transform(keys[i].transform, keys[i].frame, keys[i + 1].transform,
                                   keys[i + 1].frame, frame);
  }
  return keys.back().transform;
}

/// Rotation matrix for an angle (radians) about a unit axis.
inline Mat3 axis_angle(const Vec3& axis, double angle) {
  return Eigen::AngleAxisd(angle, axis.normalized()).toRotationMatrix();
}

}  // namespace trackedit
