#pragma once

// On-disk project layout:
//   frames/000000.png ...      8-bit RGB source frames
//   camera.json                per-frame source camera records
//   tracks.json                source tracks
//   depth/000000.{png,bin}     optional; 16-bit PNG millimeters or TFDEPTH1 float32
//   masks/000000.png           optional 8-bit label maps
//   target/camera.json         optional target camera (defaults to source)
//   target/tracks.json         optional target tracks (defaults to source)
//   target/frames/             optional target frames

#include <nlohmann/json.hpp>

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "trackedit/error.hpp"
#include "trackedit/geometry.hpp"
#include "trackedit/image.hpp"
#include "trackedit/tracks.hpp"

namespace trackedit {

using json = nlohmann::json;
namespace fs = std::filesystem;

namespace io {

inline json read_json(const fs::path& path) {
  std::ifstream f(path);
  if (!f) throw Error(ErrorCode::MissingFile, "file not found", path.string());
  try {
    return json::parse(f);
  } catch (const json::parse_error& e) {
    throw Error(ErrorCode::SchemaViolation, e.what(), path.string());
  }
}

/// Compact dump with sorted keys; the same value always yields the same bytes.
inline std::string canonical_dump(const json& j) { return j.dump(); }

inline void write_text(const fs::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw Error(ErrorCode::IoError, "cannot write", path.string());
  f << text;
}

inline void write_json(const fs::path& path, const json& j) { write_text(path, canonical_dump(j)); }

/// Field access that reports file and JSON path on failure.
class Reader {
 public:
  Reader(std::string file) : file_(std::move(file)) {}

  const json& field(const json& obj, const std::string& key, const std::string& path) const {
    if (!obj.is_object()) fail(path, "expected object");
    auto it = obj.find(key);
    if (it == obj.end()) fail(path + "." + key, "missing field");
    return *it;
  }
  double number(const json& v, const std::string& path) const {
    if (!v.is_number()) fail(path, "expected number");
    const double d = v.get<double>();
    if (!std::isfinite(d)) fail(path, "non-finite number");
    return d;
  }
  long long integer(const json& v, const std::string& path) const {
    if (!v.is_number_integer()) fail(path, "expected integer");
    return v.get<long long>();
  }
  int flag(const json& v, const std::string& path) const {
    const long long x = integer(v, path);
    if (x != 0 && x != 1) fail(path, "expected 0 or 1");
    return static_cast<int>(x);
  }
  const json& array(const json& v, std::size_t n, const std::string& path) const {
    if (!v.is_array()) fail(path, "expected array");
    if (v.size() != n)
      throw Error(ErrorCode::ShapeMismatch,
                  "expected length " + std::to_string(n) + ", got " + std::to_string(v.size()), file_, path);
    return v;
  }
  [[noreturn]] void fail(const std::string& path, const std::string& msg) const {
    throw Error(ErrorCode::SchemaViolation, msg, file_, path);
  }

 private:
  std::string file_;
};

}  // namespace io

// ---------------------------------------------------------------------------
// camera.json

inline json camera_to_json(const CameraPath& cam) {
  json arr = json::array();
  for (const auto& fr : cam.frames) {
    const auto& k = fr.intrinsics;
    json rec;
    rec["fx"] = k.fx;
    rec["fy"] = k.fy;
    rec["cx"] = k.cx;
    rec["cy"] = k.cy;
    rec["width"] = k.width;
    rec["height"] = k.height;
    json r = json::array();
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) r.push_back(fr.pose.rotation(i, j));
    rec["R"] = r;
    rec["t"] = {fr.pose.translation.x(), fr.pose.translation.y(), fr.pose.translation.z()};
    arr.push_back(rec);
  }
  return arr;
}

inline CameraPath camera_from_json(const json& j, const std::string& file = "camera.json") {
  io::Reader rd(file);
  if (!j.is_array() || j.empty()) rd.fail("$", "expected non-empty array of frame records");
  CameraPath cam;
  for (std::size_t i = 0; i < j.size(); ++i) {
    const std::string p = "$[" + std::to_string(i) + "]";
    const json& rec = j[i];
    CameraFrame fr;
    auto& k = fr.intrinsics;
    k.fx = rd.number(rd.field(rec, "fx", p), p + ".fx");
    k.fy = rd.number(rd.field(rec, "fy", p), p + ".fy");
    k.cx = rd.number(rd.field(rec, "cx", p), p + ".cx");
    k.cy = rd.number(rd.field(rec, "cy", p), p + ".cy");
    k.width = static_cast<int>(rd.integer(rd.field(rec, "width", p), p + ".width"));
    k.height = static_cast<int>(rd.integer(rd.field(rec, "height", p), p + ".height"));
    if (!k.valid()) rd.fail(p, "invalid intrinsics");
    const json& r = rd.array(rd.field(rec, "R", p), 9, p + ".R");
    for (int a = 0; a < 9; ++a) fr.pose.rotation(a / 3, a % 3) = rd.number(r[a], p + ".R[" + std::to_string(a) + "]");
    const json& t = rd.array(rd.field(rec, "t", p), 3, p + ".t");
    for (int a = 0; a < 3; ++a) fr.pose.translation(a) = rd.number(t[a], p + ".t[" + std::to_string(a) + "]");
    if (!fr.pose.valid(1e-6)) rd.fail(p + ".R", "rotation is not orthonormal");
    cam.frames.push_back(fr);
  }
  try {
    cam.validate();
  } catch (const Error& e) {
    throw Error(e.code(), e.message(), file);
  }
  return cam;
}

// ---------------------------------------------------------------------------
// tracks.json

inline json tracks_to_json(const TrackSet& ts) {
  json j;
  j["F"] = ts.frames;
  j["N"] = ts.count;
  json pos = json::array(), ex = json::array(), vis = json::array();
  for (int f = 0; f < ts.frames; ++f) {
    json pf = json::array(), ef = json::array(), vf = json::array();
    for (int n = 0; n < ts.count; ++n) {
      const Vec3& p = ts.pos(f, n);
      pf.push_back({p.x(), p.y(), p.z()});
      ef.push_back(static_cast<int>(ts.existence[ts.index(f, n)]));
      vf.push_back(static_cast<int>(ts.visibility[ts.index(f, n)]));
    }
    pos.push_back(std::move(pf));
    ex.push_back(std::move(ef));
    vis.push_back(std::move(vf));
  }
  j["positions"] = std::move(pos);
  j["object_id"] = ts.object_id;
  j["existence"] = std::move(ex);
  j["visibility"] = std::move(vis);
  return j;
}

inline TrackSet tracks_from_json(const json& j, const std::string& file = "tracks.json") {
  io::Reader rd(file);
  const long long F = rd.integer(rd.field(j, "F", "$"), "$.F");
  const long long N = rd.integer(rd.field(j, "N", "$"), "$.N");
  if (F < 1 || N < 1) throw Error(ErrorCode::ShapeMismatch, "F and N must be >= 1", file, "$");
  TrackSet ts(static_cast<int>(F), static_cast<int>(N));
  const json& pos = rd.array(rd.field(j, "positions", "$"), F, "$.positions");
  const json& ex = rd.array(rd.field(j, "existence", "$"), F, "$.existence");
  const json& vis = rd.array(rd.field(j, "visibility", "$"), F, "$.visibility");
  const json& ids = rd.array(rd.field(j, "object_id", "$"), N, "$.object_id");
  for (int n = 0; n < N; ++n) {
    const long long id = rd.integer(ids[n], "$.object_id[" + std::to_string(n) + "]");
    if (id < 0) rd.fail("$.object_id[" + std::to_string(n) + "]", "negative object id");
    ts.object_id[n] = static_cast<int>(id);
  }
  for (int f = 0; f < F; ++f) {
    const std::string pf = "[" + std::to_string(f) + "]";
    rd.array(pos[f], N, "$.positions" + pf);
    rd.array(ex[f], N, "$.existence" + pf);
    rd.array(vis[f], N, "$.visibility" + pf);
    for (int n = 0; n < N; ++n) {
      const std::string pn = pf + "[" + std::to_string(n) + "]";
      const json& p = rd.array(pos[f][n], 3, "$.positions" + pn);
      for (int a = 0; a < 3; ++a) ts.pos(f, n)(a) = rd.number(p[a], "$.positions" + pn);
      ts.existence[ts.index(f, n)] = static_cast<std::uint8_t>(rd.flag(ex[f][n], "$.existence" + pn));
      ts.visibility[ts.index(f, n)] = static_cast<std::uint8_t>(rd.flag(vis[f][n], "$.visibility" + pn));
    }
  }
  return ts;
}

// ---------------------------------------------------------------------------
// Frame directories

inline int count_frames(const fs::path& dir, std::string_view ext) {
  int n = 0;
  while (fs::exists(dir / frame_name(n, ext))) ++n;
  return n;
}

inline VideoClip read_frames(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw Error(ErrorCode::MissingFile, "frame directory not found", dir.string());
  const int n = count_frames(dir, ".png");
  if (n == 0) throw Error(ErrorCode::MissingFile, "no frames (expected 000000.png)", dir.string());
  VideoClip v;
  for (int f = 0; f < n; ++f) {
    const fs::path p = dir / frame_name(f);
    const PngImage img = read_png(p);
    if (img.channels != 3 || img.bit_depth != 8)
      throw Error(ErrorCode::SchemaViolation, "expected 8-bit RGB", p.string());
    if (f == 0) v = VideoClip(n, img.height, img.width);
    if (img.width != v.width || img.height != v.height)
      throw Error(ErrorCode::ShapeMismatch, "frame size differs", p.string());
    const std::size_t off = v.index(f, 0, 0, 0);
    for (std::size_t i = 0; i < img.samples.size(); ++i) v.data[off + i] = img.samples[i] / 255.0;
  }
  return v;
}

inline void write_frames(const fs::path& dir, const VideoClip& v) {
  fs::create_directories(dir);
  for (int f = 0; f < v.frames; ++f) write_png(dir / frame_name(f), frame_to_png(v, f));
}

inline DepthVideo read_depth(const fs::path& dir) {
  const int n_png = count_frames(dir, ".png");
  const int n_bin = count_frames(dir, ".bin");
  const bool bin = n_bin > 0;
  const int n = bin ? n_bin : n_png;
  if (n == 0) throw Error(ErrorCode::MissingFile, "no depth frames", dir.string());
  DepthVideo d;
  for (int f = 0; f < n; ++f) {
    if (bin) {
      const DepthRaster r = read_depth_raw(dir / frame_name(f, ".bin"));
      if (f == 0) d = DepthVideo(n, r.height, r.width);
      if (r.width != d.width || r.height != d.height)
        throw Error(ErrorCode::ShapeMismatch, "depth size differs", (dir / frame_name(f, ".bin")).string());
      for (std::size_t i = 0; i < r.meters.size(); ++i) d.data[d.index(f, 0, 0) + i] = r.meters[i];
    } else {
      const fs::path p = dir / frame_name(f);
      const PngImage img = read_png(p);
      if (img.channels != 1 || img.bit_depth != 16)
        throw Error(ErrorCode::SchemaViolation, "expected 16-bit grayscale millimeters", p.string());
      if (f == 0) d = DepthVideo(n, img.height, img.width);
      for (std::size_t i = 0; i < img.samples.size(); ++i) d.data[d.index(f, 0, 0) + i] = img.samples[i] / 1000.0;
    }
  }
  return d;
}

inline void write_depth(const fs::path& dir, const DepthVideo& d) {
  fs::create_directories(dir);
  for (int f = 0; f < d.frames; ++f) {
    DepthRaster r{d.width, d.height, std::vector<float>(static_cast<std::size_t>(d.width) * d.height)};
    for (std::size_t i = 0; i < r.meters.size(); ++i) r.meters[i] = static_cast<float>(d.data[d.index(f, 0, 0) + i]);
    write_depth_raw(dir / frame_name(f, ".bin"), r);
  }
}

inline LabelVideo read_masks(const fs::path& dir) {
  const int n = count_frames(dir, ".png");
  if (n == 0) throw Error(ErrorCode::MissingFile, "no mask frames", dir.string());
  LabelVideo m;
  for (int f = 0; f < n; ++f) {
    const fs::path p = dir / frame_name(f);
    const PngImage img = read_png(p);
    if (img.channels != 1 || img.bit_depth != 8)
      throw Error(ErrorCode::SchemaViolation, "expected 8-bit label map", p.string());
    if (f == 0) m = LabelVideo(n, img.height, img.width);
    if (img.width != m.width || img.height != m.height) throw Error(ErrorCode::ShapeMismatch, "mask size differs", p.string());
    for (std::size_t i = 0; i < img.samples.size(); ++i) m.data[m.index(f, 0, 0) + i] = img.samples[i];
  }
  return m;
}

inline void write_masks(const fs::path& dir, const LabelVideo& m) {
  fs::create_directories(dir);
  for (int f = 0; f < m.frames; ++f) write_png(dir / frame_name(f), volume_frame_to_png(m, f, 8));
}

// ---------------------------------------------------------------------------
// Whole projects

inline ClipPair load_project(const fs::path& root) {
  if (!fs::is_directory(root)) throw Error(ErrorCode::MissingFile, "project directory not found", root.string());
  for (const char* name : {"camera.json", "tracks.json"})
    if (!fs::exists(root / name)) throw Error(ErrorCode::MissingFile, "required file missing", (root / name).string());
  ClipPair pair;
  pair.source_video = read_frames(root / "frames");
  pair.source_camera = camera_from_json(io::read_json(root / "camera.json"), (root / "camera.json").string());
  pair.source_tracks = tracks_from_json(io::read_json(root / "tracks.json"), (root / "tracks.json").string());
  const fs::path tgt = root / "target";
  pair.target_camera = fs::exists(tgt / "camera.json")
                           ? camera_from_json(io::read_json(tgt / "camera.json"), (tgt / "camera.json").string())
                           : pair.source_camera;
  pair.target_tracks = fs::exists(tgt / "tracks.json")
                           ? tracks_from_json(io::read_json(tgt / "tracks.json"), (tgt / "tracks.json").string())
                           : pair.source_tracks;
  if (fs::is_directory(tgt / "frames")) pair.target_video = read_frames(tgt / "frames");
  if (fs::is_directory(root / "depth")) pair.depth_maps = read_depth(root / "depth");
  if (fs::is_directory(root / "masks")) pair.masks = read_masks(root / "masks");

  const auto shape_check = [&](bool ok, const fs::path& file, const std::string& field, const std::string& msg) {
    if (!ok) throw Error(ErrorCode::ShapeMismatch, msg, file.string(), field);
  };
  const int F = pair.frames();
  shape_check(static_cast<int>(pair.source_camera.size()) == F, root / "camera.json", "$",
              "camera has " + std::to_string(pair.source_camera.size()) + " frames, video has " + std::to_string(F));
  shape_check(pair.source_tracks.frames == F, root / "tracks.json", "$.F",
              "F=" + std::to_string(pair.source_tracks.frames) + " but video has " + std::to_string(F) + " frames");
  shape_check(pair.target_tracks.count == pair.source_tracks.count, tgt / "tracks.json", "$.N",
              "target N differs from source N");
  pair.validate();
  return pair;
}

inline void save_project(const fs::path& root, const ClipPair& pair) {
  fs::create_directories(root / "target");
  write_frames(root / "frames", pair.source_video);
  io::write_json(root / "camera.json", camera_to_json(pair.source_camera));
  io::write_json(root / "tracks.json", tracks_to_json(pair.source_tracks));
  io::write_json(root / "target" / "camera.json", camera_to_json(pair.target_camera));
  io::write_json(root / "target" / "tracks.json", tracks_to_json(pair.target_tracks));
  if (pair.target_video) write_frames(root / "target" / "frames", *pair.target_video);
  if (pair.depth_maps) write_depth(root / "depth", *pair.depth_maps);
  if (pair.masks) write_masks(root / "masks", *pair.masks);
}

}  // namespace trackedit
