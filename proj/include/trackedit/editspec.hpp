#pragma once

// Declarative editspecs: schema parsing with field paths,
// canonical JSON serialization and the content hash used for cache keys.
//
// editspec.json:
//   {"ops": [{"kind": "rigid", "selection": {...}, "keyframes": [...], "params": {...}}, ...]}
// selection: {"object_id": k} | {"keyframe": f, "box": [x0, y0, x1, y1]} | {"indices": [...]}
// keyframe:  {"frame": f, "scale": s, "quat": [w, x, y, z], "t": [x, y, z]}

#include <openssl/evp.h>

#include <array>
#include <cmath>
#include <cstdio>
#include <optional>
#include <string>
#include <vector>

#include "trackedit/project_io.hpp"

namespace trackedit {

enum class EditKind { Rigid, Lbs, Camera, Remove, Duplicate, Transfer, Drop, FreezeBackground };

inline constexpr std::array<std::pair<EditKind, const char*>, 8> kEditKindNames{{
    {EditKind::Rigid, "rigid"},
    {EditKind::Lbs, "lbs"},
    {EditKind::Camera, "camera"},
    {EditKind::Remove, "remove"},
    {EditKind::Duplicate, "duplicate"},
    {EditKind::Transfer, "transfer"},
    {EditKind::Drop, "drop"},
    {EditKind::FreezeBackground, "freeze_background"},
}};

inline const char* to_string(EditKind k) {
  for (const auto& [kind, name] : kEditKindNames)
    if (kind == k) return name;
  return "unknown";
}

struct Selection {
  enum class Kind { Object, Box, Indices };
  Kind kind = Kind::Object;
  int object_id = 0;
  int keyframe = 0;
  std::array<double, 4> box{};  // x0, y0, x1, y1 in pixels; x0 <= x < x1
  std::vector<int> indices;

  static Selection object(int id) {
    Selection s;
    s.kind = Kind::Object;
    s.object_id = id;
    return s;
  }
  static Selection box_at(int frame, double x0, double y0, double x1, double y1) {
    Selection s;
    s.kind = Kind::Box;
    s.keyframe = frame;
    s.box = {x0, y0, x1, y1};
    return s;
  }
  static Selection list(std::vector<int> idx) {
    Selection s;
    s.kind = Kind::Indices;
    s.indices = std::move(idx);
    return s;
  }

  bool operator==(const Selection&) const = default;
};

/// Keyframe as written in the file. The quaternion is kept verbatim so the
/// canonical form reproduces the author's numbers.
struct KeyframeSpec {
  int frame = 0;
  double scale = 1.0;
  std::array<double, 4> quat{1.0, 0.0, 0.0, 0.0};  // w, x, y, z
  Vec3 t = Vec3::Zero();

  SimilarityTransform transform() const {
    SimilarityTransform s;
    s.scale = scale;
    s.translation = t;
    if (quat != std::array<double, 4>{1.0, 0.0, 0.0, 0.0})
      s.rotation = Eigen::Quaterniond(quat[0], quat[1], quat[2], quat[3]).normalized().toRotationMatrix();
    return s;
  }
  Keyframe keyframe() const { return {frame, transform()}; }

  bool operator==(const KeyframeSpec&) const = default;
};

inline std::vector<Keyframe> to_keyframes(const std::vector<KeyframeSpec>& ks) {
  std::vector<Keyframe> out;
  out.reserve(ks.size());
  for (const auto& k : ks) out.push_back(k.keyframe());
  return out;
}

struct LbsHandleSpec {
  Selection selection;
  std::vector<KeyframeSpec> keyframes;
  bool operator==(const LbsHandleSpec&) const = default;
};

enum class CameraMode { Relative, Absolute };

struct IntrinsicsOverride {
  double fx = 0, fy = 0, cx = 0, cy = 0;
  bool operator==(const IntrinsicsOverride&) const = default;
};

struct EditOp {
  EditKind kind = EditKind::Rigid;
  std::optional<Selection> selection;
  // rigid, duplicate: keyed transforms; camera: offsets (relative) or
  // camera-to-world poses (absolute)
  std::vector<KeyframeSpec> keyframes;
  std::optional<Vec3> pivot;                // rigid, duplicate
  std::vector<LbsHandleSpec> handles;       // lbs
  std::optional<double> radius;             // lbs
  CameraMode camera_mode = CameraMode::Relative;
  std::optional<IntrinsicsOverride> intrinsics;  // camera
  std::optional<TrackSet> replacement;      // transfer
  int anchor_frame = 0;                     // freeze_background

  bool operator==(const EditOp&) const = default;
};

struct EditSpec {
  std::vector<EditOp> ops;
  bool operator==(const EditSpec&) const = default;
};

// ---------------------------------------------------------------------------
// Serialization

namespace detail {

inline json vec3_json(const Vec3& v) { return json::array({v.x(), v.y(), v.z()}); }

inline json selection_json(const Selection& s) {
  switch (s.kind) {
    case Selection::Kind::Object: return {{"object_id", s.object_id}};
    case Selection::Kind::Box: return {{"keyframe", s.keyframe}, {"box", s.box}};
    case Selection::Kind::Indices: return {{"indices", s.indices}};
  }
  return json::object();
}

inline json keyframes_json(const std::vector<KeyframeSpec>& ks) {
  json arr = json::array();
  for (const auto& k : ks) arr.push_back({{"frame", k.frame}, {"scale", k.scale}, {"quat", k.quat}, {"t", vec3_json(k.t)}});
  return arr;
}

}  // namespace detail

inline json to_json(const EditSpec& spec) {
  json ops = json::array();
  for (const EditOp& op : spec.ops) {
    json o;
    o["kind"] = to_string(op.kind);
    if (op.selection) o["selection"] = detail::selection_json(*op.selection);
    o["keyframes"] = detail::keyframes_json(op.keyframes);
    json p = json::object();
    switch (op.kind) {
      case EditKind::Rigid:
      case EditKind::Duplicate:
        if (op.pivot) p["pivot"] = detail::vec3_json(*op.pivot);
        break;
      case EditKind::Lbs: {
        json hs = json::array();
        for (const auto& h : op.handles)
          hs.push_back({{"selection", detail::selection_json(h.selection)}, {"keyframes", detail::keyframes_json(h.keyframes)}});
        p["handles"] = std::move(hs);
        if (op.radius) p["radius"] = *op.radius;
        break;
      }
      case EditKind::Camera:
        p["mode"] = op.camera_mode == CameraMode::Relative ? "relative" : "absolute";
        if (op.intrinsics)
          p["intrinsics"] = {{"fx", op.intrinsics->fx}, {"fy", op.intrinsics->fy}, {"cx", op.intrinsics->cx}, {"cy", op.intrinsics->cy}};
        break;
      case EditKind::Transfer:
        if (op.replacement) p["replacement"] = tracks_to_json(*op.replacement);
        break;
      case EditKind::FreezeBackground:
        p["anchor_frame"] = op.anchor_frame;
        break;
      case EditKind::Remove:
      case EditKind::Drop:
        break;
    }
    o["params"] = std::move(p);
    ops.push_back(std::move(o));
  }
  return {{"ops", std::move(ops)}};
}

/// Canonical bytes: sorted keys, compact separators, shortest round-trip numbers.
inline std::string canonical_json(const EditSpec& spec) { return io::canonical_dump(to_json(spec)); }

inline std::string sha256_hex(const std::string& bytes) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr) != 1)
    throw Error(ErrorCode::IoError, "SHA-256 digest failed");
  std::string hex;
  hex.reserve(2 * len);
  char buf[3];
  for (unsigned int i = 0; i < len; ++i) {
    std::snprintf(buf, sizeof buf, "%02x", digest[i]);
    hex += buf;
  }
  return hex;
}

/// Content hash of the canonical form.
inline std::string editspec_hash(const EditSpec& spec) { return sha256_hex(canonical_json(spec)); }

// ---------------------------------------------------------------------------
// Parsing

namespace detail {

class EditSpecParser {
 public:
  explicit EditSpecParser(const std::string& file) : file_(file), r_(file) {}

  EditSpec parse(const json& j) const {
    if (!j.is_object()) r_.fail("$", "expected object");
    for (auto it = j.begin(); it != j.end(); ++it)
      if (it.key() != "ops") r_.fail("$." + it.key(), "unknown field");
    const json& ops = r_.field(j, "ops", "$");
    if (!ops.is_array()) r_.fail("$.ops", "expected array");
    EditSpec spec;
    for (std::size_t i = 0; i < ops.size(); ++i) spec.ops.push_back(op(ops[i], "$.ops[" + std::to_string(i) + "]"));
    return spec;
  }

 private:
  std::string file_;
  io::Reader r_;

  void only(const json& obj, std::initializer_list<const char*> keys, const std::string& path) const {
    if (!obj.is_object()) r_.fail(path, "expected object");
    for (auto it = obj.begin(); it != obj.end(); ++it) {
      bool known = false;
      for (const char* k : keys) known = known || it.key() == k;
      if (!known) r_.fail(path + "." + it.key(), "unknown field");
    }
  }

  int integer(const json& v, const std::string& path) const {
    const long long x = r_.integer(v, path);
    if (x < INT32_MIN || x > INT32_MAX) r_.fail(path, "integer out of range");
    return static_cast<int>(x);
  }

  Vec3 vec3(const json& v, const std::string& path) const {
    const json& a = r_.array(v, 3, path);
    return {r_.number(a[0], path + "[0]"), r_.number(a[1], path + "[1]"), r_.number(a[2], path + "[2]")};
  }

  Selection selection(const json& s, const std::string& path) const {
    only(s, {"object_id", "keyframe", "box", "indices"}, path);
    const bool has_obj = s.contains("object_id"), has_box = s.contains("box"), has_idx = s.contains("indices");
    if (int(has_obj) + int(has_box) + int(has_idx) != 1)
      r_.fail(path, "exactly one of object_id, box, indices is required");
    if (s.contains("keyframe") && !has_box) r_.fail(path + ".keyframe", "keyframe only applies to box selections");
    if (has_obj) {
      const int id = integer(s["object_id"], path + ".object_id");
      if (id < 0) r_.fail(path + ".object_id", "negative object id");
      return Selection::object(id);
    }
    if (has_box) {
      const int kf = integer(r_.field(s, "keyframe", path), path + ".keyframe");
      const json& b = r_.array(s["box"], 4, path + ".box");
      std::array<double, 4> v{};
      for (int i = 0; i < 4; ++i) v[i] = r_.number(b[i], path + ".box[" + std::to_string(i) + "]");
      if (v[2] < v[0] || v[3] < v[1]) r_.fail(path + ".box", "box corners must satisfy x0 <= x1 and y0 <= y1");
      return Selection::box_at(kf, v[0], v[1], v[2], v[3]);
    }
    const json& idx = s["indices"];
    if (!idx.is_array()) r_.fail(path + ".indices", "expected array");
    std::vector<int> out;
    for (std::size_t i = 0; i < idx.size(); ++i) {
      const int v = integer(idx[i], path + ".indices[" + std::to_string(i) + "]");
      if (v < 0) r_.fail(path + ".indices[" + std::to_string(i) + "]", "negative index");
      out.push_back(v);
    }
    return Selection::list(std::move(out));
  }

  std::vector<KeyframeSpec> keyframes(const json& arr, const std::string& path) const {
    if (!arr.is_array()) r_.fail(path, "expected array");
    std::vector<KeyframeSpec> out;
    for (std::size_t i = 0; i < arr.size(); ++i) {
      const std::string p = path + "[" + std::to_string(i) + "]";
      const json& k = arr[i];
      only(k, {"frame", "scale", "quat", "t"}, p);
      KeyframeSpec ks;
      ks.frame = integer(r_.field(k, "frame", p), p + ".frame");
      if (ks.frame < 0) r_.fail(p + ".frame", "negative frame");
      if (!out.empty() && ks.frame <= out.back().frame) r_.fail(p + ".frame", "keyframe frames must be strictly increasing");
      if (k.contains("scale")) {
        ks.scale = r_.number(k["scale"], p + ".scale");
        if (!(ks.scale > 0)) r_.fail(p + ".scale", "scale must be positive");
      }
      if (k.contains("quat")) {
        const json& q = r_.array(k["quat"], 4, p + ".quat");
        double n2 = 0;
        for (int a = 0; a < 4; ++a) {
          ks.quat[a] = r_.number(q[a], p + ".quat[" + std::to_string(a) + "]");
          n2 += ks.quat[a] * ks.quat[a];
        }
        if (!(n2 > 1e-24)) r_.fail(p + ".quat", "zero quaternion");
      }
      if (k.contains("t")) ks.t = vec3(k["t"], p + ".t");
      out.push_back(ks);
    }
    return out;
  }

  EditOp op(const json& o, const std::string& path) const {
    only(o, {"kind", "selection", "keyframes", "params"}, path);
    const json& kind = r_.field(o, "kind", path);
    if (!kind.is_string()) r_.fail(path + ".kind", "expected string");
    EditOp op;
    bool found = false;
    for (const auto& [k, name] : kEditKindNames)
      if (kind.get<std::string>() == name) {
        op.kind = k;
        found = true;
      }
    if (!found) r_.fail(path + ".kind", "unknown edit kind '" + kind.get<std::string>() + "'");

    const bool needs_selection = op.kind != EditKind::Camera && op.kind != EditKind::FreezeBackground;
    if (o.contains("selection")) {
      if (!needs_selection) r_.fail(path + ".selection", std::string(to_string(op.kind)) + " takes no selection");
      op.selection = selection(o["selection"], path + ".selection");
    } else if (needs_selection) {
      r_.fail(path + ".selection", "missing field");
    }
    const bool object_only = op.kind == EditKind::Remove || op.kind == EditKind::Duplicate || op.kind == EditKind::Transfer;
    if (object_only && op.selection->kind != Selection::Kind::Object)
      r_.fail(path + ".selection", std::string(to_string(op.kind)) + " requires an object_id selection");

    if (o.contains("keyframes")) op.keyframes = keyframes(o["keyframes"], path + ".keyframes");
    const bool needs_keys = op.kind == EditKind::Rigid || op.kind == EditKind::Duplicate || op.kind == EditKind::Camera;
    if (needs_keys && op.keyframes.empty()) r_.fail(path + ".keyframes", "at least one keyframe is required");
    if (!needs_keys && !op.keyframes.empty())
      r_.fail(path + ".keyframes", std::string(to_string(op.kind)) + " takes no keyframes");

    const json params = o.contains("params") ? o["params"] : json::object();
    const std::string pp = path + ".params";
    switch (op.kind) {
      case EditKind::Rigid:
      case EditKind::Duplicate:
        only(params, {"pivot"}, pp);
        if (params.contains("pivot")) op.pivot = vec3(params["pivot"], pp + ".pivot");
        break;
      case EditKind::Lbs: {
        only(params, {"handles", "radius"}, pp);
        const json& hs = r_.field(params, "handles", pp);
        if (!hs.is_array() || hs.empty()) r_.fail(pp + ".handles", "expected non-empty array");
        for (std::size_t i = 0; i < hs.size(); ++i) {
          const std::string hp = pp + ".handles[" + std::to_string(i) + "]";
          only(hs[i], {"selection", "keyframes"}, hp);
          LbsHandleSpec h;
          h.selection = selection(r_.field(hs[i], "selection", hp), hp + ".selection");
          h.keyframes = keyframes(r_.field(hs[i], "keyframes", hp), hp + ".keyframes");
          if (h.keyframes.empty()) r_.fail(hp + ".keyframes", "at least one keyframe is required");
          op.handles.push_back(std::move(h));
        }
        if (params.contains("radius")) {
          op.radius = r_.number(params["radius"], pp + ".radius");
          if (!(*op.radius > 0)) r_.fail(pp + ".radius", "radius must be positive");
        }
        break;
      }
      case EditKind::Camera: {
        only(params, {"mode", "intrinsics"}, pp);
        if (params.contains("mode")) {
          const json& m = params["mode"];
          if (m == "relative")
            op.camera_mode = CameraMode::Relative;
          else if (m == "absolute")
            op.camera_mode = CameraMode::Absolute;
          else
            r_.fail(pp + ".mode", "expected \"relative\" or \"absolute\"");
        }
        for (std::size_t i = 0; i < op.keyframes.size(); ++i)
          if (op.keyframes[i].scale != 1.0)
            r_.fail(path + ".keyframes[" + std::to_string(i) + "].scale", "camera keyframes must have scale 1");
        if (params.contains("intrinsics")) {
          const json& k = params["intrinsics"];
          const std::string kp = pp + ".intrinsics";
          only(k, {"fx", "fy", "cx", "cy"}, kp);
          IntrinsicsOverride ov;
          ov.fx = r_.number(r_.field(k, "fx", kp), kp + ".fx");
          ov.fy = r_.number(r_.field(k, "fy", kp), kp + ".fy");
          ov.cx = r_.number(r_.field(k, "cx", kp), kp + ".cx");
          ov.cy = r_.number(r_.field(k, "cy", kp), kp + ".cy");
          if (!(ov.fx > 0 && ov.fy > 0)) r_.fail(kp, "focal lengths must be positive");
          op.intrinsics = ov;
        }
        break;
      }
      case EditKind::Transfer:
        only(params, {"replacement"}, pp);
        try {
          op.replacement = tracks_from_json(r_.field(params, "replacement", pp), "editspec replacement");
        } catch (const Error& e) {
          throw Error(e.code(), e.message(), file_, pp + ".replacement" + e.field().substr(std::min<std::size_t>(1, e.field().size())));
        }
        break;
      case EditKind::FreezeBackground:
        only(params, {"anchor_frame"}, pp);
        if (params.contains("anchor_frame")) {
          op.anchor_frame = integer(params["anchor_frame"], pp + ".anchor_frame");
          if (op.anchor_frame < 0) r_.fail(pp + ".anchor_frame", "negative frame");
        }
        break;
      case EditKind::Remove:
      case EditKind::Drop:
        only(params, {}, pp);
        break;
    }
    return op;
  }

};

}  // namespace detail

inline EditSpec editspec_from_json(const json& j, const std::string& file = "editspec.json") {
  return detail::EditSpecParser(file).parse(j);
}

inline EditSpec editspec_from_string(const std::string& text, const std::string& file = "editspec.json") {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw Error(ErrorCode::SchemaViolation, e.what(), file, "$");
  }
  return editspec_from_json(j, file);
}

inline EditSpec load_editspec(const fs::path& path) { return editspec_from_json(io::read_json(path), path.string()); }

/// Frame and pixel bounds of every keyframe and box against a clip.
inline void validate_editspec(const EditSpec& spec, int frames, int width, int height,
                              const std::string& file = "editspec.json") {
  const io::Reader r(file);
  auto check_keys = [&](const std::vector<KeyframeSpec>& ks, const std::string& path) {
    for (std::size_t i = 0; i < ks.size(); ++i)
      if (ks[i].frame >= frames)
        r.fail(path + "[" + std::to_string(i) + "].frame", "frame " + std::to_string(ks[i].frame) + " outside [0, " + std::to_string(frames) + ")");
  };
  auto check_sel = [&](const Selection& s, const std::string& path) {
    if (s.kind != Selection::Kind::Box) return;
    if (s.keyframe < 0 || s.keyframe >= frames) r.fail(path + ".keyframe", "keyframe outside clip");
    if (s.box[0] < 0 || s.box[1] < 0 || s.box[2] > width || s.box[3] > height) r.fail(path + ".box", "box outside frame bounds");
  };
  for (std::size_t i = 0; i < spec.ops.size(); ++i) {
    const EditOp& op = spec.ops[i];
    const std::string p = "$.ops[" + std::to_string(i) + "]";
    check_keys(op.keyframes, p + ".keyframes");
    if (op.selection) check_sel(*op.selection, p + ".selection");
    for (std::size_t h = 0; h < op.handles.size(); ++h) {
      const std::string hp = p + ".params.handles[" + std::to_string(h) + "]";
      check_keys(op.handles[h].keyframes, hp + ".keyframes");
      check_sel(op.handles[h].selection, hp + ".selection");
    }
    if (op.kind == EditKind::FreezeBackground && op.anchor_frame >= frames)
      r.fail(p + ".params.anchor_frame", "anchor frame outside clip");
    if (op.kind == EditKind::Transfer && op.replacement && op.replacement->frames != frames)
      throw Error(ErrorCode::CountMismatch, "replacement F differs from clip F", file, p + ".params.replacement.F");
  }
}

}  // namespace trackedit
