#pragma once

// JSON-over-HTTP facade over one loaded project. The project is immutable;
// the only mutable state is a content-addressed preview cache with
// single-flight rendering per editspec hash.

#include <deque>
#include <future>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>

#include "trackedit/metrics.hpp"
#include "trackedit/preview.hpp"

// Last: <resolv.h> (pulled in by httplib) defines a `_res` macro that breaks
// Eigen headers parsed after it.
#ifndef CPPHTTPLIB_LISTEN_BACKLOG
#define CPPHTTPLIB_LISTEN_BACKLOG 128  // the default of 5 drops bursts of clients
#endif
#include <httplib.h>

namespace trackedit {

struct ServiceOptions {
  std::optional<fs::path> static_dir;  // UI bundle served at /
  std::size_t cache_limit = 64;        // completed previews kept
};

/// Status, content type and body of one response.
struct Reply {
  int status = 200;
  std::string content_type = "application/json";
  std::string body;

  static Reply json_body(const json& j, int status = 200) { return {status, "application/json", j.dump()}; }
  static Reply png(std::vector<unsigned char> bytes) { return {200, "image/png", std::string(bytes.begin(), bytes.end())}; }
  static Reply error(int status, std::string_view code, const std::string& message, const std::string& field = {}) {
    json e = {{"code", code}, {"message", message}};
    if (!field.empty()) e["field"] = field;
    return json_body({{"error", e}}, status);
  }
};

inline int http_status(ErrorCode c) {
  switch (c) {
    case ErrorCode::MissingDepth:
      return 409;
    case ErrorCode::MissingFile:
      return 404;
    case ErrorCode::IoError:
      return 500;
    default:
      return 400;
  }
}

inline Reply error_reply(const Error& e) { return Reply::error(http_status(e.code()), to_string(e.code()), e.message(), e.field()); }

/// Projected tracks for overlays: every `stride`-th track on every
/// `frame_stride`-th frame, x/y in pixels.
inline json tracks_payload(const ProjectedTracks& pt, const TrackSet& ts, int stride = 1, int frame_stride = 1) {
  json frames = json::array(), tracks = json::array(), ids = json::array();
  json xs = json::array(), ys = json::array(), zs = json::array(), ex = json::array();
  for (int n = 0; n < pt.count; n += stride) {
    tracks.push_back(n);
    ids.push_back(ts.object_id[n]);
  }
  for (int f = 0; f < pt.frames; f += frame_stride) {
    frames.push_back(f);
    json x = json::array(), y = json::array(), z = json::array(), e = json::array();
    for (int n = 0; n < pt.count; n += stride) {
      const Vec2 p = pt.pixel(f, n);
      x.push_back(p.x());
      y.push_back(p.y());
      z.push_back(pt.at(f, n).z());
      e.push_back(pt.existence[pt.index(f, n)]);
    }
    xs.push_back(std::move(x));
    ys.push_back(std::move(y));
    zs.push_back(std::move(z));
    ex.push_back(std::move(e));
  }
  return {{"width", pt.width}, {"height", pt.height}, {"frames", frames}, {"tracks", tracks}, {"object_id", ids},
          {"x", xs},           {"y", ys},             {"z", zs},           {"existence", ex}};
}

inline json pair_tracks_payload(const ClipPair& pair, int stride, int frame_stride) {
  const ProjectedPair pp = project_pair(pair);
  return {{"source", tracks_payload(pp.source, pair.source_tracks, stride, frame_stride)},
          {"target", tracks_payload(pp.target, pair.target_tracks, stride, frame_stride)}};
}

struct PreviewEntry {
  std::string hash;
  PreviewResult result;
  std::vector<std::vector<unsigned char>> frames;    // PNG per frame
  std::vector<std::vector<unsigned char>> coverage;  // 8-bit PNG per frame, 0/255
};

class TrackEditService {
 public:
  explicit TrackEditService(ClipPair project, ServiceOptions opt = {}) : project_(std::move(project)), opt_(std::move(opt)) {
    project_.source_camera.validate();
    project_.source_tracks.validate();
  }

  const ClipPair& project() const { return project_; }

  Reply project_info() const {
    std::vector<int> objects;
    for (int id : project_.source_tracks.object_id)
      if (id != 0 && std::find(objects.begin(), objects.end(), id) == objects.end()) objects.push_back(id);
    std::sort(objects.begin(), objects.end());
    return Reply::json_body({{"F", project_.frames()},
                             {"H", project_.height()},
                             {"W", project_.width()},
                             {"N", project_.source_tracks.count},
                             {"objects", objects},
                             {"has_depth", project_.depth_maps.has_value()},
                             {"has_target_video", project_.target_video.has_value()}});
  }

  Reply frame(long i) const {
    if (i < 0 || i >= project_.frames()) return Reply::error(404, "NotFound", "frame " + std::to_string(i) + " out of range");
    return Reply::png(encode_png(frame_to_png(project_.source_video, static_cast<int>(i))));
  }

  Reply tracks(int stride, int frame_stride) const {
    if (stride < 1 || frame_stride < 1) return Reply::error(400, "InvalidArgument", "strides must be >= 1", stride < 1 ? "stride" : "frame_stride");
    try {
      return Reply::json_body(pair_tracks_payload(project_, stride, frame_stride));
    } catch (const Error& e) {
      return error_reply(e);
    }
  }

  /// Applies the editspec to the project and returns the edited projected
  /// tracks with the editspec's content hash. Nothing is stored.
  Reply edit(const std::string& body, int stride = 1, int frame_stride = 1) const {
    if (stride < 1 || frame_stride < 1) return Reply::error(400, "InvalidArgument", "strides must be >= 1");
    try {
      const EditSpec spec = editspec_from_string(body, "request");
      const ClipPair edited = apply_editspec(project_, spec);
      return Reply::json_body({{"hash", editspec_hash(spec)}, {"tracks", pair_tracks_payload(edited, stride, frame_stride)}});
    } catch (const Error& e) {
      return error_reply(e);
    }
  }

  /// Renders (or reuses) the preview for a spec; responds with its hash.
  Reply preview(const std::string& body) {
    try {
      const EditSpec spec = editspec_from_string(body, "request");
      if (!project_.depth_maps) throw Error(ErrorCode::MissingDepth, "project has no depth maps");
      validate_editspec(spec, project_.frames(), project_.width(), project_.height(), "request");
      bool cached = false;
      const auto entry = preview_entry(spec, &cached);
      return Reply::json_body({{"hash", entry->hash},
                               {"frames", entry->result.video.frames},
                               {"coverage", coverage_fraction(entry->result.coverage)},
                               {"cached", cached}});
    } catch (const Error& e) {
      return error_reply(e);
    }
  }

  Reply preview_frame(const std::string& hash, long i, bool coverage = false) const {
    const auto entry = find(hash);
    if (!entry) return Reply::error(404, "NotFound", "unknown preview hash");
    const auto& list = coverage ? entry->coverage : entry->frames;
    if (i < 0 || i >= static_cast<long>(list.size())) return Reply::error(404, "NotFound", "frame " + std::to_string(i) + " out of range");
    return Reply::png(list[i]);
  }

  /// Metrics of a cached preview against the source (or target) video,
  /// masked by the preview's coverage.
  Reply metrics(const std::string& body) const {
    json req;
    try {
      req = json::parse(body);
    } catch (const json::parse_error& e) {
      return Reply::error(400, "SchemaViolation", e.what(), "$");
    }
    if (!req.is_object() || !req.contains("hash") || !req["hash"].is_string())
      return Reply::error(400, "SchemaViolation", "hash must be a string", "$.hash");
    const std::string against = req.value("against", std::string("source"));
    if (against != "source" && against != "target")
      return Reply::error(400, "SchemaViolation", "against must be source or target", "$.against");
    for (auto it = req.begin(); it != req.end(); ++it)
      if (it.key() != "hash" && it.key() != "against") return Reply::error(400, "SchemaViolation", "unknown field", "$." + it.key());
    const auto entry = find(req["hash"].get<std::string>());
    if (!entry) return Reply::error(404, "NotFound", "unknown preview hash");
    if (against == "target" && !project_.target_video) return Reply::error(409, "MissingTarget", "project has no target video");
    try {
      const VideoClip& ref = against == "source" ? project_.source_video : *project_.target_video;
      json r = evaluate(entry->result.video, ref, &entry->result.coverage).to_json();
      r["hash"] = entry->hash;
      r["against"] = against;
      return Reply::json_body(r);
    } catch (const Error& e) {
      return error_reply(e);
    }
  }

  static json endpoints() {
    return {{"endpoints",
             {{{"method", "GET"}, {"path", "/api/project"}, {"returns", "{F, H, W, N, objects, has_depth}"}},
              {{"method", "GET"}, {"path", "/api/frame/{i}"}, {"returns", "source frame PNG"}},
              {{"method", "GET"}, {"path", "/api/tracks?stride=s&frame_stride=k"}, {"returns", "projected source and target tracks"}},
              {{"method", "POST"}, {"path", "/api/edit"}, {"body", "editspec"}, {"returns", "{hash, tracks}"}},
              {{"method", "POST"}, {"path", "/api/preview"}, {"body", "editspec"}, {"returns", "{hash, frames, coverage, cached}"}},
              {{"method", "GET"}, {"path", "/api/preview/{hash}/{i}"}, {"returns", "preview frame PNG"}},
              {{"method", "GET"}, {"path", "/api/preview/{hash}/{i}/coverage"}, {"returns", "coverage mask PNG"}},
              {{"method", "POST"}, {"path", "/api/metrics"}, {"body", "{hash, against}"}, {"returns", "metric report"}}}}};
  }

  void register_routes(httplib::Server& srv) {
    auto send = [](httplib::Response& res, const Reply& r) {
      res.status = r.status;
      res.set_content(r.body, r.content_type);
    };
    auto stride_arg = [](const httplib::Request& req, const char* name) -> int {
      if (!req.has_param(name)) return 1;
      try {
        std::size_t used = 0;
        const std::string v = req.get_param_value(name);
        const int s = std::stoi(v, &used);
        return used == v.size() ? s : 0;
      } catch (const std::exception&) {
        return 0;
      }
    };
    srv.Get("/api/project", [this, send](const httplib::Request&, httplib::Response& res) { send(res, project_info()); });
    srv.Get(R"(/api/frame/(\d+))", [this, send](const httplib::Request& req, httplib::Response& res) {
      send(res, frame(parse_index(req.matches[1])));
    });
    srv.Get("/api/tracks", [this, send, stride_arg](const httplib::Request& req, httplib::Response& res) {
      send(res, tracks(stride_arg(req, "stride"), stride_arg(req, "frame_stride")));
    });
    srv.Post("/api/edit", [this, send, stride_arg](const httplib::Request& req, httplib::Response& res) {
      send(res, edit(req.body, stride_arg(req, "stride"), stride_arg(req, "frame_stride")));
    });
    srv.Post("/api/preview", [this, send](const httplib::Request& req, httplib::Response& res) { send(res, preview(req.body)); });
    srv.Get(R"(/api/preview/([0-9a-f]{64})/(\d+))", [this, send](const httplib::Request& req, httplib::Response& res) {
      send(res, preview_frame(req.matches[1], parse_index(req.matches[2])));
    });
    srv.Get(R"(/api/preview/([0-9a-f]{64})/(\d+)/coverage)", [this, send](const httplib::Request& req, httplib::Response& res) {
      send(res, preview_frame(req.matches[1], parse_index(req.matches[2]), true));
    });
    srv.Post("/api/metrics", [this, send](const httplib::Request& req, httplib::Response& res) { send(res, metrics(req.body)); });
    srv.Get("/api", [send](const httplib::Request&, httplib::Response& res) { send(res, Reply::json_body(endpoints())); });
    if (opt_.static_dir && fs::is_directory(*opt_.static_dir)) {
      srv.set_mount_point("/", opt_.static_dir->string());
    } else {
      srv.Get("/", [send](const httplib::Request&, httplib::Response& res) { send(res, Reply::json_body(endpoints())); });
    }
    srv.set_error_handler([](const httplib::Request&, httplib::Response& res) {
      if (res.body.empty()) res.set_content(json{{"error", {{"code", "NotFound"}, {"message", "no such endpoint"}}}}.dump(), "application/json");
    });
  }

  std::size_t cache_size() const {
    std::lock_guard lock(mu_);
    return cache_.size();
  }

  /// Previews rendered so far (cache hits excluded).
  std::size_t renders() const {
    std::lock_guard lock(mu_);
    return renders_;
  }

 private:
  using EntryPtr = std::shared_ptr<const PreviewEntry>;

  static long parse_index(const std::string& s) {
    try {
      return std::stol(s);
    } catch (const std::exception&) {
      return -1;
    }
  }

  EntryPtr find(const std::string& hash) const {
    std::shared_future<EntryPtr> fut;
    {
      std::lock_guard lock(mu_);
      auto it = cache_.find(hash);
      if (it == cache_.end()) return nullptr;
      fut = it->second;
    }
    try {
      return fut.get();
    } catch (const Error&) {
      return nullptr;
    }
  }

  EntryPtr preview_entry(const EditSpec& spec, bool* cached) {
    const std::string hash = editspec_hash(spec);
    std::promise<EntryPtr> promise;
    std::shared_future<EntryPtr> fut;
    bool owner = false;
    {
      std::lock_guard lock(mu_);
      auto it = cache_.find(hash);
      if (it != cache_.end()) {
        fut = it->second;
      } else {
        fut = promise.get_future().share();
        cache_.emplace(hash, fut);
        order_.push_back(hash);
        owner = true;
        ++renders_;
      }
    }
    *cached = !owner;
    if (!owner) return fut.get();
    try {
      auto e = std::make_shared<PreviewEntry>();
      e->hash = hash;
      e->result = render_preview(project_, spec);
      const VideoClip& v = e->result.video;
      for (int f = 0; f < v.frames; ++f) {
        e->frames.push_back(encode_png(frame_to_png(v, f)));
        e->coverage.push_back(encode_png(volume_frame_to_png(e->result.coverage, f, 8, 255.0)));
      }
      promise.set_value(e);
      evict();
      return e;
    } catch (...) {
      promise.set_exception(std::current_exception());
      std::lock_guard lock(mu_);
      cache_.erase(hash);
      order_.erase(std::remove(order_.begin(), order_.end(), hash), order_.end());
      throw;
    }
  }

  void evict() {
    std::lock_guard lock(mu_);
    while (order_.size() > opt_.cache_limit) {
      cache_.erase(order_.front());
      order_.pop_front();
    }
  }

  ClipPair project_;
  ServiceOptions opt_;
  mutable std::mutex mu_;
  std::map<std::string, std::shared_future<EntryPtr>> cache_;
  std::deque<std::string> order_;
  std::size_t renders_ = 0;
};

/// Binds to `host:port` (port 0 picks a free one) and serves until stopped.
inline int bind_service(httplib::Server& srv, TrackEditService& svc, const std::string& host, int port) {
  svc.register_routes(srv);
  if (port == 0) return srv.bind_to_any_port(host);
  return srv.bind_to_port(host, port) ? port : -1;
}

}  // namespace trackedit
