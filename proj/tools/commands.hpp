#pragma once

// Command implementations behind the `trackedit` executable. Each command
// reads its inputs, writes only under `out`, and is a pure function of its
// inputs and seed.

#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "trackedit/augment.hpp"
#include "trackedit/nn/checkpoint.hpp"
#include "trackedit/toy_train.hpp"
#include "trackedit/service.hpp"

namespace trackedit::cli {

struct RunConfig {
  std::string subcommand;
  std::optional<fs::path> project;
  std::optional<fs::path> edit;
  std::optional<fs::path> out;
  std::optional<fs::path> checkpoint;
  std::optional<fs::path> mask;
  std::optional<fs::path> static_dir;
  std::vector<fs::path> inputs;  // eval: clip A, clip B
  std::uint64_t seed = 0;
  std::optional<int> tracks;
  std::optional<int> steps;
  int port = 8080;
  std::string host = "127.0.0.1";
  json settings = json::object();  // command-specific part of --config
  bool quiet = false;
};

/// Keys of a --config file that stand in for flags; the rest goes to the
/// command's own configuration.
inline const std::vector<std::string>& flag_keys() {
  static const std::vector<std::string> k = {"project", "edit", "out", "checkpoint", "mask", "static",
                                             "seed",    "tracks", "steps", "port", "host"};
  return k;
}

/// Fills every field whose flag was not given from the config file.
/// `given` lists the flag names present on the command line.
inline void merge_config(RunConfig& rc, const json& file_cfg, const std::vector<std::string>& given, const std::string& file) {
  const io::Reader r(file);
  if (!file_cfg.is_object()) r.fail("$", "expected object");
  auto has = [&](const std::string& k) { return file_cfg.contains(k) && std::find(given.begin(), given.end(), k) == given.end(); };
  auto path = [&](const std::string& k, std::optional<fs::path>& dst) {
    if (!has(k)) return;
    if (!file_cfg[k].is_string()) r.fail("$." + k, "expected string");
    dst = file_cfg[k].get<std::string>();
  };
  path("project", rc.project);
  path("edit", rc.edit);
  path("out", rc.out);
  path("checkpoint", rc.checkpoint);
  path("mask", rc.mask);
  path("static", rc.static_dir);
  if (has("seed")) rc.seed = static_cast<std::uint64_t>(r.integer(file_cfg["seed"], "$.seed"));
  if (has("tracks")) rc.tracks = static_cast<int>(r.integer(file_cfg["tracks"], "$.tracks"));
  if (has("steps")) rc.steps = static_cast<int>(r.integer(file_cfg["steps"], "$.steps"));
  if (has("port")) rc.port = static_cast<int>(r.integer(file_cfg["port"], "$.port"));
  if (has("host")) {
    if (!file_cfg["host"].is_string()) r.fail("$.host", "expected string");
    rc.host = file_cfg["host"].get<std::string>();
  }
  for (auto it = file_cfg.begin(); it != file_cfg.end(); ++it)
    if (std::find(flag_keys().begin(), flag_keys().end(), it.key()) == flag_keys().end()) rc.settings[it.key()] = it.value();
}

/// One-line, machine-parsable error record.
inline std::string error_line(const Error& e) {
  json j = {{"code", to_string(e.code())}, {"message", e.message()}};
  if (!e.file().empty()) j["file"] = e.file();
  if (!e.field().empty()) j["field"] = e.field();
  return json{{"error", j}}.dump();
}

namespace detail {

inline void log(const RunConfig& rc, const std::string& msg) {
  if (!rc.quiet) std::cerr << "[" << rc.subcommand << "] " << msg << "\n";
}

inline const fs::path& require(const std::optional<fs::path>& p, const char* flag) {
  if (!p) throw Error(ErrorCode::InvalidArgument, std::string("missing required flag --") + flag, "", flag);
  return *p;
}

/// Creates the output directory; refuses to write into the input project.
inline fs::path prepare_out(const RunConfig& rc) {
  const fs::path out = require(rc.out, "out");
  if (rc.project && fs::exists(*rc.project) && fs::exists(out) && fs::equivalent(out, *rc.project))
    throw Error(ErrorCode::InvalidArgument, "output directory is the input project", out.string(), "out");
  fs::create_directories(out);
  return out;
}

inline EditSpec load_spec(const RunConfig& rc) { return rc.edit ? load_editspec(*rc.edit) : EditSpec{}; }

inline void write_video(const fs::path& dir, const VideoClip& v) { write_frames(dir, v); }

inline void write_coverage(const fs::path& dir, const CoverageVideo& c) {
  fs::create_directories(dir);
  for (int f = 0; f < c.frames; ++f) write_png(dir / frame_name(f), volume_frame_to_png(c, f, 8, 255.0));
}

/// Frames of a clip directory, or of `<dir>/frames` when present.
inline VideoClip read_clip(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw Error(ErrorCode::MissingFile, "clip directory not found", dir.string());
  return fs::is_directory(dir / "frames") ? read_frames(dir / "frames") : read_frames(dir);
}

/// Pixel tracks of a clip directory holding camera.json and tracks.json.
inline std::optional<Tracks2D> read_clip_tracks(const fs::path& dir) {
  if (!fs::exists(dir / "camera.json") || !fs::exists(dir / "tracks.json")) return std::nullopt;
  const CameraPath cam = camera_from_json(io::read_json(dir / "camera.json"), (dir / "camera.json").string());
  const TrackSet ts = tracks_from_json(io::read_json(dir / "tracks.json"), (dir / "tracks.json").string());
  return project_to_pixels(ts, cam);
}

inline ToyTrainConfig toy_config(const RunConfig& rc) {
  ToyTrainConfig c;
  c.merge_json(rc.settings, "config");
  const json known = c.to_json();
  for (auto it = rc.settings.begin(); it != rc.settings.end(); ++it)
    if (!known.contains(it.key())) throw Error(ErrorCode::SchemaViolation, "unknown field", "config", "$." + it.key());
  c.seed = rc.seed;
  if (!rc.settings.contains("data_seed")) c.data_seed = rc.seed;
  if (rc.tracks) c.scene.tracks = *rc.tracks;
  if (rc.steps) c.generate_steps = *rc.steps;
  return c;
}

}  // namespace detail

// ---------------------------------------------------------------------------

/// Validates a raw project directory and writes a normalized copy,
/// optionally keeping a seeded subset of --tracks tracks.
inline json cmd_ingest(const RunConfig& rc) {
  ClipPair p = load_project(detail::require(rc.project, "project"));
  const fs::path out = detail::prepare_out(rc);
  const int before = p.source_tracks.count;
  if (rc.tracks && *rc.tracks < p.source_tracks.count) {
    const std::vector<int> idx =
        sample_track_indices(p.source_tracks, *rc.tracks, kDefaultForegroundFraction, Rng(rc.seed).split("ingest"));
    p.source_tracks = p.source_tracks.subset(idx);
    p.target_tracks = p.target_tracks.subset(idx);
  }
  save_project(out, p);
  const json summary = {{"frames", p.frames()},          {"height", p.height()},
                        {"width", p.width()},            {"tracks_in", before},
                        {"tracks", p.source_tracks.count}, {"has_depth", p.depth_maps.has_value()},
                        {"has_masks", p.masks.has_value()}, {"has_target_video", p.target_video.has_value()}};
  io::write_json(out / "ingest.json", summary);
  detail::log(rc, "wrote " + out.string());
  return summary;
}

/// Applies an editspec; writes the edited target camera and tracks, the
/// canonical spec and the projected tracks.
inline json cmd_edit(const RunConfig& rc) {
  const ClipPair p = load_project(detail::require(rc.project, "project"));
  const EditSpec spec = load_editspec(detail::require(rc.edit, "edit"));
  const ClipPair e = apply_editspec(p, spec);
  const fs::path out = detail::prepare_out(rc);
  io::write_json(out / "camera.json", camera_to_json(e.target_camera));
  io::write_json(out / "tracks.json", tracks_to_json(e.target_tracks));
  io::write_text(out / "editspec.json", canonical_json(spec));
  io::write_json(out / "projected.json", pair_tracks_payload(e, 1, 1));
  const json summary = {{"hash", editspec_hash(spec)}, {"ops", spec.ops.size()}, {"tracks", e.target_tracks.count}};
  io::write_json(out / "edit.json", summary);
  detail::log(rc, "hash " + editspec_hash(spec));
  return summary;
}

/// Depth-warped preview frames, coverage masks and depth of an edit.
inline json cmd_preview(const RunConfig& rc) {
  const ClipPair p = load_project(detail::require(rc.project, "project"));
  const EditSpec spec = detail::load_spec(rc);
  const PreviewResult r = render_preview(p, spec);
  const fs::path out = detail::prepare_out(rc);
  detail::write_video(out / "frames", r.video);
  detail::write_coverage(out / "coverage", r.coverage);
  write_depth(out / "depth", r.depth);
  json per_frame = json::array();
  for (int f = 0; f < r.coverage.frames; ++f) {
    int n = 0;
    for (int y = 0; y < r.coverage.height; ++y)
      for (int x = 0; x < r.coverage.width; ++x) n += r.coverage.at(f, y, x) != 0;
    per_frame.push_back(static_cast<double>(n) / (r.coverage.height * r.coverage.width));
  }
  const json summary = {{"hash", editspec_hash(spec)}, {"coverage", coverage_fraction(r.coverage)}, {"per_frame_coverage", per_frame}};
  io::write_json(out / "preview.json", summary);
  detail::log(rc, "coverage " + std::to_string(coverage_fraction(r.coverage)));
  return summary;
}

/// Perturbed project copy, projected perturbed tracks and the seed record.
inline json cmd_augment(const RunConfig& rc) {
  const ClipPair p = load_project(detail::require(rc.project, "project"));
  AugmentConfig cfg = rc.settings.empty() ? AugmentConfig{} : augment_config_from_json(rc.settings, "config");
  cfg.seed = rc.seed;
  const AugmentedSample s = augment_pair(p, cfg);
  const fs::path out = detail::prepare_out(rc);
  ClipPair copy = p;
  copy.source_video = s.source_video;
  copy.target_video = s.target_video;
  copy.target_tracks = s.target_tracks3d;
  save_project(out / "project", copy);
  io::write_json(out / "projected_tracks.json",
                 {{"source", tracks_payload(s.source_tracks, p.source_tracks)},
                  {"target", tracks_payload(s.target_tracks, p.target_tracks)},
                  {"range", {{"d_min", s.range.d_min}, {"d_max", s.range.d_max}}},
                  {"flipped", s.flipped}});
  io::write_json(out / "augment_record.json", s.record);
  detail::log(rc, std::string("flipped ") + (s.flipped ? "yes" : "no"));
  return {{"flipped", s.flipped}, {"seed", cfg.seed}};
}

/// Procedural training and held-out pairs as project directories.
inline json cmd_gen_toy(const RunConfig& rc) {
  const ToyTrainConfig c = detail::toy_config(rc);
  const fs::path out = detail::prepare_out(rc);
  json seeds = json::array();
  auto write_split = [&](const char* split, int begin, int count) {
    for (int i = 0; i < count; ++i) {
      const std::uint64_t s = toy_pair_seed(c.data_seed, begin + i);
      save_project(out / split / frame_name(i, ""), gen_procedural_pair(s, c.scene).pair);
      seeds.push_back({{"split", split}, {"index", i}, {"seed", s}});
    }
  };
  write_split("train", 0, c.train_pairs);
  write_split("val", c.train_pairs, c.val_pairs);
  const json summary = {{"config", c.to_json()}, {"pairs", seeds}};
  io::write_json(out / "dataset.json", summary);
  detail::log(rc, "wrote " + std::to_string(c.train_pairs) + " train and " + std::to_string(c.val_pairs) + " val pairs");
  return summary;
}

/// Trains the toy model; writes the checkpoint and the per-epoch log.
inline json cmd_train_toy(const RunConfig& rc) {
  const ToyTrainConfig c = detail::toy_config(rc);
  const fs::path out = detail::prepare_out(rc);
  const auto train = toy_dataset(c.scene, c.data_seed, 0, c.train_pairs);
  const auto val = toy_dataset(c.scene, c.data_seed, c.train_pairs, c.val_pairs);
  TrainResult r = train_loop(train, val, c, [&](const EpochMetrics& m) {
    std::string msg = "epoch " + std::to_string(m.epoch) + " loss " + std::to_string(m.loss);
    if (m.val_epe) msg += " val_epe " + std::to_string(*m.val_epe);
    detail::log(rc, msg + " (" + std::to_string(m.seconds) + " s)");
  });
  nn::save_checkpoint<float>(out / "model", r.model, {{"config", r.model.cfg.to_json()}, {"train", c.to_json()}});
  json log = json::array();
  for (const auto& m : r.log) log.push_back(m.to_json());
  const int last = static_cast<int>(r.log.size());
  json final_metrics = {{"loss", r.log.back().loss}, {"smoothed_loss", smoothed_loss(r.log, last)}};
  final_metrics["val_epe"] = r.log.back().val_epe ? json(*r.log.back().val_epe) : json(nullptr);
  const json summary = {{"config", c.to_json()}, {"log", log}, {"final", final_metrics}};
  io::write_json(out / "metrics.json", summary);
  return summary;
}

/// Samples a clip from a trained checkpoint, conditioned on the project's
/// source clip and its (edited) tracks.
inline json cmd_generate(const RunConfig& rc) {
  const ClipPair p = load_project(detail::require(rc.project, "project"));
  const EditSpec spec = detail::load_spec(rc);
  const fs::path ckpt = detail::require(rc.checkpoint, "checkpoint");
  fs::path manifest = ckpt;
  manifest += ".json";
  const json meta = io::read_json(manifest).value("metadata", json::object());
  if (!meta.contains("config")) throw Error(ErrorCode::SchemaViolation, "checkpoint has no model config", manifest.string(), "$.metadata.config");
  const FlowModelConfig mc = FlowModelConfig::from_json(meta["config"], manifest.string());
  FlowModel<float> model(mc, 0);
  nn::load_checkpoint<float>(ckpt, model);
  ClipPair e = apply_editspec(p, spec);
  e.target_video.reset();
  const int steps = rc.steps.value_or(10);
  const VideoClip v = generate(model, prepare_sample<float>(e, mc.patch), steps, Rng(rc.seed).split("generate"));
  const fs::path out = detail::prepare_out(rc);
  detail::write_video(out / "frames", v);
  const json summary = {{"hash", editspec_hash(spec)}, {"steps", steps}, {"seed", rc.seed}, {"frames", v.frames}};
  io::write_json(out / "generate.json", summary);
  detail::log(rc, "generated " + std::to_string(v.frames) + " frames");
  return summary;
}

/// PSNR/SSIM (and EPE when both clips carry tracks) between reference A and
/// candidate B, optionally masked; blob EPE of B against --project masks.
inline json cmd_eval(const RunConfig& rc, std::ostream& table_out = std::cout) {
  if (rc.inputs.size() != 2) throw Error(ErrorCode::InvalidArgument, "eval takes two clip directories", "", "inputs");
  const VideoClip a = detail::read_clip(rc.inputs[0]), b = detail::read_clip(rc.inputs[1]);
  std::optional<CoverageVideo> mask;
  if (rc.mask) {
    const LabelVideo m = read_masks(*rc.mask);
    mask = CoverageVideo(m.frames, m.height, m.width, 0);
    for (std::size_t i = 0; i < m.data.size(); ++i) mask->data[i] = m.data[i] != 0;
  }
  const auto ta = detail::read_clip_tracks(rc.inputs[0]), tb = detail::read_clip_tracks(rc.inputs[1]);
  const bool with_tracks = ta && tb;
  const MetricReport rep = evaluate(a, b, mask ? &*mask : nullptr, with_tracks ? &*ta : nullptr, with_tracks ? &*tb : nullptr);
  json j = rep.to_json();
  std::string table = rep.table();
  if (rc.project) {
    const ClipPair p = load_project(*rc.project);
    if (p.masks) {
      const double be = blob_epe(b, p);
      j["metrics"]["blob_epe"] = be;
      std::ostringstream os;
      os << std::left << std::setw(12) << "blob_epe_px" << std::fixed << std::setprecision(6) << be << "\n";
      table += os.str();
    }
  }
  if (rc.out) io::write_json(detail::prepare_out(rc) / "report.json", j);
  table_out << table;
  return j;
}

/// Serves the project until the process is stopped.
inline int cmd_serve(const RunConfig& rc) {
  TrackEditService svc(load_project(detail::require(rc.project, "project")), ServiceOptions{rc.static_dir, 64});
  httplib::Server srv;
  const int port = bind_service(srv, svc, rc.host, rc.port);
  if (port < 0) throw Error(ErrorCode::IoError, "cannot bind " + rc.host + ":" + std::to_string(rc.port), "", "port");
  std::cerr << "listening on http://" << rc.host << ":" << port << "\n";
  srv.listen_after_bind();
  return 0;
}

/// Runs one non-serving command by name.
inline json run(const RunConfig& rc) {
  if (rc.subcommand == "ingest") return cmd_ingest(rc);
  if (rc.subcommand == "edit") return cmd_edit(rc);
  if (rc.subcommand == "preview") return cmd_preview(rc);
  if (rc.subcommand == "augment") return cmd_augment(rc);
  if (rc.subcommand == "gen-toy") return cmd_gen_toy(rc);
  if (rc.subcommand == "train-toy") return cmd_train_toy(rc);
  if (rc.subcommand == "generate") return cmd_generate(rc);
  if (rc.subcommand == "eval") return cmd_eval(rc);
  throw Error(ErrorCode::InvalidArgument, "unknown command " + rc.subcommand, "", "subcommand");
}

}  // namespace trackedit::cli
