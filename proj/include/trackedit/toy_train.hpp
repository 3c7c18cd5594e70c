#pragma once

// Toy training: procedural datasets, the rectified-flow training loop, and
// blob-center EPE of generated clips against ground-truth target tracks.

#include <chrono>
#include <cmath>
#include <functional>
#include <numbers>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "trackedit/flow.hpp"
#include "trackedit/nn/adam.hpp"
#include "trackedit/toy_scene.hpp"

namespace trackedit {

struct ToyTrainConfig {
  ToySceneConfig scene;
  int d = 128;
  int conditioner_heads = 2;
  int denoiser_heads = 2;
  double locality_gain = 4.0;
  PatchSize patch;
  int train_pairs = 200;
  int val_pairs = 20;
  int epochs = 20;
  nn::AdamConfig adam;
  std::string lr_schedule = "cosine";  // "constant" or "cosine" (decay to 0 over all steps)
  int warmup_steps = 100;              // linear ramp from 0
  std::uint64_t seed = 0;       // initialization and step noise
  std::uint64_t data_seed = 0;  // procedural pairs
  int generate_steps = 10;
  int eval_every = 1;           // held-out EPE every k epochs (and the last)
  bool use_tracks = true;

  /// Learning rate for optimizer step `step` (0-based) of `total`.
  double learning_rate(long step, long total) const {
    double lr = adam.lr;
    if (warmup_steps > 0 && step < warmup_steps) lr *= static_cast<double>(step + 1) / warmup_steps;
    if (lr_schedule == "cosine" && total > 0) lr *= 0.5 * (1.0 + std::cos(std::numbers::pi * static_cast<double>(step) / total));
    return lr;
  }

  FlowModelConfig model() const {
    FlowModelConfig m = FlowModelConfig::toy(d, conditioner_heads, denoiser_heads, patch);
    m.use_tracks = use_tracks;
    m.conditioner.locality_gain = locality_gain;
    return m;
  }

  json to_json() const {
    return {{"frames", scene.frames},
            {"height", scene.height},
            {"width", scene.width},
            {"tracks", scene.tracks},
            {"min_objects", scene.min_objects},
            {"max_objects", scene.max_objects},
            {"d", d},
            {"conditioner_heads", conditioner_heads},
            {"denoiser_heads", denoiser_heads},
            {"locality_gain", locality_gain},
            {"patch", {patch.t, patch.h, patch.w}},
            {"train_pairs", train_pairs},
            {"val_pairs", val_pairs},
            {"epochs", epochs},
            {"lr", adam.lr},
            {"beta1", adam.beta1},
            {"beta2", adam.beta2},
            {"lr_schedule", lr_schedule},
            {"warmup_steps", warmup_steps},
            {"seed", seed},
            {"data_seed", data_seed},
            {"generate_steps", generate_steps},
            {"eval_every", eval_every},
            {"use_tracks", use_tracks}};
  }

  /// Keys present in `j` override the current values.
  void merge_json(const json& j, const std::string& file = "train.json") {
    const io::Reader r(file);
    if (!j.is_object()) r.fail("$", "expected object");
    auto get_int = [&](const char* k, int& dst) {
      if (j.contains(k)) dst = static_cast<int>(r.integer(j[k], std::string("$.") + k));
    };
    auto get_num = [&](const char* k, double& dst) {
      if (j.contains(k)) dst = r.number(j[k], std::string("$.") + k);
    };
    auto get_seed = [&](const char* k, std::uint64_t& dst) {
      if (j.contains(k)) dst = static_cast<std::uint64_t>(r.integer(j[k], std::string("$.") + k));
    };
    get_int("frames", scene.frames);
    get_int("height", scene.height);
    get_int("width", scene.width);
    get_int("tracks", scene.tracks);
    get_int("min_objects", scene.min_objects);
    get_int("max_objects", scene.max_objects);
    get_int("d", d);
    get_int("conditioner_heads", conditioner_heads);
    get_int("denoiser_heads", denoiser_heads);
    get_int("train_pairs", train_pairs);
    get_int("val_pairs", val_pairs);
    get_int("epochs", epochs);
    get_num("locality_gain", locality_gain);
    get_num("lr", adam.lr);
    get_num("beta1", adam.beta1);
    get_num("beta2", adam.beta2);
    get_seed("seed", seed);
    get_seed("data_seed", data_seed);
    get_int("generate_steps", generate_steps);
    get_int("warmup_steps", warmup_steps);
    if (j.contains("lr_schedule")) {
      if (!j["lr_schedule"].is_string() || (j["lr_schedule"] != "constant" && j["lr_schedule"] != "cosine"))
        r.fail("$.lr_schedule", "expected \"constant\" or \"cosine\"");
      lr_schedule = j["lr_schedule"].get<std::string>();
    }
    get_int("eval_every", eval_every);
    if (j.contains("patch")) {
      const json& p = r.array(j["patch"], 3, "$.patch");
      patch = {static_cast<int>(r.integer(p[0], "$.patch[0]")), static_cast<int>(r.integer(p[1], "$.patch[1]")),
               static_cast<int>(r.integer(p[2], "$.patch[2]"))};
    }
    if (j.contains("use_tracks")) {
      if (!j["use_tracks"].is_boolean()) r.fail("$.use_tracks", "expected boolean");
      use_tracks = j["use_tracks"].get<bool>();
    }
  }
};

/// Seed of procedural pair `index` in a dataset.
inline std::uint64_t toy_pair_seed(std::uint64_t data_seed, int index) {
  return Rng(data_seed).split("toy-dataset").split(static_cast<std::uint64_t>(index)).engine()();
}

/// Training pairs use indices [0, train); held-out pairs [train, train + val).
inline std::vector<ToyPair> toy_dataset(const ToySceneConfig& cfg, std::uint64_t data_seed, int begin, int count) {
  std::vector<ToyPair> out;
  out.reserve(count);
  for (int i = begin; i < begin + count; ++i) out.push_back(gen_procedural_pair(toy_pair_seed(data_seed, i), cfg));
  return out;
}

// ---------------------------------------------------------------------------
// Blob-center EPE

/// Mean color of each labeled object in the first frame where it is seen in
/// the source masks.
inline std::vector<std::pair<int, Vec3>> object_colors(const ClipPair& pair) {
  std::vector<std::pair<int, Vec3>> out;
  if (!pair.masks) return out;
  const LabelVideo& m = *pair.masks;
  for (int id = 1; id <= pair.source_tracks.max_object_id(); ++id) {
    for (int f = 0; f < m.frames; ++f) {
      Vec3 sum = Vec3::Zero();
      int n = 0;
      for (int r = 0; r < m.height; ++r)
        for (int c = 0; c < m.width; ++c)
          if (m.at(f, r, c) == id) {
            for (int ch = 0; ch < 3; ++ch) sum[ch] += pair.source_video.at(f, r, c, ch);
            ++n;
          }
      if (n > 0) {
        out.emplace_back(id, sum / n);
        break;
      }
    }
  }
  return out;
}

struct BlobEpeOptions {
  double color_radius = 0.3;  // colors farther than this from the object color get no weight
  double min_weight = 1.0;    // below this total weight the frame center is used
};

/// Per object and frame: the color-weighted pixel centroid of `video` against
/// the mean projection of the object's target tracks (in-front samples). Mean
/// distance in pixels over all (object, frame) terms.
inline double blob_epe(const VideoClip& video, const ClipPair& pair, const BlobEpeOptions& opt = {}) {
  const auto colors = object_colors(pair);
  double total = 0;
  int terms = 0;
  for (const auto& [id, color] : colors) {
    const std::vector<int> idx = pair.target_tracks.indices_of(id);
    for (int f = 0; f < video.frames; ++f) {
      Vec2 gt = Vec2::Zero();
      int n = 0;
      for (int i : idx) {
        const Vec3 pc = pair.target_camera.frames[f].pose.apply(pair.target_tracks.pos(f, i));
        if (pc.z() <= kMinCameraDepth) continue;
        const ScreenPoint sp = project(pair.target_tracks.pos(f, i), pair.target_camera.frames[f]);
        gt += Vec2(sp.x, sp.y);
        ++n;
      }
      if (n == 0) continue;
      gt /= n;
      double wsum = 0;
      Vec2 acc = Vec2::Zero();
      for (int r = 0; r < video.height; ++r)
        for (int c = 0; c < video.width; ++c) {
          const Vec3 px(video.at(f, r, c, 0), video.at(f, r, c, 1), video.at(f, r, c, 2));
          const double d2 = (px - color).squaredNorm() / (opt.color_radius * opt.color_radius);
          if (d2 >= 1.0) continue;
          const double w = 1.0 - d2;
          wsum += w;
          acc += w * Vec2(c + 0.5, r + 0.5);
        }
      const Vec2 est = wsum >= opt.min_weight ? Vec2(acc / wsum) : Vec2(video.width / 2.0, video.height / 2.0);
      total += (est - gt).norm();
      ++terms;
    }
  }
  return terms ? total / terms : 0.0;
}

// ---------------------------------------------------------------------------
// Training

struct EpochMetrics {
  int epoch = 0;
  double loss = 0;                // mean training loss over the epoch
  std::optional<double> val_epe;  // held-out blob EPE when evaluated
  double seconds = 0;

  json to_json() const {
    json j = {{"epoch", epoch}, {"loss", loss}};
    j["val_epe"] = val_epe ? json(*val_epe) : json(nullptr);
    return j;
  }
};

struct TrainResult {
  FlowModel<float> model;
  std::vector<EpochMetrics> log;
};

/// Trailing mean of the per-epoch loss over `window` epochs ending at
/// `epoch` (1-based), clipped at the first epoch.
inline double smoothed_loss(const std::vector<EpochMetrics>& log, int epoch, int window = 3) {
  if (epoch < 1 || epoch > static_cast<int>(log.size())) throw Error(ErrorCode::InvalidArgument, "epoch outside log");
  const int lo = std::max(1, epoch - window + 1);
  double s = 0;
  for (int e = lo; e <= epoch; ++e) s += log[e - 1].loss;
  return s / (epoch - lo + 1);
}

/// Generation seed for held-out pair `index`.
inline Rng eval_rng(std::uint64_t seed, int index) {
  return Rng(seed).split("eval").split(static_cast<std::uint64_t>(index));
}

inline double evaluate_blob_epe(const FlowModel<float>& model, const std::vector<ToyPair>& pairs,
                                const std::vector<FlowSample<float>>& samples, int steps, std::uint64_t seed) {
  double sum = 0;
  for (std::size_t i = 0; i < pairs.size(); ++i)
    sum += blob_epe(generate(model, samples[i], steps, eval_rng(seed, static_cast<int>(i))), pairs[i].pair);
  return pairs.empty() ? 0.0 : sum / pairs.size();
}

/// Single-threaded, seeded training with one pair per step.
inline TrainResult train_loop(const std::vector<ToyPair>& train, const std::vector<ToyPair>& val,
                              const ToyTrainConfig& cfg,
                              const std::function<void(const EpochMetrics&)>& on_epoch = {}) {
  if (train.empty()) throw Error(ErrorCode::InvalidArgument, "training set is empty");
  TrainResult res{FlowModel<float>(cfg.model(), cfg.seed), {}};
  std::vector<FlowSample<float>> tr, va;
  for (const auto& p : train) tr.push_back(prepare_sample<float>(p.pair, cfg.patch));
  for (const auto& p : val) va.push_back(prepare_sample<float>(p.pair, cfg.patch));
  nn::Adam<float> opt(cfg.adam);
  nn::zero_grads<float>(res.model);
  Rng rng = Rng(cfg.seed).split("train");
  std::vector<int> order(tr.size());
  typename FlowModel<float>::Cache cache;
  Mat<float> grad;
  for (int e = 1; e <= cfg.epochs; ++e) {
    const auto t0 = std::chrono::steady_clock::now();
    std::iota(order.begin(), order.end(), 0);
    rng.shuffle(order.begin(), order.end());
    double loss_sum = 0;
    for (int i : order) {
      opt.set_lr(cfg.learning_rate(opt.steps(), static_cast<long>(cfg.epochs) * static_cast<long>(tr.size())));
      const FlowSample<float>& s = tr[i];
      const double t = rng.uniform();
      const FlowState<float> st = flow_interpolate<float>(s.target, gaussian_noise<float>(s.target.rows(), s.target.cols(), rng), t);
      const Mat<float> pred = res.model.forward(s, st.x_t, t, cache);
      loss_sum += velocity_loss<float>(pred, st.velocity, &grad);
      res.model.backward(grad, cache);
      opt.step(res.model);
      nn::zero_grads<float>(res.model);
    }
    EpochMetrics m;
    m.epoch = e;
    m.loss = loss_sum / tr.size();
    if (!va.empty() && (e == cfg.epochs || (cfg.eval_every > 0 && e % cfg.eval_every == 0)))
      m.val_epe = evaluate_blob_epe(res.model, val, va, cfg.generate_steps, cfg.seed);
    m.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    res.log.push_back(m);
    if (on_epoch) on_epoch(m);
  }
  return res;
}

}  // namespace trackedit
