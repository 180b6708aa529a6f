#include "maskvid/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "maskvid/codec.hpp"
#include "maskvid/io.hpp"
#include "maskvid/rng.hpp"

namespace maskvid::pipeline {

namespace {

constexpr double kPi = 3.141592653589793238462643;

bool in_holdout(const config::RunConfig& cfg, int shape, int color) {
  for (const auto& [s, c] : cfg.holdout_pairs)
    if (s == shape && c == color) return true;
  return false;
}

}  // namespace

synthkit::SceneSpec sample_scene_spec(const config::RunConfig& cfg, int index) {
  Rng rng = Rng::derive(cfg.seed, RngStream::kSceneSample,
                        static_cast<std::uint64_t>(index));
  synthkit::SceneSpec spec;
  spec.frames = cfg.frames;
  spec.height = cfg.height;
  spec.width = cfg.width;
  spec.jitter = cfg.jitter;

  if (cfg.holdout_mode == config::HoldoutMode::kOnly) {
    const auto& pair =
        cfg.holdout_pairs[rng.uniform_int(0, static_cast<int>(cfg.holdout_pairs.size()) - 1)];
    spec.shape = static_cast<synthkit::ShapeKind>(pair.first);
    spec.color_id = pair.second;
  } else {
    int shape = rng.uniform_int(0, synthkit::kNumShapes - 1);
    int color = rng.uniform_int(0, synthkit::kNumColors - 1);
    if (cfg.holdout_mode == config::HoldoutMode::kExclude)
      while (in_holdout(cfg, shape, color)) {
        shape = rng.uniform_int(0, synthkit::kNumShapes - 1);
        color = rng.uniform_int(0, synthkit::kNumColors - 1);
      }
    spec.shape = static_cast<synthkit::ShapeKind>(shape);
    spec.color_id = color;
  }
  spec.background_id = rng.uniform_int(0, synthkit::kNumBackgrounds - 1);
  spec.size = rng.uniform_in(cfg.size_min, cfg.size_max);

  synthkit::Trajectory& tr = spec.trajectory;
  tr.vel_x = rng.uniform_in(-cfg.speed_max, cfg.speed_max);
  tr.vel_y = rng.uniform_in(-cfg.speed_max, cfg.speed_max);
  if (rng.uniform() < 0.5) {
    tr.sin_amp = rng.uniform_in(0.5, 2.0);
    tr.sin_period = rng.uniform_in(8.0, 24.0);
    tr.sin_phase = rng.uniform_in(0.0, 2.0 * kPi);
  }

  // Place the start so the whole path stays inside with a half-pixel margin;
  // shrink the motion terms until a feasible window exists.
  const double margin = 0.5;
  for (int attempt = 0; attempt < 8; ++attempt) {
    double dx_min = 0.0, dx_max = 0.0, dy_min = 0.0, dy_max = 0.0;
    for (int t = 0; t < spec.frames; ++t) {
      const double dx = tr.vel_x * t;
      double dy = tr.vel_y * t;
      if (tr.sin_amp != 0.0)
        dy += tr.sin_amp * std::sin(2.0 * kPi * t / tr.sin_period + tr.sin_phase);
      dx_min = std::min(dx_min, dx);
      dx_max = std::max(dx_max, dx);
      dy_min = std::min(dy_min, dy);
      dy_max = std::max(dy_max, dy);
    }
    const double x_lo = spec.size + margin - dx_min;
    const double x_hi = cfg.width - spec.size - margin - dx_max;
    const double y_lo = spec.size + margin - dy_min;
    const double y_hi = cfg.height - spec.size - margin - dy_max;
    if (x_lo <= x_hi && y_lo <= y_hi) {
      tr.start_x = rng.uniform_in(x_lo, x_hi);
      tr.start_y = rng.uniform_in(y_lo, y_hi);
      return spec;
    }
    tr.vel_x *= 0.5;
    tr.vel_y *= 0.5;
    tr.sin_amp *= 0.5;
  }
  tr.vel_x = tr.vel_y = tr.sin_amp = 0.0;
  tr.start_x = cfg.width / 2.0;
  tr.start_y = cfg.height / 2.0;
  return spec;
}

std::vector<Triplet> generate_dataset(const config::RunConfig& cfg) {
  std::vector<Triplet> out;
  out.reserve(cfg.n_samples);
  for (int i = 0; i < cfg.n_samples; ++i) {
    const synthkit::SceneSpec spec = sample_scene_spec(cfg, i);
    out.push_back(synthkit::gen_triplet(
        spec, mix_seed(cfg.seed, static_cast<std::uint64_t>(RngStream::kSceneSample),
                       static_cast<std::uint64_t>(i), 0x5eedULL)));
  }
  return out;
}

TrainRunResult run_training(const config::RunConfig& cfg,
                            const std::vector<Triplet>& dataset,
                            const std::string& out_checkpoint,
                            const std::string& init_checkpoint,
                            const std::string& resume_checkpoint,
                            const StepCallback& callback) {
  config::validate(cfg);
  const denoiser::ArchConfig arch = cfg.arch_config();
  const trainer::TrainConfig tcfg = cfg.train_config();
  const diffusion::NoiseSchedule sched =
      diffusion::make_schedule(cfg.sched_steps, cfg.beta_min, cfg.beta_max);
  const sampling::ClipGeometry geom = cfg.clip_geometry();
  const std::uint64_t hash = config::config_hash(cfg);
  const bool finetune = cfg.mode == config::TrainMode::kFinetune;

  TrainRunResult res;
  if (!resume_checkpoint.empty()) {
    io::LoadedState st = io::state_from_checkpoint(
        io::load_checkpoint(resume_checkpoint), arch, cfg.lora_rank, cfg.lora_scale);
    if (st.config_hash != hash)
      throw io::FileError("resume checkpoint config hash mismatch (checkpoint " +
                          config::hash_hex(st.config_hash) + ", config " +
                          config::hash_hex(hash) + ")");
    res.params = std::move(st.params);
    res.adapter = std::move(st.adapter);
    res.opt = std::move(st.opt);
    if (finetune && !res.adapter)
      throw io::FileError("resume checkpoint has no adapter for finetune mode");
  } else if (!init_checkpoint.empty()) {
    io::LoadedState st = io::state_from_checkpoint(
        io::load_checkpoint(init_checkpoint), arch, cfg.lora_rank, cfg.lora_scale);
    res.params = std::move(st.params);
    if (finetune)
      res.adapter = denoiser::make_adapter(res.params, cfg.lora_rank,
                                           cfg.lora_scale, cfg.seed);
  } else {
    res.params = denoiser::init_params(arch, cfg.seed);
    if (finetune)
      res.adapter = denoiser::make_adapter(res.params, cfg.lora_rank,
                                           cfg.lora_scale, cfg.seed);
  }

  auto save = [&](const std::string& path) {
    const io::Checkpoint ck = io::checkpoint_from_state(
        res.params, res.adapter ? &*res.adapter : nullptr, &res.opt,
        res.opt.step, hash);
    io::save_checkpoint(path, ck);
  };

  char line[160];
  for (long long step = res.opt.step; step < cfg.steps; ++step) {
    const std::vector<trainer::TrainSample> batch =
        trainer::build_batch(dataset, tcfg, geom, step, finetune);
    trainer::LossReport rep;
    if (finetune)
      rep = trainer::train_step(res.params, *res.adapter, batch, tcfg, sched,
                                res.opt);
    else
      rep = trainer::pretrain_step(res.params, batch, tcfg, sched, res.opt);
    std::snprintf(line, sizeof(line), "%lld\t%.12g\t%.12g\t%.12g\n", step,
                  rep.l_d, rep.l_c, rep.l);
    res.log += line;
    if (callback) callback(step, rep);
    // interval checkpoints keep their own files so an interrupted run can be
    // resumed from any of them
    if (!out_checkpoint.empty() && (step + 1) % cfg.checkpoint_interval == 0 &&
        step + 1 < cfg.steps)
      save(out_checkpoint + ".step" + std::to_string(step + 1));
  }
  if (!out_checkpoint.empty()) {
    save(out_checkpoint);
    io::save_text(out_checkpoint + ".log", res.log);
  }
  return res;
}

std::vector<VideoTensor> generate_conditioned(
    const denoiser::DenoiserParams& merged_params,
    const std::vector<Triplet>& triplets, const config::RunConfig& cfg,
    std::uint64_t seed) {
  const diffusion::NoiseSchedule sched =
      diffusion::make_schedule(cfg.sched_steps, cfg.beta_min, cfg.beta_max);
  const sampling::ClipGeometry geom = cfg.clip_geometry();
  std::vector<VideoTensor> out;
  out.reserve(triplets.size());
  for (std::size_t i = 0; i < triplets.size(); ++i) {
    const Triplet& tr = triplets[i];
    if (tr.masks.frames < geom.clip_frames)
      throw std::invalid_argument("generate_conditioned: triplet shorter than clip");
    MaskSequence clip_masks(geom.clip_frames, tr.masks.height, tr.masks.width);
    std::copy(tr.masks.data.begin(),
              tr.masks.data.begin() +
                  static_cast<std::size_t>(geom.clip_frames) * tr.masks.frame_size(),
              clip_masks.data.begin());
    const MotionFeatures feat = codec::encode_mask(clip_masks, geom.patch);
    denoiser::ConditionBundle conds;
    conds.mask_features = &feat;
    conds.code = tr.cond;
    out.push_back(sampling::generate_clip(
        merged_params, conds, sched, geom,
        mix_seed(seed, static_cast<std::uint64_t>(RngStream::kSampleInit), i)));
  }
  return out;
}

maskeval::MiouResult evaluate_mask_alignment(
    const denoiser::DenoiserParams& params, const denoiser::LoraAdapter* adapter,
    const std::vector<Triplet>& triplets, const config::RunConfig& cfg,
    std::uint64_t seed) {
  const denoiser::DenoiserParams merged =
      adapter != nullptr ? denoiser::merge_lora(params, *adapter) : params;
  const std::vector<VideoTensor> videos =
      generate_conditioned(merged, triplets, cfg, seed);
  const sampling::ClipGeometry geom = cfg.clip_geometry();
  std::vector<MaskSequence> gt;
  gt.reserve(triplets.size());
  for (const Triplet& tr : triplets) {
    MaskSequence m(geom.clip_frames, tr.masks.height, tr.masks.width);
    std::copy(tr.masks.data.begin(),
              tr.masks.data.begin() +
                  static_cast<std::size_t>(geom.clip_frames) * tr.masks.frame_size(),
              m.data.begin());
    gt.push_back(std::move(m));
  }
  return maskeval::mask_miou(videos, gt);
}

std::vector<ConditionCode> probe_codes(const config::RunConfig& cfg) {
  std::vector<ConditionCode> out;
  if (!cfg.holdout_pairs.empty()) {
    for (const auto& [shape, color] : cfg.holdout_pairs)
      for (int bg = 0; bg < synthkit::kNumBackgrounds; ++bg)
        out.push_back({shape, color, bg});
    return out;
  }
  for (int color = 0; color < synthkit::kNumColors; ++color)
    for (int bg = 0; bg < synthkit::kNumBackgrounds; ++bg)
      out.push_back({(color + bg) % synthkit::kNumShapes, color, bg});
  return out;
}

}  // namespace maskvid::pipeline
