#include <doctest.h>

#include <cmath>
#include <stdexcept>

#include "maskvid/longgen.hpp"
#include "maskvid/pipeline.hpp"
#include "maskvid/rng.hpp"

using namespace maskvid;

namespace {

config::RunConfig tiny_config() {
  config::RunConfig cfg;
  cfg.frames = 12;
  cfg.height = 8;
  cfg.width = 8;
  cfg.clip_frames = 4;
  cfg.motion_window = 4;
  cfg.sched_steps = 6;
  cfg.model_width = 16;
  cfg.model_blocks = 1;
  cfg.mlp_hidden = 16;
  cfg.size_min = 1.5;
  cfg.size_max = 2.5;
  cfg.speed_max = 0.2;
  cfg.n_samples = 2;
  config::validate(cfg);
  return cfg;
}

MaskSequence moving_disk_masks(int frames, int h, int w) {
  MaskSequence m(frames, h, w);
  for (int f = 0; f < frames; ++f) {
    const double cx = 3.0 + 0.2 * f, cy = 4.0;
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        const double dx = x + 0.5 - cx, dy = y + 0.5 - cy;
        m.at(f, y, x) = dx * dx + dy * dy <= 4.0 ? 1 : 0;
      }
  }
  return m;
}

}  // namespace

TEST_CASE("single-clip plan equals plain conditioned sampling bit-exactly") {
  const config::RunConfig cfg = tiny_config();
  const denoiser::DenoiserParams params =
      denoiser::init_params(cfg.arch_config(), 31);
  const diffusion::NoiseSchedule sched =
      diffusion::make_schedule(cfg.sched_steps, cfg.beta_min, cfg.beta_max);
  const sampling::ClipGeometry geom = cfg.clip_geometry();

  longgen::LongGenPlan plan;
  plan.total_clips = 1;
  plan.clip_frames = cfg.clip_frames;
  plan.motion_window = cfg.motion_window;
  plan.masks = moving_disk_masks(cfg.clip_frames, cfg.height, cfg.width);
  plan.code = {1, 2, 0};
  plan.seed = 99;
  const VideoTensor long_video = longgen::generate_long(plan, params, sched, geom);

  const MotionFeatures feat = codec::encode_mask(plan.masks, geom.patch);
  denoiser::ConditionBundle conds;
  conds.mask_features = &feat;
  conds.code = plan.code;
  const VideoTensor direct = sampling::generate_clip(
      params, conds, sched, geom,
      mix_seed(plan.seed, static_cast<std::uint64_t>(RngStream::kLongClip), 0ULL));
  CHECK(long_video.data == direct.data);
}

TEST_CASE("three 4-frame clips produce a 12-frame video, deterministically") {
  const config::RunConfig cfg = tiny_config();
  const denoiser::DenoiserParams params =
      denoiser::init_params(cfg.arch_config(), 32);
  const diffusion::NoiseSchedule sched =
      diffusion::make_schedule(cfg.sched_steps, cfg.beta_min, cfg.beta_max);

  longgen::LongGenPlan plan;
  plan.total_clips = 3;
  plan.clip_frames = cfg.clip_frames;
  plan.motion_window = cfg.motion_window;
  plan.masks = moving_disk_masks(12, cfg.height, cfg.width);
  plan.seed = 5;
  const VideoTensor a = longgen::generate_long(plan, params, sched, cfg.clip_geometry());
  CHECK(a.frames == 12);
  const VideoTensor b = longgen::generate_long(plan, params, sched, cfg.clip_geometry());
  CHECK(a.data == b.data);
}

TEST_CASE("mask length mismatches are rejected") {
  const config::RunConfig cfg = tiny_config();
  const denoiser::DenoiserParams params =
      denoiser::init_params(cfg.arch_config(), 33);
  const diffusion::NoiseSchedule sched =
      diffusion::make_schedule(cfg.sched_steps, cfg.beta_min, cfg.beta_max);
  longgen::LongGenPlan plan;
  plan.total_clips = 3;
  plan.clip_frames = cfg.clip_frames;
  plan.motion_window = cfg.motion_window;
  plan.masks = moving_disk_masks(8, cfg.height, cfg.width);  // needs 12
  CHECK_THROWS_AS(longgen::generate_long(plan, params, sched, cfg.clip_geometry()),
                  std::invalid_argument);
}

TEST_CASE("boundary_consistency cases") {
  SUBCASE("identical frames everywhere score 0 at every boundary") {
    VideoTensor v(8, 4, 4);
    for (float& x : v.data) x = 0.3f;
    for (double s : longgen::boundary_consistency(v, 4)) CHECK(s == 0.0);
  }
  SUBCASE("black/white flip at the boundary scores 1") {
    VideoTensor v(4, 4, 4);
    for (int t = 2; t < 4; ++t)
      for (int y = 0; y < 4; ++y)
        for (int x = 0; x < 4; ++x)
          for (int c = 0; c < 3; ++c) v.at(t, y, x, c) = 1.0f;
    const std::vector<double> s = longgen::boundary_consistency(v, 2);
    REQUIRE(s.size() == 1);
    CHECK(s[0] == 1.0);
  }
  SUBCASE("random video matches the naive per-pixel oracle") {
    VideoTensor v(6, 5, 7);
    Rng rng(44);
    for (float& x : v.data) x = static_cast<float>(rng.uniform());
    const std::vector<double> s = longgen::boundary_consistency(v, 2);
    REQUIRE(s.size() == 2);
    for (int k = 0; k < 2; ++k) {
      const int last = (k + 1) * 2 - 1, first = (k + 1) * 2;
      double naive = 0.0;
      for (int y = 0; y < 5; ++y)
        for (int x = 0; x < 7; ++x)
          for (int c = 0; c < 3; ++c)
            naive += std::abs(static_cast<double>(v.at(last, y, x, c)) -
                              static_cast<double>(v.at(first, y, x, c)));
      naive /= 5.0 * 7.0 * 3.0;
      CHECK(std::abs(s[k] - naive) <= 1e-12 * std::max(1.0, naive));
    }
  }
  SUBCASE("indivisible frame counts are rejected") {
    CHECK_THROWS_AS(longgen::boundary_consistency(VideoTensor(7, 4, 4), 2),
                    std::invalid_argument);
  }
}
