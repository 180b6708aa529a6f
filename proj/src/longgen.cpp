#include "maskvid/longgen.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include "maskvid/codec.hpp"
#include "maskvid/kernels.hpp"
#include "maskvid/rng.hpp"

namespace maskvid::longgen {

namespace {

VideoTensor replicate_last_frame(const VideoTensor& clip, int copies) {
  VideoTensor out(copies, clip.height, clip.width);
  const int last = clip.frames - 1;
  for (int t = 0; t < copies; ++t)
    for (int y = 0; y < clip.height; ++y)
      for (int x = 0; x < clip.width; ++x)
        for (int c = 0; c < 3; ++c) out.at(t, y, x, c) = clip.at(last, y, x, c);
  return out;
}

VideoTensor tail_frames(const VideoTensor& clip, int count) {
  VideoTensor out(count, clip.height, clip.width);
  const std::size_t frame_sz = static_cast<std::size_t>(clip.height) * clip.width * 3;
  std::copy(clip.data.begin() + static_cast<std::size_t>(clip.frames - count) * frame_sz,
            clip.data.end(), out.data.begin());
  return out;
}

}  // namespace

VideoTensor generate_long(const LongGenPlan& plan,
                          const denoiser::DenoiserParams& params,
                          const diffusion::NoiseSchedule& sched,
                          const sampling::ClipGeometry& geom) {
  if (plan.total_clips < 1)
    throw std::invalid_argument("generate_long: total_clips must be >= 1");
  if (plan.clip_frames != geom.clip_frames)
    throw std::invalid_argument("generate_long: clip_frames inconsistent with geometry");
  if (plan.motion_window < 1 || plan.motion_window > plan.clip_frames)
    throw std::invalid_argument("generate_long: motion_window must be in [1, clip_frames]");
  const int total_frames = plan.total_clips * plan.clip_frames;
  if (plan.masks.frames != total_frames)
    throw std::invalid_argument(
        "generate_long: mask sequence has " + std::to_string(plan.masks.frames) +
        " frames, plan needs " + std::to_string(total_frames));
  if (plan.masks.height != geom.height || plan.masks.width != geom.width)
    throw std::invalid_argument("generate_long: mask spatial dims mismatch");

  VideoTensor out(total_frames, geom.height, geom.width);
  VideoTensor prev_clip;
  const std::size_t frame_sz = static_cast<std::size_t>(geom.height) * geom.width * 3;

  for (int k = 0; k < plan.total_clips; ++k) {
    MaskSequence clip_masks(plan.clip_frames, geom.height, geom.width);
    std::copy(plan.masks.data.begin() +
                  static_cast<std::size_t>(k) * plan.clip_frames * plan.masks.frame_size(),
              plan.masks.data.begin() +
                  static_cast<std::size_t>(k + 1) * plan.clip_frames * plan.masks.frame_size(),
              clip_masks.data.begin());
    const MotionFeatures mask_feat = codec::encode_mask(clip_masks, geom.patch);

    denoiser::ConditionBundle conds;
    conds.mask_features = &mask_feat;
    conds.code = plan.code;

    LatentTensor app, mot;
    if (k > 0 && plan.use_conditions) {
      app = codec::encode(replicate_last_frame(prev_clip, geom.patch.pt), geom.patch);
      mot = codec::encode(
          codec::downsample(tail_frames(prev_clip, plan.motion_window),
                            plan.downsample_factor),
          geom.patch);
      conds.appearance = &app;
      conds.motion = &mot;
    }

    const VideoTensor clip = sampling::generate_clip(
        params, conds, sched, geom,
        mix_seed(plan.seed, static_cast<std::uint64_t>(RngStream::kLongClip),
                 static_cast<std::uint64_t>(k)));
    std::copy(clip.data.begin(), clip.data.end(),
              out.data.begin() + static_cast<std::size_t>(k) * plan.clip_frames * frame_sz);
    prev_clip = clip;
  }
  return out;
}

std::vector<double> boundary_consistency(const VideoTensor& video,
                                         int clip_frames) {
  if (clip_frames < 1 || video.frames % clip_frames != 0)
    throw std::invalid_argument(
        "boundary_consistency: frame count not divisible by clip_frames");
  const int clips = video.frames / clip_frames;
  std::vector<double> scores;
  const std::size_t frame_sz = static_cast<std::size_t>(video.height) * video.width * 3;
  for (int k = 0; k + 1 < clips; ++k) {
    const int last = (k + 1) * clip_frames - 1;
    const int first = (k + 1) * clip_frames;
    std::vector<double> diffs(frame_sz);
    const float* a = video.data.data() + static_cast<std::size_t>(last) * frame_sz;
    const float* b = video.data.data() + static_cast<std::size_t>(first) * frame_sz;
    for (std::size_t i = 0; i < frame_sz; ++i)
      diffs[i] = std::abs(static_cast<double>(a[i]) - static_cast<double>(b[i]));
    scores.push_back(kernels::compensated_sum(diffs.data(), diffs.size()) /
                     static_cast<double>(frame_sz));
  }
  return scores;
}

}  // namespace maskvid::longgen
