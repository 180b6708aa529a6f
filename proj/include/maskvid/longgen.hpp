#pragma once

#include <cstdint>
#include <vector>

#include "maskvid/denoiser.hpp"
#include "maskvid/diffusion.hpp"
#include "maskvid/sampling.hpp"
#include "maskvid/tensor.hpp"

// Iterative long-video generation: fixed-length clips generated in sequence,
// clip k conditioned on clip k-1's final frame (appearance, full resolution)
// and its trailing low-resolution window (motion), then concatenated without
// overlap.
namespace maskvid::longgen {

struct LongGenPlan {
  int total_clips = 1;
  int clip_frames = 16;    // t1
  int motion_window = 16;  // t2, <= clip_frames
  int downsample_factor = 2;
  MaskSequence masks;  // total_clips * clip_frames frames
  ConditionCode code;
  std::uint64_t seed = 0;
  // Ablation switch: drop appearance/motion conditions for clips k > 0.
  bool use_conditions = true;
};

// Generates plan.total_clips clips and concatenates them. The adapter, if
// any, must already be merged into params. Deterministic given plan.seed.
VideoTensor generate_long(const LongGenPlan& plan,
                          const denoiser::DenoiserParams& params,
                          const diffusion::NoiseSchedule& sched,
                          const sampling::ClipGeometry& geom);

// Mean absolute pixel difference between the last frame of clip k and the
// first frame of clip k+1, for each boundary.
std::vector<double> boundary_consistency(const VideoTensor& video,
                                         int clip_frames);

}  // namespace maskvid::longgen
