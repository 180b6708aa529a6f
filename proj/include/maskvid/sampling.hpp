#pragma once

#include <cstdint>

#include "maskvid/codec.hpp"
#include "maskvid/denoiser.hpp"
#include "maskvid/diffusion.hpp"
#include "maskvid/tensor.hpp"

// Glue between the sampler and the denoiser: clip generation with a fixed
// condition bundle. Adapters should be merged into the params first when
// sampling many steps (merge_lora); the runtime low-rank path is for
// training.
namespace maskvid::sampling {

struct ClipGeometry {
  int clip_frames = 16;
  int height = 32;
  int width = 48;
  codec::PatchFactors patch;

  diffusion::LatentShape latent_shape() const {
    return {clip_frames / patch.pt, height / patch.ph, width / patch.pw,
            patch.channels()};
  }
};

// Runs the full reverse process with the given conditions (conds.t is
// overwritten per step). Deterministic given seed.
LatentTensor sample_latent(const denoiser::DenoiserParams& params,
                           denoiser::ConditionBundle conds,
                           const diffusion::NoiseSchedule& sched,
                           const ClipGeometry& geom, std::uint64_t seed);

// sample_latent + decode + clamp to [0,1].
VideoTensor generate_clip(const denoiser::DenoiserParams& params,
                          denoiser::ConditionBundle conds,
                          const diffusion::NoiseSchedule& sched,
                          const ClipGeometry& geom, std::uint64_t seed);

}  // namespace maskvid::sampling
