#include "maskvid/sampling.hpp"

#include <algorithm>

namespace maskvid::sampling {

LatentTensor sample_latent(const denoiser::DenoiserParams& params,
                           denoiser::ConditionBundle conds,
                           const diffusion::NoiseSchedule& sched,
                           const ClipGeometry& geom, std::uint64_t seed) {
  const diffusion::LatentShape shape = geom.latent_shape();
  diffusion::DenoiseFn fn = [&](const LatentTensor& x_t, int t,
                                LatentTensor& eps_hat) {
    conds.t = t;
    eps_hat = denoiser::forward(x_t, conds, params, nullptr, nullptr);
  };
  return diffusion::sample(fn, shape, sched, seed);
}

VideoTensor generate_clip(const denoiser::DenoiserParams& params,
                          denoiser::ConditionBundle conds,
                          const diffusion::NoiseSchedule& sched,
                          const ClipGeometry& geom, std::uint64_t seed) {
  const LatentTensor latent = sample_latent(params, conds, sched, geom, seed);
  VideoTensor video = codec::decode(latent, geom.patch);
  for (float& v : video.data) v = std::clamp(v, 0.0f, 1.0f);
  return video;
}

}  // namespace maskvid::sampling
