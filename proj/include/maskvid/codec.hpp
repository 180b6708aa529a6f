#pragma once

#include "maskvid/tensor.hpp"

// Invertible latent codec standing in for the video VAE: a parameter-free
// space-time-to-depth rearrangement. encode/decode are exact inverses, so
// reconstruction error never confounds the diffusion-side tests.
namespace maskvid::codec {

struct PatchFactors {
  int pt = 2, ph = 2, pw = 2;
  int channels() const { return 3 * pt * ph * pw; }
};

// Latent channel layout: c' = ((dt*ph + dh)*pw + dw)*3 + rgb.
LatentTensor encode(const VideoTensor& video, const PatchFactors& pf = {});
VideoTensor decode(const LatentTensor& latent, const PatchFactors& pf = {});

// Average pooling over factor x factor spatial blocks; frame count unchanged.
VideoTensor downsample(const VideoTensor& video, int factor);

// Replicate mask to 3 channels and encode; no trainable parameters.
MotionFeatures encode_mask(const MaskSequence& masks, const PatchFactors& pf = {});

}  // namespace maskvid::codec
