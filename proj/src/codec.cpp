#include "maskvid/codec.hpp"

#include <stdexcept>
#include <string>

#include "maskvid/kernels.hpp"

namespace maskvid::codec {

namespace {

void check_divisible(int frames, int height, int width, const PatchFactors& pf,
                     const char* op) {
  if (pf.pt < 1 || pf.ph < 1 || pf.pw < 1)
    throw std::invalid_argument(std::string(op) + ": patch factors must be >= 1");
  if (frames % pf.pt || height % pf.ph || width % pf.pw)
    throw std::invalid_argument(
        std::string(op) + ": dims (" + std::to_string(frames) + "," +
        std::to_string(height) + "," + std::to_string(width) +
        ") not divisible by patch factors (" + std::to_string(pf.pt) + "," +
        std::to_string(pf.ph) + "," + std::to_string(pf.pw) + ")");
}

}  // namespace

LatentTensor encode(const VideoTensor& video, const PatchFactors& pf) {
  check_divisible(video.frames, video.height, video.width, pf, "encode");
  LatentTensor out(video.frames / pf.pt, video.height / pf.ph,
                   video.width / pf.pw, pf.channels());
  const bool par = kernels::parallel_enabled();
#pragma omp parallel for schedule(static) if (par)
  for (int t = 0; t < out.tdim; ++t)
    for (int y = 0; y < out.height; ++y)
      for (int x = 0; x < out.width; ++x)
        for (int dt = 0; dt < pf.pt; ++dt)
          for (int dh = 0; dh < pf.ph; ++dh)
            for (int dw = 0; dw < pf.pw; ++dw)
              for (int c = 0; c < 3; ++c)
                out.at(t, y, x, ((dt * pf.ph + dh) * pf.pw + dw) * 3 + c) =
                    video.at(t * pf.pt + dt, y * pf.ph + dh, x * pf.pw + dw, c);
  return out;
}

VideoTensor decode(const LatentTensor& latent, const PatchFactors& pf) {
  if (latent.channels != pf.channels())
    throw std::invalid_argument(
        "decode: latent has " + std::to_string(latent.channels) +
        " channels, patch factors need " + std::to_string(pf.channels()));
  VideoTensor out(latent.tdim * pf.pt, latent.height * pf.ph,
                  latent.width * pf.pw);
  const bool par = kernels::parallel_enabled();
#pragma omp parallel for schedule(static) if (par)
  for (int t = 0; t < latent.tdim; ++t)
    for (int y = 0; y < latent.height; ++y)
      for (int x = 0; x < latent.width; ++x)
        for (int dt = 0; dt < pf.pt; ++dt)
          for (int dh = 0; dh < pf.ph; ++dh)
            for (int dw = 0; dw < pf.pw; ++dw)
              for (int c = 0; c < 3; ++c)
                out.at(t * pf.pt + dt, y * pf.ph + dh, x * pf.pw + dw, c) =
                    static_cast<float>(latent.at(
                        t, y, x, ((dt * pf.ph + dh) * pf.pw + dw) * 3 + c));
  return out;
}

VideoTensor downsample(const VideoTensor& video, int factor) {
  if (factor < 1) throw std::invalid_argument("downsample: factor must be >= 1");
  if (video.height % factor || video.width % factor)
    throw std::invalid_argument("downsample: spatial dims not divisible by " +
                                std::to_string(factor));
  VideoTensor out(video.frames, video.height / factor, video.width / factor);
  const double inv = 1.0 / (factor * factor);
  const bool par = kernels::parallel_enabled();
#pragma omp parallel for schedule(static) if (par)
  for (int t = 0; t < video.frames; ++t)
    for (int y = 0; y < out.height; ++y)
      for (int x = 0; x < out.width; ++x)
        for (int c = 0; c < 3; ++c) {
          double acc = 0.0;
          for (int dy = 0; dy < factor; ++dy)
            for (int dx = 0; dx < factor; ++dx)
              acc += video.at(t, y * factor + dy, x * factor + dx, c);
          out.at(t, y, x, c) = static_cast<float>(acc * inv);
        }
  return out;
}

MotionFeatures encode_mask(const MaskSequence& masks, const PatchFactors& pf) {
  VideoTensor replicated(masks.frames, masks.height, masks.width);
  for (int t = 0; t < masks.frames; ++t)
    for (int y = 0; y < masks.height; ++y)
      for (int x = 0; x < masks.width; ++x) {
        const float v = masks.at(t, y, x) ? 1.0f : 0.0f;
        replicated.at(t, y, x, 0) = v;
        replicated.at(t, y, x, 1) = v;
        replicated.at(t, y, x, 2) = v;
      }
  return encode(replicated, pf);
}

}  // namespace maskvid::codec
