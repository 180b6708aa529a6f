#pragma once

#include <cstdint>
#include <cstddef>
#include <vector>

namespace maskvid {

// Pixel video, frames x height x width x 3, values in [0,1]. f32 storage
// matches the on-disk payload so dataset round-trips are exact.
struct VideoTensor {
  int frames = 0, height = 0, width = 0;
  std::vector<float> data;

  VideoTensor() = default;
  VideoTensor(int t, int h, int w)
      : frames(t), height(h), width(w),
        data(static_cast<std::size_t>(t) * h * w * 3, 0.0f) {}

  std::size_t size() const { return data.size(); }
  std::size_t idx(int t, int y, int x, int c) const {
    return ((static_cast<std::size_t>(t) * height + y) * width + x) * 3 + c;
  }
  float& at(int t, int y, int x, int c) { return data[idx(t, y, x, c)]; }
  float at(int t, int y, int x, int c) const { return data[idx(t, y, x, c)]; }

  bool same_shape(const VideoTensor& o) const {
    return frames == o.frames && height == o.height && width == o.width;
  }
};

// Binary occupancy of the tracked object, frames x height x width.
struct MaskSequence {
  int frames = 0, height = 0, width = 0;
  std::vector<std::uint8_t> data;

  MaskSequence() = default;
  MaskSequence(int t, int h, int w)
      : frames(t), height(h), width(w),
        data(static_cast<std::size_t>(t) * h * w, 0) {}

  std::size_t idx(int t, int y, int x) const {
    return (static_cast<std::size_t>(t) * height + y) * width + x;
  }
  std::uint8_t& at(int t, int y, int x) { return data[idx(t, y, x)]; }
  std::uint8_t at(int t, int y, int x) const { return data[idx(t, y, x)]; }

  const std::uint8_t* frame(int t) const {
    return data.data() + static_cast<std::size_t>(t) * height * width;
  }
  std::uint8_t* frame(int t) {
    return data.data() + static_cast<std::size_t>(t) * height * width;
  }
  std::size_t frame_size() const {
    return static_cast<std::size_t>(height) * width;
  }

  long long popcount(int t) const {
    long long n = 0;
    const std::uint8_t* f = frame(t);
    for (std::size_t i = 0; i < frame_size(); ++i) n += f[i];
    return n;
  }

  bool same_shape(const MaskSequence& o) const {
    return frames == o.frames && height == o.height && width == o.width;
  }
};

// Patchified latent, tdim x height x width x channels, f64 (training path).
struct LatentTensor {
  int tdim = 0, height = 0, width = 0, channels = 0;
  std::vector<double> data;

  LatentTensor() = default;
  LatentTensor(int t, int h, int w, int c)
      : tdim(t), height(h), width(w), channels(c),
        data(static_cast<std::size_t>(t) * h * w * c, 0.0) {}

  std::size_t numel() const { return data.size(); }
  std::size_t idx(int t, int y, int x, int c) const {
    return ((static_cast<std::size_t>(t) * height + y) * width + x) * channels + c;
  }
  double& at(int t, int y, int x, int c) { return data[idx(t, y, x, c)]; }
  double at(int t, int y, int x, int c) const { return data[idx(t, y, x, c)]; }

  int tokens() const { return tdim * height * width; }

  bool same_shape(const LatentTensor& o) const {
    return tdim == o.tdim && height == o.height && width == o.width &&
           channels == o.channels;
  }
};

// Mask sequences encoded through the codec; same layout as a latent.
using MotionFeatures = LatentTensor;

// Discrete stand-in for the text prompt: (shape kind, color, background).
struct ConditionCode {
  int shape = 0;
  int color = 0;
  int background = 0;
  bool operator==(const ConditionCode&) const = default;
};

struct Triplet {
  VideoTensor video;
  ConditionCode cond;
  MaskSequence masks;
};

}  // namespace maskvid
