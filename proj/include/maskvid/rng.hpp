#pragma once

#include <cmath>
#include <cstdint>
#include <random>

// Deterministic randomness. Every stochastic draw in the project derives its
// generator from (user seed, stream tag, indices...) so values are pure
// functions of those inputs -- training can resume from a checkpoint without
// serializing generator state.
namespace maskvid {

// Stream tags keep independent draw sites decorrelated.
enum class RngStream : std::uint64_t {
  kParamInit = 1,
  kAdapterInit = 2,
  kSceneSample = 3,
  kBackgroundJitter = 4,
  kBatchPick = 5,
  kTimestep = 6,
  kTrainNoise = 7,
  kSampleInit = 8,
  kSampleStep = 9,
  kProbe = 10,
  kLongClip = 11,
};

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline std::uint64_t mix_seed(std::uint64_t a) { return splitmix64(a); }

template <typename... Rest>
std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b, Rest... rest) {
  return mix_seed(splitmix64(a) ^ (b + 0x9e3779b97f4a7c15ULL), rest...);
}

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : gen_(seed) {}

  template <typename... Parts>
  static Rng derive(std::uint64_t seed, RngStream stream, Parts... parts) {
    return Rng(mix_seed(seed, static_cast<std::uint64_t>(stream),
                        static_cast<std::uint64_t>(parts)...));
  }

  // Uniform in [0, 1), 53-bit resolution.
  double uniform() {
    return static_cast<double>(gen_() >> 11) * 0x1.0p-53;
  }

  // Uniform integer in [lo, hi] via rejection-free modulo over a wide range.
  // Bias is < 2^-53 for the small ranges used here.
  int uniform_int(int lo, int hi) {
    return lo + static_cast<int>(uniform() * (hi - lo + 1));
  }

  double uniform_in(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Box-Muller; consumes exactly two uniforms per call. std::normal_distribution
  // is implementation-defined, so it is avoided on purpose.
  double normal() {
    const double u1 = 1.0 - uniform();  // (0, 1]
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) *
           std::cos(2.0 * 3.141592653589793238462643 * u2);
  }

  template <typename Container>
  void fill_normal(Container& c) {
    for (auto& v : c) v = normal();
  }

 private:
  std::mt19937_64 gen_;
};

}  // namespace maskvid
