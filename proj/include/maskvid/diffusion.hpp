#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "maskvid/tensor.hpp"

// DDPM noise schedule, forward process, loss and ancestral sampler.
// Epsilon-prediction parameterization throughout.
namespace maskvid::diffusion {

struct NoiseSchedule {
  int steps = 0;                  // T
  std::vector<double> beta;       // beta[t-1] = beta_t, t in 1..T
  std::vector<double> alpha_bar;  // alpha_bar[t-1], cumulative product

  double beta_at(int t) const { return beta.at(t - 1); }
  double alpha_bar_at(int t) const { return t == 0 ? 1.0 : alpha_bar.at(t - 1); }
};

// Defaults satisfy alpha_bar_T < 0.01 at T=200.
inline constexpr int kDefaultSteps = 200;
inline constexpr double kDefaultBetaMin = 1e-4;
inline constexpr double kDefaultBetaMax = 0.05;

// Linear beta interpolation; throws std::invalid_argument on a bad range.
NoiseSchedule make_schedule(int steps, double beta_min, double beta_max);

// x_t = sqrt(abar_t) x0 + sqrt(1-abar_t) eps, 1 <= t <= T.
LatentTensor q_sample(const LatentTensor& x0, int t, const LatentTensor& eps,
                      const NoiseSchedule& sched);

// Mean over elements of (eps - eps_hat)^2.
double diffusion_loss(const LatentTensor& eps, const LatentTensor& eps_hat);

// One ancestral step; z must be zero at t=1 (pass nullptr).
LatentTensor ddpm_step(const LatentTensor& x_t, const LatentTensor& eps_hat,
                       int t, const NoiseSchedule& sched,
                       const LatentTensor* z);

// Noise predictor plugged into the sampler: fills eps_hat for (x_t, t).
using DenoiseFn =
    std::function<void(const LatentTensor& x_t, int t, LatentTensor& eps_hat)>;

struct LatentShape {
  int tdim, height, width, channels;
};

// Runs T ancestral steps from x_T ~ N(0, I); deterministic given seed.
LatentTensor sample(const DenoiseFn& denoise, const LatentShape& shape,
                    const NoiseSchedule& sched, std::uint64_t seed);

}  // namespace maskvid::diffusion
