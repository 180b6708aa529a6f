#include "maskvid/diffusion.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include "maskvid/kernels.hpp"
#include "maskvid/rng.hpp"

namespace maskvid::diffusion {

namespace {

void check_t(int t, const NoiseSchedule& sched, const char* op) {
  if (t < 1 || t > sched.steps)
    throw std::invalid_argument(std::string(op) + ": step " + std::to_string(t) +
                                " outside [1, " + std::to_string(sched.steps) + "]");
}

}  // namespace

NoiseSchedule make_schedule(int steps, double beta_min, double beta_max) {
  if (steps < 2) throw std::invalid_argument("make_schedule: need T >= 2");
  if (!(beta_min > 0.0) || !(beta_min <= beta_max) || !(beta_max < 1.0))
    throw std::invalid_argument("make_schedule: need 0 < beta_min <= beta_max < 1");
  NoiseSchedule s;
  s.steps = steps;
  s.beta.resize(steps);
  s.alpha_bar.resize(steps);
  double prod = 1.0;
  for (int t = 0; t < steps; ++t) {
    s.beta[t] = beta_min + (beta_max - beta_min) * t / (steps - 1);
    prod *= 1.0 - s.beta[t];
    s.alpha_bar[t] = prod;
  }
  return s;
}

LatentTensor q_sample(const LatentTensor& x0, int t, const LatentTensor& eps,
                      const NoiseSchedule& sched) {
  check_t(t, sched, "q_sample");
  if (!x0.same_shape(eps))
    throw std::invalid_argument("q_sample: x0/eps shape mismatch");
  const double ab = sched.alpha_bar_at(t);
  const double a = std::sqrt(ab);
  const double b = std::sqrt(1.0 - ab);
  LatentTensor out = x0;
  for (std::size_t i = 0; i < out.data.size(); ++i)
    out.data[i] = a * x0.data[i] + b * eps.data[i];
  return out;
}

double diffusion_loss(const LatentTensor& eps, const LatentTensor& eps_hat) {
  if (!eps.same_shape(eps_hat))
    throw std::invalid_argument("diffusion_loss: shape mismatch");
  return kernels::block_sum_sq_diff(eps.data.data(), eps_hat.data.data(),
                                    eps.data.size()) /
         static_cast<double>(eps.data.size());
}

LatentTensor ddpm_step(const LatentTensor& x_t, const LatentTensor& eps_hat,
                       int t, const NoiseSchedule& sched,
                       const LatentTensor* z) {
  check_t(t, sched, "ddpm_step");
  if (!x_t.same_shape(eps_hat))
    throw std::invalid_argument("ddpm_step: shape mismatch");
  const double beta = sched.beta_at(t);
  const double ab_t = sched.alpha_bar_at(t);
  const double ab_prev = sched.alpha_bar_at(t - 1);
  const double inv_sqrt_alpha = 1.0 / std::sqrt(1.0 - beta);
  const double eps_coef = beta / std::sqrt(1.0 - ab_t);
  const double sigma =
      t == 1 ? 0.0 : std::sqrt(beta * (1.0 - ab_prev) / (1.0 - ab_t));

  LatentTensor out = x_t;
  for (std::size_t i = 0; i < out.data.size(); ++i)
    out.data[i] = inv_sqrt_alpha * (x_t.data[i] - eps_coef * eps_hat.data[i]);
  if (t > 1 && z != nullptr) {
    if (!z->same_shape(x_t))
      throw std::invalid_argument("ddpm_step: z shape mismatch");
    for (std::size_t i = 0; i < out.data.size(); ++i)
      out.data[i] += sigma * z->data[i];
  }
  return out;
}

LatentTensor sample(const DenoiseFn& denoise, const LatentShape& shape,
                    const NoiseSchedule& sched, std::uint64_t seed) {
  LatentTensor x(shape.tdim, shape.height, shape.width, shape.channels);
  {
    Rng rng = Rng::derive(seed, RngStream::kSampleInit);
    rng.fill_normal(x.data);
  }
  LatentTensor eps_hat(shape.tdim, shape.height, shape.width, shape.channels);
  LatentTensor z(shape.tdim, shape.height, shape.width, shape.channels);
  for (int t = sched.steps; t >= 1; --t) {
    denoise(x, t, eps_hat);
    if (t > 1) {
      Rng rng = Rng::derive(seed, RngStream::kSampleStep, t);
      rng.fill_normal(z.data);
      x = ddpm_step(x, eps_hat, t, sched, &z);
    } else {
      x = ddpm_step(x, eps_hat, t, sched, nullptr);
    }
  }
  return x;
}

}  // namespace maskvid::diffusion
