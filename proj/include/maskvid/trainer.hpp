#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "maskvid/denoiser.hpp"
#include "maskvid/diffusion.hpp"
#include "maskvid/sampling.hpp"
#include "maskvid/tensor.hpp"

// LoRA fine-tuning with the combined loss L = L_d + alpha * L_c: the
// diffusion loss adapts the new conditions while the consistency term
// distills the frozen teacher's predictions on the same noisy input (mask
// features zeroed, no appearance/motion tokens for the teacher). Also owns
// Adam, batch assembly and the text-alignment probe.
namespace maskvid::trainer {

// Full-scale reference settings, kept for documentation; the desk-scale
// defaults below are what actually runs here.
inline constexpr int kReferenceSteps = 10000;
inline constexpr int kReferenceBatchSize = 64;

struct TrainConfig {
  int steps = 2000;
  int batch_size = 8;
  double learning_rate = 2e-4;
  double alpha = 1.0;  // consistency weight
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::uint64_t seed = 0;
  int checkpoint_interval = 500;
  // Fraction of fine-tune samples trained as (second clip + appearance and
  // motion conditions from the first clip). Requires 2-clip triplets.
  double long_cond_fraction = 0.0;
  int clip_frames = 16;
  int motion_window = 16;  // t2
  int downsample_factor = 2;

  void validate() const {
    if (steps < 0) throw std::invalid_argument("steps must be >= 0");
    if (batch_size < 1) throw std::invalid_argument("batch_size must be >= 1");
    if (!(learning_rate > 0.0)) throw std::invalid_argument("learning_rate must be > 0");
    if (alpha < 0.0) throw std::invalid_argument("alpha must be >= 0");
    if (long_cond_fraction < 0.0 || long_cond_fraction > 1.0)
      throw std::invalid_argument("long_cond_fraction must be in [0,1]");
    if (motion_window > clip_frames)
      throw std::invalid_argument("motion_window must be <= clip_frames");
  }
};

struct OptState {
  long long step = 0;  // completed optimizer steps
  std::map<std::string, denoiser::Matrix> m, v;
};

struct LossReport {
  double l_d = 0.0;
  double l_c = 0.0;
  double l = 0.0;
};

struct TrainDiverged : std::runtime_error {
  long long step;
  int sample;
  TrainDiverged(long long s, int i)
      : std::runtime_error("non-finite loss at step " + std::to_string(s) +
                           ", sample " + std::to_string(i)),
        step(s), sample(i) {}
};

// One precomputed training sample: target-clip latent, mask features, and
// optional long-video conditions.
struct TrainSample {
  LatentTensor x0;
  MotionFeatures mask_feat;
  bool has_mask = false;
  LatentTensor appearance;
  LatentTensor motion;
  bool has_long = false;
  ConditionCode code;
  int triplet_index = 0;
};

// Standard bias-corrected Adam on one tensor.
void adam_update(denoiser::Matrix& theta, const denoiser::Matrix& grad,
                 denoiser::Matrix& m, denoiser::Matrix& v, long long step,
                 const TrainConfig& cfg);

// Deterministic batch assembly from 1- or 2-clip triplets.
std::vector<TrainSample> build_batch(const std::vector<Triplet>& dataset,
                                     const TrainConfig& cfg,
                                     const sampling::ClipGeometry& geom,
                                     long long step, bool with_mask);

// One fine-tune step: draws (t, eps) per sample, runs student (with
// conditions) and teacher (without), applies Adam to the adapter only.
LossReport train_step(const denoiser::DenoiserParams& base,
                      denoiser::LoraAdapter& adapter,
                      const std::vector<TrainSample>& batch,
                      const TrainConfig& cfg,
                      const diffusion::NoiseSchedule& sched, OptState& opt);

// One base-pretraining step: all base tensors trainable, no mask features,
// no teacher (L_c reported as 0).
LossReport pretrain_step(denoiser::DenoiserParams& params,
                         const std::vector<TrainSample>& batch,
                         const TrainConfig& cfg,
                         const diffusion::NoiseSchedule& sched, OptState& opt);

struct FieldAccuracy {
  double shape = 0.0;
  double color = 0.0;
  double background = 0.0;
  double mean() const { return (shape + color + background) / 3.0; }
};

// Generates one clip per probe code with no mask condition and classifies
// the result with the color-distance classifier.
FieldAccuracy evaluate_text_alignment(const denoiser::DenoiserParams& params,
                                      const denoiser::LoraAdapter* adapter,
                                      const std::vector<ConditionCode>& probes,
                                      const diffusion::NoiseSchedule& sched,
                                      const sampling::ClipGeometry& geom,
                                      std::uint64_t seed);

}  // namespace maskvid::trainer
