#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "maskvid/config.hpp"
#include "maskvid/maskeval.hpp"
#include "maskvid/tensor.hpp"
#include "maskvid/trainer.hpp"

// End-to-end plumbing shared by the CLI and the acceptance suite: seeded
// dataset generation, the training loop with logging/checkpointing/resume,
// and conditioned generation + mIoU evaluation over triplet sets.
namespace maskvid::pipeline {

// Deterministic scene sampler honoring the config's holdout mode, size and
// speed ranges; index selects the sample.
synthkit::SceneSpec sample_scene_spec(const config::RunConfig& cfg, int index);

std::vector<Triplet> generate_dataset(const config::RunConfig& cfg);

using StepCallback =
    std::function<void(long long step, const trainer::LossReport&)>;

struct TrainRunResult {
  denoiser::DenoiserParams params;
  std::optional<denoiser::LoraAdapter> adapter;
  trainer::OptState opt;
  std::string log;  // one "step\tL_d\tL_c\tL" line per step
};

// Runs cfg.steps optimizer steps (pretrain or finetune per cfg.mode).
// init_checkpoint seeds the base weights for fine-tuning; resume_checkpoint
// continues an interrupted run (config hash must match). When out_checkpoint
// is non-empty, the state is saved there every checkpoint_interval steps and
// at the end, with the metrics log at out_checkpoint + ".log".
TrainRunResult run_training(const config::RunConfig& cfg,
                            const std::vector<Triplet>& dataset,
                            const std::string& out_checkpoint,
                            const std::string& init_checkpoint = "",
                            const std::string& resume_checkpoint = "",
                            const StepCallback& callback = nullptr);

// One clip per triplet, conditioned on the triplet's first-clip mask and
// code (appearance/motion tokens absent). Adapter must be merged already.
std::vector<VideoTensor> generate_conditioned(
    const denoiser::DenoiserParams& merged_params,
    const std::vector<Triplet>& triplets, const config::RunConfig& cfg,
    std::uint64_t seed);

// generate_conditioned + mask_miou against the triplets' own masks.
maskeval::MiouResult evaluate_mask_alignment(
    const denoiser::DenoiserParams& params,
    const denoiser::LoraAdapter* adapter,
    const std::vector<Triplet>& triplets, const config::RunConfig& cfg,
    std::uint64_t seed);

// Probe codes for the text-alignment evaluation: the held-out (shape, color)
// pairs crossed with every background; falls back to a fixed spread when the
// config has no holdout pairs.
std::vector<ConditionCode> probe_codes(const config::RunConfig& cfg);

}  // namespace maskvid::pipeline
