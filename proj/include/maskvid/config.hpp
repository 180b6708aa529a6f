#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "maskvid/codec.hpp"
#include "maskvid/denoiser.hpp"
#include "maskvid/sampling.hpp"
#include "maskvid/trainer.hpp"

// Flat key=value configuration covering every tunable default. Unknown keys
// are rejected; the effective config (all keys, canonical form) is hashable
// and echoed for provenance.
namespace maskvid::config {

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

enum class TrainMode { kPretrain, kFinetune };
enum class HoldoutMode { kNone, kExclude, kOnly };

struct RunConfig {
  // dataset geometry
  int frames = 16;  // frames per stored triplet (2 clips for long training)
  int height = 32;
  int width = 48;
  // clip geometry
  int clip_frames = 16;
  int motion_window = 16;
  // codec
  int patch_t = 2, patch_h = 2, patch_w = 2;
  int downsample_factor = 2;
  // schedule
  int sched_steps = 200;
  double beta_min = 1e-4;
  double beta_max = 0.05;
  // model
  int model_width = 64;
  int model_blocks = 2;
  int mlp_hidden = 128;
  int lora_rank = 4;
  double lora_scale = 1.0;
  // training
  TrainMode mode = TrainMode::kFinetune;
  int steps = 2000;
  int batch_size = 8;
  double learning_rate = 2e-4;
  double alpha = 1.0;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  std::uint64_t seed = 0;
  int checkpoint_interval = 500;
  double long_cond_fraction = 0.0;
  // data generation
  int n_samples = 512;
  bool jitter = false;
  HoldoutMode holdout_mode = HoldoutMode::kNone;
  std::vector<std::pair<int, int>> holdout_pairs;  // (shape, color)
  double size_min = 2.5, size_max = 4.5;
  double speed_max = 0.8;  // pixels/frame per axis
  // long generation
  int clips = 3;
  int cond_shape = 0, cond_color = 0, cond_background = 0;
  int gif_scale = 6;

  sampling::ClipGeometry clip_geometry() const;
  trainer::TrainConfig train_config() const;
  denoiser::ArchConfig arch_config() const;
};

// Parses "key=value" lines ('#' comments, blank lines allowed). Unknown keys
// or malformed values throw ConfigError.
RunConfig parse_config_text(const std::string& text);
RunConfig load_config_file(const std::string& path);
void apply_override(RunConfig& cfg, const std::string& key,
                    const std::string& value);

// Full validation of ranges and divisibility; throws ConfigError.
void validate(const RunConfig& cfg);

// Canonical form: every key, sorted, "key=value\n".
std::string canonical_text(const RunConfig& cfg);

// FNV-1a 64 over the canonical text.
std::uint64_t config_hash(const RunConfig& cfg);

std::string hash_hex(std::uint64_t hash);

}  // namespace maskvid::config
