#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "maskvid/denoiser.hpp"
#include "maskvid/maskeval.hpp"
#include "maskvid/tensor.hpp"
#include "maskvid/trainer.hpp"

// Bit-exact little-endian file formats: dataset container (MVTR), named
// tensor checkpoints (MVCK), mask (MVMK) and raw video (MVVD) containers,
// the metrics report, and the animated GIF export. All writes are atomic
// (temp file + rename).
namespace maskvid::io {

struct FileError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// --- dataset (magic MVTR) ---
void save_dataset(const std::string& path, const std::vector<Triplet>& triplets);
std::vector<Triplet> load_dataset(const std::string& path);

// --- checkpoint (magic MVCK): named f64 tensor table ---
struct TensorBlob {
  std::vector<std::uint32_t> dims;
  std::vector<double> data;
};

using Checkpoint = std::map<std::string, TensorBlob>;

void save_checkpoint(const std::string& path, const Checkpoint& ck);
Checkpoint load_checkpoint(const std::string& path);

// Packs model state into the named-tensor table. Adapter and optimizer are
// optional; step counter and config hash ride along as meta tensors.
Checkpoint checkpoint_from_state(const denoiser::DenoiserParams& params,
                                 const denoiser::LoraAdapter* adapter,
                                 const trainer::OptState* opt, long long step,
                                 std::uint64_t config_hash);

struct LoadedState {
  denoiser::DenoiserParams params;
  std::optional<denoiser::LoraAdapter> adapter;
  trainer::OptState opt;
  long long step = 0;
  std::uint64_t config_hash = 0;
};

// Rebuilds state for the given architecture; dims are verified against it.
LoadedState state_from_checkpoint(const Checkpoint& ck,
                                  const denoiser::ArchConfig& arch,
                                  int lora_rank, double lora_scale);

// --- mask container (magic MVMK) ---
void save_mask(const std::string& path, const MaskSequence& masks,
               std::uint64_t config_hash);
MaskSequence load_mask(const std::string& path);

// --- raw video container (magic MVVD) ---
void save_video(const std::string& path, const VideoTensor& video,
                std::uint64_t config_hash);
VideoTensor load_video(const std::string& path);

// --- metrics report ---
// Header line, then one "video<TAB>frame<TAB>iou" line per record, footer
// "S_m=<value>" with 6 decimals.
std::string format_miou_report(const maskeval::MiouResult& result,
                               std::uint64_t config_hash);
void save_text(const std::string& path, const std::string& text);
std::string load_text(const std::string& path);

// Re-aggregates the body lines of a report; used to cross-check the footer.
double reaggregate_report(const std::string& report_text);

// --- animated GIF export (256-color cube, LZW) ---
void write_gif(const std::string& path, const VideoTensor& video, int scale,
               int delay_cs = 12);

}  // namespace maskvid::io
