#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "maskvid/synthkit.hpp"
#include "maskvid/tensor.hpp"

// Mask mIoU metric S_m with a box-prompted color segmenter standing in for
// SAM2. On the synthetic palette the segmenter is near-exact, so the metric
// measures the generator rather than the segmenter.
namespace maskvid::maskeval {

struct EvalRecord {
  int video = 0;
  int frame = 0;
  double iou = 0.0;
};

struct MiouResult {
  double s_m = 0.0;
  std::vector<double> per_video;       // mean IoU per video
  std::vector<EvalRecord> records;     // one per (video, frame)
};

// |a n b| / |a u b|; 1.0 when both masks are empty (an absent object should
// not penalize).
double iou(const std::uint8_t* a, const std::uint8_t* b, std::size_t n);
double iou_frame(const MaskSequence& a, int fa, const MaskSequence& b, int fb);

// Surrogate for box-prompted segmentation: inside the ground-truth box
// dilated by 4 px, estimate the background from outside the box, threshold
// on color distance to the dominant foreground color, keep the largest
// connected component. Empty gt box is an error.
std::vector<std::uint8_t> segment_generated(const VideoTensor& video, int frame,
                                            const synthkit::Box& gt_box);

// S_m = mean IoU over all (video, frame) pairs; predicted masks come from
// segment_generated seeded with each gt frame's bounding box. Frames with an
// empty gt mask contribute IoU(empty, empty) = 1.
MiouResult mask_miou(std::span<const VideoTensor> videos,
                     std::span<const MaskSequence> gt);

}  // namespace maskvid::maskeval
