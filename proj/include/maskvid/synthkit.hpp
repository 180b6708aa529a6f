#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "maskvid/tensor.hpp"

// Synthetic moving-shape scenes: renderer, two-stage mask extractor,
// mask editing/combination, and the color-distance classifiers used by the
// evaluation probes. All operations are pure and deterministic.
namespace maskvid::synthkit {

enum class ShapeKind : int { kCircle = 0, kSquare = 1, kTriangle = 2 };

inline constexpr int kNumShapes = 3;
inline constexpr int kNumColors = 6;
inline constexpr int kNumBackgrounds = 4;

// RGB L2 threshold for the color segmenter and the box dilation margin.
inline constexpr double kColorTolerance = 0.15;
inline constexpr int kBoxDilation = 4;

struct Rgb {
  float r, g, b;
};

const std::array<Rgb, kNumColors>& palette();
Rgb palette_color(int color_id);

// Procedural background pixel value; (dy, dx) is the jitter phase offset.
Rgb background_pixel(int background_id, int y, int x, int dy, int dx);
// Spatial period of a background pattern (phase offsets live in [0, period)).
int background_period(int background_id);

struct Trajectory {
  double start_x = 0.0, start_y = 0.0;  // shape center at frame 0, pixels
  double vel_x = 0.0, vel_y = 0.0;      // pixels per frame
  double sin_amp = 0.0;                 // optional sinusoidal vertical term
  double sin_period = 16.0;             // frames per cycle
  double sin_phase = 0.0;               // radians
};

struct SceneSpec {
  ShapeKind shape = ShapeKind::kCircle;
  int color_id = 0;
  int background_id = 0;
  Trajectory trajectory;
  double size = 4.0;  // radius / half-extent, pixels
  int frames = 16;
  int height = 32;
  int width = 48;
  bool jitter = false;  // stochastic background phase, off by default
};

// Shape center at frame t.
void shape_center(const SceneSpec& spec, int t, double& cx, double& cy);

// Throws std::invalid_argument with a diagnostic if the spec violates its
// invariants (shape leaving the frame, frames < 2, bad indices).
void validate_spec(const SceneSpec& spec);

// Deterministic render of <video, code, mask>; mask and pixels derive from
// the same geometry test. Seeds only the background jitter phase.
Triplet gen_triplet(const SceneSpec& spec, std::uint64_t seed);

struct Box {
  int y0 = 0, x0 = 0, y1 = 0, x1 = 0;  // half-open [y0,y1) x [x0,x1)
  bool empty() const { return y1 <= y0 || x1 <= x0; }
  Box dilated(int margin, int height, int width) const;
};

std::optional<Box> mask_bbox(const std::uint8_t* mask, int height, int width);

struct ObjectNotFound : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ExtractionResult {
  MaskSequence masks;
  // Frames where the tracked object was lost or collapsed (popcount fell
  // below a quarter of the previous frame's), e.g. it left the search box.
  std::vector<int> flagged_frames;
};

// Two-stage extraction: frame-0 color threshold + largest connected
// component, then per-frame propagation inside the previous box dilated by
// kBoxDilation. Throws ObjectNotFound if frame 0 has no matching pixel.
ExtractionResult extract_mask(const VideoTensor& video, int target_color_id);

struct FrameTransform {
  double scale_x = 1.0, scale_y = 1.0;
  double translate_x = 0.0, translate_y = 0.0;
};

struct EditOutOfBounds : std::runtime_error {
  std::vector<int> frames;
  explicit EditOutOfBounds(std::vector<int> f);
};

// Nearest-neighbor resampling of each frame under its transform (scale about
// the frame center, then translate). Throws EditOutOfBounds listing frames
// whose support would leave the frame.
MaskSequence edit_mask_affine(const MaskSequence& masks,
                              const std::vector<FrameTransform>& per_frame);

// Elementwise union; dims must match.
MaskSequence combine_masks(const MaskSequence& a, const MaskSequence& b);

// --- classifiers (evaluation probes) ---

struct PredictedCode {
  int shape = -1;
  int color = -1;
  int background = -1;
};

// Largest connected component of pixels within tolerance of a palette color.
std::vector<std::uint8_t> threshold_color_component(const VideoTensor& video,
                                                    int frame, Rgb color,
                                                    const Box& region);

// Classify a generated video's shape / color / background with no ground
// truth. Searches all palette colors, takes the strongest object, classifies
// shape by fill ratio and background by best-phase pattern match.
PredictedCode classify_video(const VideoTensor& video);

// Fill-ratio shape classifier on a single mask frame; returns -1 if empty.
int classify_shape(const std::uint8_t* mask, int height, int width);

}  // namespace maskvid::synthkit
