#include "maskvid/synthkit.hpp"

#include <algorithm>
#include <cmath>
#include <queue>

#include "maskvid/kernels.hpp"
#include "maskvid/rng.hpp"

namespace maskvid::synthkit {

namespace {

constexpr double kPi = 3.141592653589793238462643;

// Saturated corners; every background channel stays in [0.12, 0.6], so the
// minimum palette-to-background L2 distance is ~0.69, far above tolerance.
const std::array<Rgb, kNumColors> kPalette = {{
    {1.0f, 0.0f, 0.0f},  // red
    {0.0f, 1.0f, 0.0f},  // green
    {0.0f, 0.0f, 1.0f},  // blue
    {1.0f, 1.0f, 0.0f},  // yellow
    {1.0f, 0.0f, 1.0f},  // magenta
    {0.0f, 1.0f, 1.0f},  // cyan
}};

struct Pattern {
  Rgb a, b;
  int period;
};

const Pattern kStripesH{{0.18f, 0.18f, 0.18f}, {0.50f, 0.50f, 0.50f}, 4};
const Pattern kStripesV{{0.20f, 0.20f, 0.35f}, {0.45f, 0.45f, 0.60f}, 4};
const Pattern kChecker{{0.20f, 0.30f, 0.20f}, {0.50f, 0.60f, 0.50f}, 8};
const Pattern kDiagonal{{0.50f, 0.38f, 0.28f}, {0.22f, 0.16f, 0.12f}, 6};

double sq(double v) { return v * v; }

double color_dist(float r, float g, float b, Rgb c) {
  return std::sqrt(sq(r - c.r) + sq(g - c.g) + sq(b - c.b));
}

bool inside_shape(ShapeKind kind, double size, double cx, double cy, double px,
                  double py) {
  switch (kind) {
    case ShapeKind::kCircle:
      return sq(px - cx) + sq(py - cy) <= sq(size);
    case ShapeKind::kSquare:
      return std::abs(px - cx) <= size && std::abs(py - cy) <= size;
    case ShapeKind::kTriangle: {
      // apex-up isoceles: vertices (cx, cy-size), (cx±size, cy+size)
      if (py < cy - size || py > cy + size) return false;
      const double half = (py - (cy - size)) / 2.0;  // width at this height
      return std::abs(px - cx) <= half;
    }
  }
  return false;
}

// Largest 4-connected component of a binary frame restricted to a region;
// deterministic scan order. Returns component mask and its pixel count.
long long largest_component(const std::vector<std::uint8_t>& bin, int height,
                            int width, const Box& region,
                            std::vector<std::uint8_t>& out) {
  out.assign(static_cast<std::size_t>(height) * width, 0);
  std::vector<int> label(static_cast<std::size_t>(height) * width, -1);
  long long best_count = 0;
  int best_label = -1;
  int next = 0;
  std::vector<std::size_t> stack;
  for (int y = region.y0; y < region.y1; ++y) {
    for (int x = region.x0; x < region.x1; ++x) {
      const std::size_t p = static_cast<std::size_t>(y) * width + x;
      if (!bin[p] || label[p] >= 0) continue;
      const int cur = next++;
      long long count = 0;
      stack.clear();
      stack.push_back(p);
      label[p] = cur;
      while (!stack.empty()) {
        const std::size_t q = stack.back();
        stack.pop_back();
        ++count;
        const int qy = static_cast<int>(q) / width;
        const int qx = static_cast<int>(q) % width;
        const int ny[4] = {qy - 1, qy + 1, qy, qy};
        const int nx[4] = {qx, qx, qx - 1, qx + 1};
        for (int k = 0; k < 4; ++k) {
          if (ny[k] < region.y0 || ny[k] >= region.y1 || nx[k] < region.x0 ||
              nx[k] >= region.x1)
            continue;
          const std::size_t r = static_cast<std::size_t>(ny[k]) * width + nx[k];
          if (bin[r] && label[r] < 0) {
            label[r] = cur;
            stack.push_back(r);
          }
        }
      }
      if (count > best_count) {
        best_count = count;
        best_label = cur;
      }
    }
  }
  if (best_label >= 0)
    for (std::size_t p = 0; p < label.size(); ++p)
      if (label[p] == best_label) out[p] = 1;
  return best_count;
}

// Threshold a frame region against a color, keep the largest component.
long long segment_color(const VideoTensor& video, int frame, Rgb color,
                        const Box& region, std::vector<std::uint8_t>& out) {
  const int h = video.height, w = video.width;
  std::vector<std::uint8_t> bin(static_cast<std::size_t>(h) * w, 0);
  for (int y = region.y0; y < region.y1; ++y)
    for (int x = region.x0; x < region.x1; ++x)
      bin[static_cast<std::size_t>(y) * w + x] =
          color_dist(video.at(frame, y, x, 0), video.at(frame, y, x, 1),
                     video.at(frame, y, x, 2), color) <= kColorTolerance;
  return largest_component(bin, h, w, region, out);
}

}  // namespace

const std::array<Rgb, kNumColors>& palette() { return kPalette; }

Rgb palette_color(int color_id) { return kPalette.at(color_id); }

Rgb background_pixel(int background_id, int y, int x, int dy, int dx) {
  switch (background_id) {
    case 0: {
      const int p = ((y + dy) % kStripesH.period + kStripesH.period) %
                    kStripesH.period;
      return p < kStripesH.period / 2 ? kStripesH.a : kStripesH.b;
    }
    case 1: {
      const int p = ((x + dx) % kStripesV.period + kStripesV.period) %
                    kStripesV.period;
      return p < kStripesV.period / 2 ? kStripesV.a : kStripesV.b;
    }
    case 2: {
      const int cell = kChecker.period / 2;
      const int py = (((y + dy) % kChecker.period) + kChecker.period) %
                     kChecker.period / cell;
      const int px = (((x + dx) % kChecker.period) + kChecker.period) %
                     kChecker.period / cell;
      return ((py + px) & 1) == 0 ? kChecker.a : kChecker.b;
    }
    case 3: {
      const int p = ((y + x + dy + dx) % kDiagonal.period + kDiagonal.period) %
                    kDiagonal.period;
      return p < kDiagonal.period / 2 ? kDiagonal.a : kDiagonal.b;
    }
    default:
      throw std::invalid_argument("background_id out of range");
  }
}

int background_period(int background_id) {
  switch (background_id) {
    case 0: return kStripesH.period;
    case 1: return kStripesV.period;
    case 2: return kChecker.period;
    case 3: return kDiagonal.period;
    default: throw std::invalid_argument("background_id out of range");
  }
}

void shape_center(const SceneSpec& spec, int t, double& cx, double& cy) {
  const Trajectory& tr = spec.trajectory;
  cx = tr.start_x + tr.vel_x * t;
  cy = tr.start_y + tr.vel_y * t;
  if (tr.sin_amp != 0.0)
    cy += tr.sin_amp * std::sin(2.0 * kPi * t / tr.sin_period + tr.sin_phase);
}

void validate_spec(const SceneSpec& spec) {
  if (spec.frames < 2) throw std::invalid_argument("SceneSpec: frames must be >= 2");
  if (spec.height < 4 || spec.width < 4)
    throw std::invalid_argument("SceneSpec: frame too small");
  if (spec.color_id < 0 || spec.color_id >= kNumColors)
    throw std::invalid_argument("SceneSpec: color_id out of range");
  if (spec.background_id < 0 || spec.background_id >= kNumBackgrounds)
    throw std::invalid_argument("SceneSpec: background_id out of range");
  if (spec.size <= 0.5) throw std::invalid_argument("SceneSpec: size too small");
  if (spec.trajectory.sin_amp != 0.0 && spec.trajectory.sin_period == 0.0)
    throw std::invalid_argument("SceneSpec: sinusoidal term needs a period");
  for (int t = 0; t < spec.frames; ++t) {
    double cx, cy;
    shape_center(spec, t, cx, cy);
    if (cx - spec.size < 0.0 || cx + spec.size > spec.width ||
        cy - spec.size < 0.0 || cy + spec.size > spec.height)
      throw std::invalid_argument(
          "SceneSpec: shape leaves the frame at frame " + std::to_string(t));
  }
}

Triplet gen_triplet(const SceneSpec& spec, std::uint64_t seed) {
  validate_spec(spec);
  int dy = 0, dx = 0;
  if (spec.jitter) {
    Rng rng = Rng::derive(seed, RngStream::kBackgroundJitter);
    const int period = background_period(spec.background_id);
    dy = rng.uniform_int(0, period - 1);
    dx = rng.uniform_int(0, period - 1);
  }

  Triplet out;
  out.video = VideoTensor(spec.frames, spec.height, spec.width);
  out.masks = MaskSequence(spec.frames, spec.height, spec.width);
  out.cond = {static_cast<int>(spec.shape), spec.color_id, spec.background_id};
  const Rgb fg = palette_color(spec.color_id);

  const bool par = kernels::parallel_enabled();
#pragma omp parallel for schedule(static) if (par)
  for (int t = 0; t < spec.frames; ++t) {
    double cx, cy;
    shape_center(spec, t, cx, cy);
    for (int y = 0; y < spec.height; ++y) {
      for (int x = 0; x < spec.width; ++x) {
        const bool in =
            inside_shape(spec.shape, spec.size, cx, cy, x + 0.5, y + 0.5);
        const Rgb c =
            in ? fg : background_pixel(spec.background_id, y, x, dy, dx);
        out.video.at(t, y, x, 0) = c.r;
        out.video.at(t, y, x, 1) = c.g;
        out.video.at(t, y, x, 2) = c.b;
        out.masks.at(t, y, x) = in ? 1 : 0;
      }
    }
  }
  return out;
}

Box Box::dilated(int margin, int height, int width) const {
  Box b;
  b.y0 = std::max(0, y0 - margin);
  b.x0 = std::max(0, x0 - margin);
  b.y1 = std::min(height, y1 + margin);
  b.x1 = std::min(width, x1 + margin);
  return b;
}

std::optional<Box> mask_bbox(const std::uint8_t* mask, int height, int width) {
  Box b{height, width, 0, 0};
  bool any = false;
  for (int y = 0; y < height; ++y)
    for (int x = 0; x < width; ++x)
      if (mask[static_cast<std::size_t>(y) * width + x]) {
        any = true;
        b.y0 = std::min(b.y0, y);
        b.x0 = std::min(b.x0, x);
        b.y1 = std::max(b.y1, y + 1);
        b.x1 = std::max(b.x1, x + 1);
      }
  if (!any) return std::nullopt;
  return b;
}

ExtractionResult extract_mask(const VideoTensor& video, int target_color_id) {
  const int h = video.height, w = video.width;
  const Rgb color = palette_color(target_color_id);
  ExtractionResult res;
  res.masks = MaskSequence(video.frames, h, w);

  const Box full{0, 0, h, w};
  std::vector<std::uint8_t> comp;
  long long count = segment_color(video, 0, color, full, comp);
  if (count == 0)
    throw ObjectNotFound("extract_mask: object not found on frame 0");
  std::copy(comp.begin(), comp.end(), res.masks.frame(0));
  Box box = *mask_bbox(comp.data(), h, w);
  long long prev_count = count;

  for (int t = 1; t < video.frames; ++t) {
    const Box search = box.dilated(kBoxDilation, h, w);
    count = segment_color(video, t, color, search, comp);
    std::copy(comp.begin(), comp.end(), res.masks.frame(t));
    if (count * 4 < prev_count) res.flagged_frames.push_back(t);
    if (count > 0) {
      box = *mask_bbox(comp.data(), h, w);
      prev_count = count;
    }
  }
  return res;
}

EditOutOfBounds::EditOutOfBounds(std::vector<int> f)
    : std::runtime_error([&f] {
        std::string msg = "edit_mask_affine: support leaves frame at frames";
        for (int i : f) msg += " " + std::to_string(i);
        return msg;
      }()),
      frames(std::move(f)) {}

MaskSequence edit_mask_affine(const MaskSequence& masks,
                              const std::vector<FrameTransform>& per_frame) {
  if (static_cast<int>(per_frame.size()) != masks.frames)
    throw std::invalid_argument("edit_mask_affine: need one transform per frame");
  const int h = masks.height, w = masks.width;
  const double cx = w / 2.0, cy = h / 2.0;

  std::vector<int> offenders;
  for (int t = 0; t < masks.frames; ++t) {
    const FrameTransform& tr = per_frame[t];
    if (tr.scale_x <= 0.0 || tr.scale_y <= 0.0)
      throw std::invalid_argument("edit_mask_affine: scale must be positive");
    bool bad = false;
    for (int y = 0; y < h && !bad; ++y)
      for (int x = 0; x < w; ++x) {
        if (!masks.at(t, y, x)) continue;
        const double fx = cx + (x + 0.5 - cx) * tr.scale_x + tr.translate_x;
        const double fy = cy + (y + 0.5 - cy) * tr.scale_y + tr.translate_y;
        if (fx < 0.0 || fx >= w || fy < 0.0 || fy >= h) {
          bad = true;
          break;
        }
      }
    if (bad) offenders.push_back(t);
  }
  if (!offenders.empty()) throw EditOutOfBounds(std::move(offenders));

  MaskSequence out(masks.frames, h, w);
  const bool par = kernels::parallel_enabled();
#pragma omp parallel for schedule(static) if (par)
  for (int t = 0; t < masks.frames; ++t) {
    const FrameTransform& tr = per_frame[t];
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        // inverse map, nearest neighbor
        const double sx = cx + (x + 0.5 - cx - tr.translate_x) / tr.scale_x;
        const double sy = cy + (y + 0.5 - cy - tr.translate_y) / tr.scale_y;
        const int ix = static_cast<int>(std::floor(sx));
        const int iy = static_cast<int>(std::floor(sy));
        if (ix >= 0 && ix < w && iy >= 0 && iy < h)
          out.at(t, y, x) = masks.at(t, iy, ix);
      }
  }
  return out;
}

MaskSequence combine_masks(const MaskSequence& a, const MaskSequence& b) {
  if (!a.same_shape(b))
    throw std::invalid_argument("combine_masks: dimension mismatch");
  MaskSequence out(a.frames, a.height, a.width);
  for (std::size_t i = 0; i < a.data.size(); ++i)
    out.data[i] = (a.data[i] | b.data[i]) ? 1 : 0;
  return out;
}

std::vector<std::uint8_t> threshold_color_component(const VideoTensor& video,
                                                    int frame, Rgb color,
                                                    const Box& region) {
  std::vector<std::uint8_t> out;
  segment_color(video, frame, color, region, out);
  return out;
}

int classify_shape(const std::uint8_t* mask, int height, int width) {
  auto box = mask_bbox(mask, height, width);
  if (!box) return -1;
  // Template match: rasterize each shape kind at the bounding box's center
  // with its size fitted from the observed area, pick the best IoU. Robust at
  // small sizes where fill ratios of rasterized disks and squares collide.
  long long area = 0;
  for (int y = box->y0; y < box->y1; ++y)
    for (int x = box->x0; x < box->x1; ++x)
      area += mask[static_cast<std::size_t>(y) * width + x];
  const double cx = (box->x0 + box->x1) / 2.0;
  const double cy = (box->y0 + box->y1) / 2.0;
  const Box window = box->dilated(2, height, width);
  int best = static_cast<int>(ShapeKind::kCircle);
  double best_iou = -1.0;
  for (int kind = 0; kind < kNumShapes; ++kind) {
    double size;
    switch (static_cast<ShapeKind>(kind)) {
      case ShapeKind::kCircle: size = std::sqrt(area / kPi); break;
      case ShapeKind::kSquare: size = std::sqrt(static_cast<double>(area)) / 2.0; break;
      default: size = std::sqrt(area / 2.0); break;
    }
    long long inter = 0, uni = 0;
    for (int y = window.y0; y < window.y1; ++y)
      for (int x = window.x0; x < window.x1; ++x) {
        const bool tpl = inside_shape(static_cast<ShapeKind>(kind), size, cx, cy,
                                      x + 0.5, y + 0.5);
        const bool got = mask[static_cast<std::size_t>(y) * width + x] != 0;
        inter += tpl && got;
        uni += tpl || got;
      }
    const double v = uni == 0 ? 0.0 : static_cast<double>(inter) / uni;
    if (v > best_iou) {
      best_iou = v;
      best = kind;
    }
  }
  return best;
}

PredictedCode classify_video(const VideoTensor& video) {
  const int h = video.height, w = video.width;
  const Box full{0, 0, h, w};
  PredictedCode out;

  // Color: pick the palette entry with the strongest median component area.
  long long best_score = -1;
  std::vector<std::uint8_t> best_mask;
  int best_frame = video.frames / 2;
  for (int c = 0; c < kNumColors; ++c) {
    std::vector<long long> areas(video.frames);
    for (int t = 0; t < video.frames; ++t) {
      std::vector<std::uint8_t> m;
      areas[t] = segment_color(video, t, kPalette[c], full, m);
    }
    std::vector<long long> sorted = areas;
    std::nth_element(sorted.begin(), sorted.begin() + video.frames / 2,
                     sorted.end());
    const long long score = sorted[video.frames / 2];
    if (score > best_score) {
      best_score = score;
      out.color = c;
    }
  }
  if (best_score <= 0) return out;  // nothing segmentable

  // Shape: majority vote of per-frame fill-ratio classification.
  std::array<int, kNumShapes> votes{};
  std::vector<std::uint8_t> mid_mask;
  for (int t = 0; t < video.frames; ++t) {
    std::vector<std::uint8_t> m;
    if (segment_color(video, t, kPalette[out.color], full, m) > 0) {
      const int s = classify_shape(m.data(), h, w);
      if (s >= 0) ++votes[s];
    }
    if (t == best_frame) mid_mask = m;
  }
  out.shape = static_cast<int>(
      std::max_element(votes.begin(), votes.end()) - votes.begin());

  // Background: best phase-matched pattern over non-object pixels of the
  // middle frame.
  Box obj_box{0, 0, 0, 0};
  if (!mid_mask.empty())
    if (auto b = mask_bbox(mid_mask.data(), h, w))
      obj_box = b->dilated(2, h, w);
  double best_err = 1e300;
  for (int bg = 0; bg < kNumBackgrounds; ++bg) {
    const int period = background_period(bg);
    for (int dy = 0; dy < period; ++dy)
      for (int dx = 0; dx < period; ++dx) {
        double err = 0.0;
        long long n = 0;
        for (int y = 0; y < h; ++y)
          for (int x = 0; x < w; ++x) {
            if (y >= obj_box.y0 && y < obj_box.y1 && x >= obj_box.x0 &&
                x < obj_box.x1)
              continue;
            const Rgb p = background_pixel(bg, y, x, dy, dx);
            err += std::abs(video.at(best_frame, y, x, 0) - p.r) +
                   std::abs(video.at(best_frame, y, x, 1) - p.g) +
                   std::abs(video.at(best_frame, y, x, 2) - p.b);
            ++n;
          }
        if (n > 0) err /= static_cast<double>(n);
        if (err < best_err) {
          best_err = err;
          out.background = bg;
        }
      }
  }
  return out;
}

}  // namespace maskvid::synthkit
