#include "maskvid/trainer.hpp"

#include <cmath>

#include "maskvid/codec.hpp"
#include "maskvid/rng.hpp"
#include "maskvid/synthkit.hpp"

namespace maskvid::trainer {

namespace {

using denoiser::ConditionBundle;
using denoiser::DenoiserParams;
using denoiser::ForwardCache;
using denoiser::GradMap;
using denoiser::LoraAdapter;
using denoiser::Matrix;

// Replicates a single frame pt times so the codec can patchify it.
VideoTensor replicate_frame(const VideoTensor& video, int frame, int copies) {
  VideoTensor out(copies, video.height, video.width);
  for (int t = 0; t < copies; ++t)
    for (int y = 0; y < video.height; ++y)
      for (int x = 0; x < video.width; ++x)
        for (int c = 0; c < 3; ++c)
          out.at(t, y, x, c) = video.at(frame, y, x, c);
  return out;
}

VideoTensor slice_frames(const VideoTensor& video, int start, int count) {
  VideoTensor out(count, video.height, video.width);
  std::copy(video.data.begin() +
                static_cast<std::size_t>(start) * video.height * video.width * 3,
            video.data.begin() + static_cast<std::size_t>(start + count) *
                                     video.height * video.width * 3,
            out.data.begin());
  return out;
}

MaskSequence slice_masks(const MaskSequence& masks, int start, int count) {
  MaskSequence out(count, masks.height, masks.width);
  std::copy(masks.data.begin() +
                static_cast<std::size_t>(start) * masks.frame_size(),
            masks.data.begin() +
                static_cast<std::size_t>(start + count) * masks.frame_size(),
            out.data.begin());
  return out;
}

ConditionBundle sample_conditions(const TrainSample& s, int t) {
  ConditionBundle conds;
  conds.mask_features = s.has_mask ? &s.mask_feat : nullptr;
  conds.appearance = s.has_long ? &s.appearance : nullptr;
  conds.motion = s.has_long ? &s.motion : nullptr;
  conds.code = s.code;
  conds.t = t;
  return conds;
}

}  // namespace

void adam_update(Matrix& theta, const Matrix& grad, Matrix& m, Matrix& v,
                 long long step, const TrainConfig& cfg) {
  if (!theta.same_shape(grad))
    throw std::invalid_argument("adam_update: grad shape mismatch");
  if (m.rows == 0) m = Matrix(theta.rows, theta.cols);
  if (v.rows == 0) v = Matrix(theta.rows, theta.cols);
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(step));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(step));
  for (std::size_t i = 0; i < theta.a.size(); ++i) {
    const double g = grad.a[i];
    m.a[i] = cfg.beta1 * m.a[i] + (1.0 - cfg.beta1) * g;
    v.a[i] = cfg.beta2 * v.a[i] + (1.0 - cfg.beta2) * g * g;
    const double mhat = m.a[i] / bc1;
    const double vhat = v.a[i] / bc2;
    theta.a[i] -= cfg.learning_rate * mhat / (std::sqrt(vhat) + cfg.eps);
  }
}

std::vector<TrainSample> build_batch(const std::vector<Triplet>& dataset,
                                     const TrainConfig& cfg,
                                     const sampling::ClipGeometry& geom,
                                     long long step, bool with_mask) {
  if (dataset.empty()) throw std::invalid_argument("build_batch: empty dataset");
  const int cf = cfg.clip_frames;
  std::vector<TrainSample> batch;
  batch.reserve(cfg.batch_size);
  for (int i = 0; i < cfg.batch_size; ++i) {
    Rng rng = Rng::derive(cfg.seed, RngStream::kBatchPick,
                          static_cast<std::uint64_t>(step),
                          static_cast<std::uint64_t>(i));
    const int idx = rng.uniform_int(0, static_cast<int>(dataset.size()) - 1);
    const Triplet& tr = dataset[idx];
    if (tr.video.frames < cf)
      throw std::invalid_argument("build_batch: triplet shorter than a clip");
    const bool want_long = rng.uniform() < cfg.long_cond_fraction;
    const bool can_long = tr.video.frames >= 2 * cf;

    TrainSample s;
    s.triplet_index = idx;
    s.code = tr.cond;
    if (want_long && can_long) {
      const VideoTensor target = slice_frames(tr.video, cf, cf);
      s.x0 = codec::encode(target, geom.patch);
      if (with_mask) {
        s.mask_feat = codec::encode_mask(slice_masks(tr.masks, cf, cf), geom.patch);
        s.has_mask = true;
      }
      const VideoTensor prev = slice_frames(tr.video, 0, cf);
      s.appearance = codec::encode(
          replicate_frame(prev, cf - 1, geom.patch.pt), geom.patch);
      s.motion = codec::encode(
          codec::downsample(slice_frames(prev, cf - cfg.motion_window,
                                         cfg.motion_window),
                            cfg.downsample_factor),
          geom.patch);
      s.has_long = true;
    } else {
      const VideoTensor target = slice_frames(tr.video, 0, cf);
      s.x0 = codec::encode(target, geom.patch);
      if (with_mask) {
        s.mask_feat = codec::encode_mask(slice_masks(tr.masks, 0, cf), geom.patch);
        s.has_mask = true;
      }
    }
    batch.push_back(std::move(s));
  }
  return batch;
}

LossReport train_step(const DenoiserParams& base, LoraAdapter& adapter,
                      const std::vector<TrainSample>& batch,
                      const TrainConfig& cfg,
                      const diffusion::NoiseSchedule& sched, OptState& opt) {
  cfg.validate();
  const long long step = opt.step;
  GradMap grads;
  double sum_ld = 0.0, sum_lc = 0.0;
  LatentTensor eps, x_t, d;

  for (int i = 0; i < static_cast<int>(batch.size()); ++i) {
    const TrainSample& s = batch[i];
    const int t = Rng::derive(cfg.seed, RngStream::kTimestep,
                              static_cast<std::uint64_t>(step),
                              static_cast<std::uint64_t>(i))
                      .uniform_int(1, sched.steps);
    eps = LatentTensor(s.x0.tdim, s.x0.height, s.x0.width, s.x0.channels);
    Rng::derive(cfg.seed, RngStream::kTrainNoise,
                static_cast<std::uint64_t>(step), static_cast<std::uint64_t>(i))
        .fill_normal(eps.data);
    x_t = diffusion::q_sample(s.x0, t, eps, sched);

    ConditionBundle conds_s = sample_conditions(s, t);
    ForwardCache cache;
    const LatentTensor eps_s = denoiser::forward(x_t, conds_s, base, &adapter, &cache);

    ConditionBundle conds_t;  // teacher: zero mask, no extra tokens
    conds_t.code = s.code;
    conds_t.t = t;
    const LatentTensor eps_t = denoiser::forward(x_t, conds_t, base, nullptr);

    const double l_d = diffusion::diffusion_loss(eps, eps_s);
    const double l_c = diffusion::diffusion_loss(eps_s, eps_t);
    if (!std::isfinite(l_d) || !std::isfinite(l_c)) throw TrainDiverged(step, i);
    sum_ld += l_d;
    sum_lc += l_c;

    // dL/d eps_s for L = mean_b [ L_d,b + alpha L_c,b ]
    d = LatentTensor(eps_s.tdim, eps_s.height, eps_s.width, eps_s.channels);
    const double scale =
        2.0 / (static_cast<double>(eps_s.data.size()) * batch.size());
    for (std::size_t j = 0; j < d.data.size(); ++j)
      d.data[j] = scale * ((eps_s.data[j] - eps.data[j]) +
                           cfg.alpha * (eps_s.data[j] - eps_t.data[j]));
    denoiser::backward(x_t, conds_s, base, &adapter, cache, d, grads, false);
  }

  ++opt.step;
  for (auto& [name, pair] : adapter.pairs) {
    const std::string ga = "lora." + name.substr(5) + ".a";
    const std::string gb = "lora." + name.substr(5) + ".b";
    if (auto it = grads.find(ga); it != grads.end())
      adam_update(pair.down, it->second, opt.m[ga], opt.v[ga], opt.step, cfg);
    if (auto it = grads.find(gb); it != grads.end())
      adam_update(pair.up, it->second, opt.m[gb], opt.v[gb], opt.step, cfg);
  }

  LossReport rep;
  rep.l_d = sum_ld / batch.size();
  rep.l_c = sum_lc / batch.size();
  rep.l = rep.l_d + cfg.alpha * rep.l_c;
  return rep;
}

LossReport pretrain_step(DenoiserParams& params,
                         const std::vector<TrainSample>& batch,
                         const TrainConfig& cfg,
                         const diffusion::NoiseSchedule& sched, OptState& opt) {
  cfg.validate();
  const long long step = opt.step;
  GradMap grads;
  double sum_ld = 0.0;
  LatentTensor eps, x_t, d;

  for (int i = 0; i < static_cast<int>(batch.size()); ++i) {
    const TrainSample& s = batch[i];
    const int t = Rng::derive(cfg.seed, RngStream::kTimestep,
                              static_cast<std::uint64_t>(step),
                              static_cast<std::uint64_t>(i))
                      .uniform_int(1, sched.steps);
    eps = LatentTensor(s.x0.tdim, s.x0.height, s.x0.width, s.x0.channels);
    Rng::derive(cfg.seed, RngStream::kTrainNoise,
                static_cast<std::uint64_t>(step), static_cast<std::uint64_t>(i))
        .fill_normal(eps.data);
    x_t = diffusion::q_sample(s.x0, t, eps, sched);

    ConditionBundle conds = sample_conditions(s, t);
    conds.mask_features = nullptr;  // pretraining never sees masks
    ForwardCache cache;
    const LatentTensor eps_hat = denoiser::forward(x_t, conds, params, nullptr, &cache);

    const double l_d = diffusion::diffusion_loss(eps, eps_hat);
    if (!std::isfinite(l_d)) throw TrainDiverged(step, i);
    sum_ld += l_d;

    d = LatentTensor(eps_hat.tdim, eps_hat.height, eps_hat.width, eps_hat.channels);
    const double scale =
        2.0 / (static_cast<double>(eps_hat.data.size()) * batch.size());
    for (std::size_t j = 0; j < d.data.size(); ++j)
      d.data[j] = scale * (eps_hat.data[j] - eps.data[j]);
    denoiser::backward(x_t, conds, params, nullptr, cache, d, grads, true);
  }

  ++opt.step;
  denoiser::for_each_tensor(params, [&](const std::string& name, Matrix& m) {
    if (auto it = grads.find(name); it != grads.end())
      adam_update(m, it->second, opt.m[name], opt.v[name], opt.step, cfg);
  });

  LossReport rep;
  rep.l_d = sum_ld / batch.size();
  rep.l_c = 0.0;
  rep.l = rep.l_d;
  return rep;
}

FieldAccuracy evaluate_text_alignment(const DenoiserParams& params,
                                      const LoraAdapter* adapter,
                                      const std::vector<ConditionCode>& probes,
                                      const diffusion::NoiseSchedule& sched,
                                      const sampling::ClipGeometry& geom,
                                      std::uint64_t seed) {
  if (probes.empty()) throw std::invalid_argument("evaluate_text_alignment: no probes");
  const DenoiserParams merged =
      adapter != nullptr ? denoiser::merge_lora(params, *adapter) : params;
  FieldAccuracy acc;
  for (std::size_t i = 0; i < probes.size(); ++i) {
    ConditionBundle conds;
    conds.code = probes[i];
    const VideoTensor video = sampling::generate_clip(
        merged, conds, sched, geom,
        mix_seed(seed, static_cast<std::uint64_t>(RngStream::kProbe), i));
    const synthkit::PredictedCode pred = synthkit::classify_video(video);
    acc.shape += pred.shape == probes[i].shape;
    acc.color += pred.color == probes[i].color;
    acc.background += pred.background == probes[i].background;
  }
  acc.shape /= static_cast<double>(probes.size());
  acc.color /= static_cast<double>(probes.size());
  acc.background /= static_cast<double>(probes.size());
  return acc;
}

}  // namespace maskvid::trainer
