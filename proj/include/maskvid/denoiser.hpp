#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "maskvid/tensor.hpp"

// The parametric noise predictor: a small single-head attention + MLP stack
// over the token sequence [appearance][motion][noisy]. Mask features are
// channel-concatenated with the noisy latent per token; appearance/motion
// latents are sequence-concatenated; condition code and timestep embeddings
// are added to every token. Only the noisy-token positions are read out.
// LoRA adapters provide trainable low-rank deltas over a frozen base.
namespace maskvid::denoiser {

struct Matrix {
  int rows = 0, cols = 0;
  std::vector<double> a;

  Matrix() = default;
  Matrix(int r, int c) : rows(r), cols(c), a(static_cast<std::size_t>(r) * c, 0.0) {}

  double& at(int r, int c) { return a[static_cast<std::size_t>(r) * cols + c]; }
  double at(int r, int c) const { return a[static_cast<std::size_t>(r) * cols + c]; }
  double* row(int r) { return a.data() + static_cast<std::size_t>(r) * cols; }
  const double* row(int r) const {
    return a.data() + static_cast<std::size_t>(r) * cols;
  }
  std::size_t size() const { return a.size(); }
  void zero() { std::fill(a.begin(), a.end(), 0.0); }
  bool same_shape(const Matrix& o) const {
    return rows == o.rows && cols == o.cols;
  }
};

struct ArchConfig {
  int width = 64;
  int blocks = 2;
  int mlp_hidden = 128;
  int latent_channels = 24;
  int n_noisy = 0;  // noisy latent tokens per clip
  int n_app = 0;    // appearance condition tokens
  int n_mot = 0;    // motion condition tokens
  int timesteps = 200;
  int n_shape = 3, n_color = 6, n_bg = 4;
};

struct BlockParams {
  Matrix wq, wk, wv, wo;  // [w x w]
  Matrix w1;              // [hidden x w]
  Matrix w2;              // [w x hidden]
};

struct DenoiserParams {
  ArchConfig arch;
  Matrix in_proj;   // [w x 2C]; mask columns C..2C-1 zero at base init
  Matrix out_proj;  // [C x w]
  Matrix type_emb;  // [3 x w], rows: appearance, motion, noisy
  Matrix time_emb;  // [T x w]
  Matrix code_shape, code_color, code_bg;
  Matrix pos_noisy, pos_app, pos_mot;  // role-local positional tables
  std::vector<BlockParams> blocks;
};

inline constexpr int kTokenAppearance = 0;
inline constexpr int kTokenMotion = 1;
inline constexpr int kTokenNoisy = 2;

// Visits every tensor with a stable canonical name ("base.in_proj",
// "base.b0.wq", ...). Ordering is fixed; checkpoints and the optimizer
// depend on it.
template <typename F>
void for_each_tensor(DenoiserParams& p, F&& f) {
  f("base.in_proj", p.in_proj);
  f("base.out_proj", p.out_proj);
  f("base.type_emb", p.type_emb);
  f("base.time_emb", p.time_emb);
  f("base.code_shape", p.code_shape);
  f("base.code_color", p.code_color);
  f("base.code_bg", p.code_bg);
  f("base.pos_noisy", p.pos_noisy);
  f("base.pos_app", p.pos_app);
  f("base.pos_mot", p.pos_mot);
  for (std::size_t b = 0; b < p.blocks.size(); ++b) {
    const std::string pre = "base.b" + std::to_string(b) + ".";
    f(pre + "wq", p.blocks[b].wq);
    f(pre + "wk", p.blocks[b].wk);
    f(pre + "wv", p.blocks[b].wv);
    f(pre + "wo", p.blocks[b].wo);
    f(pre + "w1", p.blocks[b].w1);
    f(pre + "w2", p.blocks[b].w2);
  }
}

template <typename F>
void for_each_tensor(const DenoiserParams& p, F&& f) {
  for_each_tensor(const_cast<DenoiserParams&>(p),
                  [&](const std::string& n, Matrix& m) {
                    f(n, static_cast<const Matrix&>(m));
                  });
}

// The LoRA-adapted subset: all projections and block weights (embedding
// tables are lookups, not matrices, and stay frozen under fine-tuning).
template <typename F>
void for_each_adapted(DenoiserParams& p, F&& f) {
  f("base.in_proj", p.in_proj);
  f("base.out_proj", p.out_proj);
  for (std::size_t b = 0; b < p.blocks.size(); ++b) {
    const std::string pre = "base.b" + std::to_string(b) + ".";
    f(pre + "wq", p.blocks[b].wq);
    f(pre + "wk", p.blocks[b].wk);
    f(pre + "wv", p.blocks[b].wv);
    f(pre + "wo", p.blocks[b].wo);
    f(pre + "w1", p.blocks[b].w1);
    f(pre + "w2", p.blocks[b].w2);
  }
}

struct LoraPair {
  Matrix down;  // A: [rank x in]
  Matrix up;    // B: [out x rank], zero-initialized
};

struct LoraAdapter {
  int rank = 4;
  double scale = 1.0;
  // Keyed by the adapted tensor's canonical name; std::map iteration order
  // is the serialization order.
  std::map<std::string, LoraPair> pairs;
};

struct ConditionBundle {
  const MotionFeatures* mask_features = nullptr;  // nullptr = zeros
  const LatentTensor* appearance = nullptr;       // nullptr = no tokens
  const LatentTensor* motion = nullptr;           // nullptr = no tokens
  ConditionCode code;
  int t = 1;
};

// Per-block activations kept for the backward pass.
struct BlockCache {
  std::vector<double> q, k, v;  // [N x w]
  std::vector<double> p;        // [N x N] attention probabilities
  std::vector<double> attn;     // [N x w] P*V
  std::vector<double> h_mid;    // [N x w] after attention residual
  std::vector<double> u;        // [N x hidden] tanh activations
  std::vector<double> h_out;    // [N x w]
};

struct ForwardCache {
  int n_tokens = 0, n_app = 0, n_mot = 0;
  std::vector<double> x_in;  // [N x 2C]
  std::vector<double> h0;    // [N x w] block-0 input
  std::vector<BlockCache> blocks;
};

using GradMap = std::map<std::string, Matrix>;

// Deterministic init; mask-channel columns of in_proj are zero so a forward
// with and without mask features agrees at init.
DenoiserParams init_params(const ArchConfig& arch, std::uint64_t seed);

// A ~ N(0, 1/sqrt(in)), B = 0: the adapted model starts equal to the base.
LoraAdapter make_adapter(const DenoiserParams& params, int rank, double scale,
                         std::uint64_t seed);

LatentTensor forward(const LatentTensor& x_t, const ConditionBundle& conds,
                     const DenoiserParams& params,
                     const LoraAdapter* adapter = nullptr,
                     ForwardCache* cache = nullptr);

// Backpropagates d_eps_hat (gradient w.r.t. the output) through a cached
// forward. Accumulates into grads: base tensors when train_base, adapter
// tensors ("lora.<name>.a"/".b") when adapter is given.
void backward(const LatentTensor& x_t, const ConditionBundle& conds,
              const DenoiserParams& params, const LoraAdapter* adapter,
              const ForwardCache& cache, const LatentTensor& d_eps_hat,
              GradMap& grads, bool train_base);

// Gradients of the plain diffusion loss mse(eps, eps_hat) w.r.t. the
// trainable tensors (adapter when given and train_base=false, else base).
GradMap grad(const LatentTensor& x_t, const ConditionBundle& conds,
             const LatentTensor& eps, const DenoiserParams& params,
             const LoraAdapter* adapter, bool train_base,
             double* loss_out = nullptr);

// W <- W + scale * B * A for every adapted matrix.
DenoiserParams merge_lora(const DenoiserParams& params,
                          const LoraAdapter& adapter);

}  // namespace maskvid::denoiser
