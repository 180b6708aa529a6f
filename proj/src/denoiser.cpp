#include "maskvid/denoiser.hpp"

#include <cmath>
#include <cstring>
#include <stdexcept>

#include "maskvid/kernels.hpp"
#include "maskvid/rng.hpp"

namespace maskvid::denoiser {

namespace {

using kernels::matmul_nn;
using kernels::matmul_nt;
using kernels::matmul_tn;

// y[N x out] (+)= x[N x in] * W^T, with the optional low-rank delta
// s * (x A^T) B^T. W stored [out x in], A [r x in], B [out x r].
void project(std::vector<double>& y, const std::vector<double>& x,
             const Matrix& w, const LoraPair* lp, double scale, int n,
             bool accumulate) {
  matmul_nt(y.data(), x.data(), w.a.data(), n, w.cols, w.rows, accumulate);
  if (lp != nullptr && lp->down.rows > 0) {
    const int r = lp->down.rows;
    std::vector<double> tmp(static_cast<std::size_t>(n) * r);
    matmul_nt(tmp.data(), x.data(), lp->down.a.data(), n, lp->down.cols, r);
    for (double& v : tmp) v *= scale;
    matmul_nt(y.data(), tmp.data(), lp->up.a.data(), n, r, lp->up.rows, true);
  }
}

// Backward of project: dX += dY * W_eff and dW_eff = dY^T X routed either to
// the base gradient or to the adapter pair.
void project_backward(const std::vector<double>& d_y,
                      const std::vector<double>& x, const Matrix& w,
                      const std::string& name, const LoraPair* lp,
                      double scale, int n, GradMap& grads, bool train_base,
                      std::vector<double>* d_x) {
  if (d_x != nullptr) {
    matmul_nn(d_x->data(), d_y.data(), w.a.data(), n, w.rows, w.cols, true);
    if (lp != nullptr && lp->down.rows > 0) {
      const int r = lp->down.rows;
      std::vector<double> tmp(static_cast<std::size_t>(n) * r);
      matmul_nn(tmp.data(), d_y.data(), lp->up.a.data(), n, lp->up.rows, r);
      for (double& v : tmp) v *= scale;
      matmul_nn(d_x->data(), tmp.data(), lp->down.a.data(), n, r, lp->down.cols,
                true);
    }
  }
  if (train_base) {
    Matrix& g = grads[name];
    if (g.rows == 0) g = Matrix(w.rows, w.cols);
    matmul_tn(g.a.data(), d_y.data(), x.data(), w.rows, n, w.cols, true);
  } else if (lp != nullptr) {
    Matrix dw(w.rows, w.cols);
    matmul_tn(dw.a.data(), d_y.data(), x.data(), w.rows, n, w.cols, false);
    Matrix& ga = grads["lora." + name.substr(5) + ".a"];
    Matrix& gb = grads["lora." + name.substr(5) + ".b"];
    if (ga.rows == 0) ga = Matrix(lp->down.rows, lp->down.cols);
    if (gb.rows == 0) gb = Matrix(lp->up.rows, lp->up.cols);
    for (double& v : dw.a) v *= scale;
    // dB = s * dW * A^T, dA = s * B^T * dW
    matmul_nt(gb.a.data(), dw.a.data(), lp->down.a.data(), w.rows, w.cols,
              lp->down.rows, true);
    matmul_tn(ga.a.data(), lp->up.a.data(), dw.a.data(), lp->down.rows, w.rows,
              w.cols, true);
  }
}

const LoraPair* find_pair(const LoraAdapter* adapter, const std::string& name) {
  if (adapter == nullptr) return nullptr;
  auto it = adapter->pairs.find(name);
  return it == adapter->pairs.end() ? nullptr : &it->second;
}

struct TokenLayout {
  int n_app = 0, n_mot = 0, n_noisy = 0;
  int total() const { return n_app + n_mot + n_noisy; }
  int role(int row) const {
    if (row < n_app) return kTokenAppearance;
    if (row < n_app + n_mot) return kTokenMotion;
    return kTokenNoisy;
  }
  int local(int row) const {
    if (row < n_app) return row;
    if (row < n_app + n_mot) return row - n_app;
    return row - n_app - n_mot;
  }
};

TokenLayout make_layout(const ArchConfig& arch, const ConditionBundle& conds) {
  TokenLayout lay;
  lay.n_noisy = arch.n_noisy;
  lay.n_app = conds.appearance != nullptr ? arch.n_app : 0;
  lay.n_mot = conds.motion != nullptr ? arch.n_mot : 0;
  return lay;
}

void validate_inputs(const LatentTensor& x_t, const ConditionBundle& conds,
                     const ArchConfig& arch) {
  if (x_t.channels != arch.latent_channels)
    throw std::invalid_argument("forward: latent channel count mismatch");
  if (x_t.tokens() != arch.n_noisy)
    throw std::invalid_argument("forward: noisy token count mismatch");
  if (conds.mask_features != nullptr && !conds.mask_features->same_shape(x_t))
    throw std::invalid_argument("forward: mask feature shape mismatch");
  if (conds.appearance != nullptr &&
      (conds.appearance->tokens() != arch.n_app ||
       conds.appearance->channels != arch.latent_channels))
    throw std::invalid_argument("forward: appearance token shape mismatch");
  if (conds.motion != nullptr &&
      (conds.motion->tokens() != arch.n_mot ||
       conds.motion->channels != arch.latent_channels))
    throw std::invalid_argument("forward: motion token shape mismatch");
  if (conds.t < 1 || conds.t > arch.timesteps)
    throw std::invalid_argument("forward: timestep out of range");
  if (conds.code.shape < 0 || conds.code.shape >= arch.n_shape ||
      conds.code.color < 0 || conds.code.color >= arch.n_color ||
      conds.code.background < 0 || conds.code.background >= arch.n_bg)
    throw std::invalid_argument("forward: unknown condition code index");
}

void add_embeddings(std::vector<double>& h, const TokenLayout& lay,
                    const DenoiserParams& p, const ConditionBundle& conds) {
  const int w = p.arch.width;
  const int n = lay.total();
  const double* te = p.time_emb.row(conds.t - 1);
  const double* cs = p.code_shape.row(conds.code.shape);
  const double* cc = p.code_color.row(conds.code.color);
  const double* cb = p.code_bg.row(conds.code.background);
  const bool par = kernels::parallel_enabled();
#pragma omp parallel for schedule(static) if (par)
  for (int i = 0; i < n; ++i) {
    const int role = lay.role(i);
    const double* ty = p.type_emb.row(role);
    const double* pos = role == kTokenAppearance ? p.pos_app.row(lay.local(i))
                        : role == kTokenMotion  ? p.pos_mot.row(lay.local(i))
                                                : p.pos_noisy.row(lay.local(i));
    double* hr = h.data() + static_cast<std::size_t>(i) * w;
    for (int j = 0; j < w; ++j) hr[j] += ty[j] + te[j] + cs[j] + cc[j] + cb[j] + pos[j];
  }
}

void tanh_map(const std::vector<double>& z, std::vector<double>& u) {
  const long long n = static_cast<long long>(z.size());
  const bool par = kernels::parallel_enabled();
#pragma omp parallel for schedule(static) if (par)
  for (long long i = 0; i < n; ++i) u[i] = std::tanh(z[i]);
}

}  // namespace

DenoiserParams init_params(const ArchConfig& arch, std::uint64_t seed) {
  if (arch.width < 1 || arch.blocks < 1 || arch.mlp_hidden < 1 ||
      arch.latent_channels < 1 || arch.n_noisy < 1 || arch.timesteps < 1)
    throw std::invalid_argument("init_params: invalid architecture dims");
  DenoiserParams p;
  p.arch = arch;
  const int w = arch.width, c = arch.latent_channels;
  p.in_proj = Matrix(w, 2 * c);
  p.out_proj = Matrix(c, w);
  p.type_emb = Matrix(3, w);
  p.time_emb = Matrix(arch.timesteps, w);
  p.code_shape = Matrix(arch.n_shape, w);
  p.code_color = Matrix(arch.n_color, w);
  p.code_bg = Matrix(arch.n_bg, w);
  p.pos_noisy = Matrix(arch.n_noisy, w);
  p.pos_app = Matrix(std::max(arch.n_app, 1), w);
  p.pos_mot = Matrix(std::max(arch.n_mot, 1), w);
  p.blocks.resize(arch.blocks);
  for (auto& b : p.blocks) {
    b.wq = b.wk = b.wv = b.wo = Matrix(w, w);
    b.w1 = Matrix(arch.mlp_hidden, w);
    b.w2 = Matrix(w, arch.mlp_hidden);
  }

  Rng rng = Rng::derive(seed, RngStream::kParamInit);
  for_each_tensor(p, [&](const std::string& name, Matrix& m) {
    double sigma;
    if (name == "base.type_emb" || name.rfind("base.pos_", 0) == 0)
      sigma = 0.5;
    else if (name.rfind("base.time_emb", 0) == 0 ||
             name.rfind("base.code_", 0) == 0)
      sigma = 0.25;
    else
      sigma = 1.0 / std::sqrt(static_cast<double>(m.cols));
    for (double& v : m.a) v = sigma * rng.normal();
  });

  // Mask-channel columns start at zero: at init the model cannot see the
  // mask, which makes the fine-tune teacher equality exact.
  for (int r = 0; r < w; ++r)
    for (int col = c; col < 2 * c; ++col) p.in_proj.at(r, col) = 0.0;
  return p;
}

LoraAdapter make_adapter(const DenoiserParams& params, int rank, double scale,
                         std::uint64_t seed) {
  if (rank < 1) throw std::invalid_argument("make_adapter: rank must be >= 1");
  LoraAdapter ad;
  ad.rank = rank;
  ad.scale = scale;
  Rng rng = Rng::derive(seed, RngStream::kAdapterInit);
  for_each_adapted(const_cast<DenoiserParams&>(params),
                   [&](const std::string& name, Matrix& m) {
                     LoraPair pair;
                     pair.down = Matrix(rank, m.cols);
                     pair.up = Matrix(m.rows, rank);
                     const double sigma = 1.0 / std::sqrt(m.cols);
                     for (double& v : pair.down.a) v = sigma * rng.normal();
                     ad.pairs.emplace(name, std::move(pair));
                   });
  return ad;
}

LatentTensor forward(const LatentTensor& x_t, const ConditionBundle& conds,
                     const DenoiserParams& params, const LoraAdapter* adapter,
                     ForwardCache* cache) {
  const ArchConfig& arch = params.arch;
  validate_inputs(x_t, conds, arch);
  const TokenLayout lay = make_layout(arch, conds);
  const int n = lay.total();
  const int w = arch.width, c = arch.latent_channels, hid = arch.mlp_hidden;
  const double scale = adapter != nullptr ? adapter->scale : 0.0;

  // Token contents: [content channels | mask channels].
  std::vector<double> x_in(static_cast<std::size_t>(n) * 2 * c, 0.0);
  for (int i = 0; i < lay.n_app; ++i)
    std::memcpy(&x_in[static_cast<std::size_t>(i) * 2 * c],
                &conds.appearance->data[static_cast<std::size_t>(i) * c],
                sizeof(double) * c);
  for (int i = 0; i < lay.n_mot; ++i)
    std::memcpy(&x_in[static_cast<std::size_t>(lay.n_app + i) * 2 * c],
                &conds.motion->data[static_cast<std::size_t>(i) * c],
                sizeof(double) * c);
  for (int i = 0; i < lay.n_noisy; ++i) {
    double* row = &x_in[static_cast<std::size_t>(lay.n_app + lay.n_mot + i) * 2 * c];
    std::memcpy(row, &x_t.data[static_cast<std::size_t>(i) * c], sizeof(double) * c);
    if (conds.mask_features != nullptr)
      std::memcpy(row + c, &conds.mask_features->data[static_cast<std::size_t>(i) * c],
                  sizeof(double) * c);
  }

  std::vector<double> h(static_cast<std::size_t>(n) * w);
  project(h, x_in, params.in_proj, find_pair(adapter, "base.in_proj"), scale, n,
          false);
  add_embeddings(h, lay, params, conds);

  if (cache != nullptr) {
    cache->n_tokens = n;
    cache->n_app = lay.n_app;
    cache->n_mot = lay.n_mot;
    cache->x_in = x_in;
    cache->h0 = h;
    cache->blocks.assign(arch.blocks, BlockCache{});
  }

  const double inv_sqrt_w = 1.0 / std::sqrt(static_cast<double>(w));
  std::vector<double> q, k, v, p, attn, z1, u, proj;
  for (int bi = 0; bi < arch.blocks; ++bi) {
    const BlockParams& blk = params.blocks[bi];
    const std::string pre = "base.b" + std::to_string(bi) + ".";
    q.assign(static_cast<std::size_t>(n) * w, 0.0);
    k.assign(static_cast<std::size_t>(n) * w, 0.0);
    v.assign(static_cast<std::size_t>(n) * w, 0.0);
    project(q, h, blk.wq, find_pair(adapter, pre + "wq"), scale, n, false);
    project(k, h, blk.wk, find_pair(adapter, pre + "wk"), scale, n, false);
    project(v, h, blk.wv, find_pair(adapter, pre + "wv"), scale, n, false);

    p.assign(static_cast<std::size_t>(n) * n, 0.0);
    matmul_nt(p.data(), q.data(), k.data(), n, w, n, false);
    for (double& s : p) s *= inv_sqrt_w;
    kernels::softmax_rows(p.data(), n, n);

    attn.assign(static_cast<std::size_t>(n) * w, 0.0);
    matmul_nn(attn.data(), p.data(), v.data(), n, n, w, false);

    proj.assign(static_cast<std::size_t>(n) * w, 0.0);
    project(proj, attn, blk.wo, find_pair(adapter, pre + "wo"), scale, n, false);
    for (std::size_t i = 0; i < h.size(); ++i) h[i] += proj[i];

    if (cache != nullptr) {
      BlockCache& bc = cache->blocks[bi];
      bc.q = q;
      bc.k = k;
      bc.v = v;
      bc.p = p;
      bc.attn = attn;
      bc.h_mid = h;
    }

    z1.assign(static_cast<std::size_t>(n) * hid, 0.0);
    project(z1, h, blk.w1, find_pair(adapter, pre + "w1"), scale, n, false);
    u.resize(z1.size());
    tanh_map(z1, u);
    proj.assign(static_cast<std::size_t>(n) * w, 0.0);
    project(proj, u, blk.w2, find_pair(adapter, pre + "w2"), scale, n, false);
    for (std::size_t i = 0; i < h.size(); ++i) h[i] += proj[i];

    if (cache != nullptr) {
      BlockCache& bc = cache->blocks[bi];
      bc.u = u;
      bc.h_out = h;
    }
  }

  // Read out only the noisy-token positions.
  const int noisy_off = lay.n_app + lay.n_mot;
  std::vector<double> h_noisy(
      h.begin() + static_cast<std::size_t>(noisy_off) * w, h.end());
  std::vector<double> out(static_cast<std::size_t>(lay.n_noisy) * c, 0.0);
  project(out, h_noisy, params.out_proj, find_pair(adapter, "base.out_proj"),
          scale, lay.n_noisy, false);

  LatentTensor eps_hat(x_t.tdim, x_t.height, x_t.width, x_t.channels);
  eps_hat.data = std::move(out);
  return eps_hat;
}

void backward(const LatentTensor& x_t, const ConditionBundle& conds,
              const DenoiserParams& params, const LoraAdapter* adapter,
              const ForwardCache& cache, const LatentTensor& d_eps_hat,
              GradMap& grads, bool train_base) {
  const ArchConfig& arch = params.arch;
  const TokenLayout lay = make_layout(arch, conds);
  const int n = lay.total();
  if (n != cache.n_tokens)
    throw std::invalid_argument("backward: cache does not match conditions");
  const int w = arch.width, hid = arch.mlp_hidden;
  const int noisy_off = lay.n_app + lay.n_mot;
  const double scale = adapter != nullptr ? adapter->scale : 0.0;
  const double inv_sqrt_w = 1.0 / std::sqrt(static_cast<double>(w));
  const bool par = kernels::parallel_enabled();

  auto ensure = [&grads](const std::string& name, int rows, int cols) -> Matrix& {
    Matrix& g = grads[name];
    if (g.rows == 0) g = Matrix(rows, cols);
    return g;
  };

  // Output projection (noisy rows only).
  std::vector<double> h_noisy(
      cache.blocks.back().h_out.begin() + static_cast<std::size_t>(noisy_off) * w,
      cache.blocks.back().h_out.end());
  std::vector<double> d_h(static_cast<std::size_t>(n) * w, 0.0);
  {
    std::vector<double> d_h_noisy(static_cast<std::size_t>(lay.n_noisy) * w, 0.0);
    project_backward(d_eps_hat.data, h_noisy, params.out_proj, "base.out_proj",
                     find_pair(adapter, "base.out_proj"), scale, lay.n_noisy,
                     grads, train_base, &d_h_noisy);
    std::copy(d_h_noisy.begin(), d_h_noisy.end(),
              d_h.begin() + static_cast<std::size_t>(noisy_off) * w);
  }

  std::vector<double> d_tmp, d_u, d_z1, d_attn, d_p, d_q, d_k, d_v;
  for (int bi = arch.blocks - 1; bi >= 0; --bi) {
    const BlockParams& blk = params.blocks[bi];
    const BlockCache& bc = cache.blocks[bi];
    const std::string pre = "base.b" + std::to_string(bi) + ".";
    const std::vector<double>& h_in =
        bi == 0 ? cache.h0 : cache.blocks[bi - 1].h_out;

    // MLP residual: h_out = h_mid + tanh(h_mid W1^T) W2^T
    d_u.assign(static_cast<std::size_t>(n) * hid, 0.0);
    project_backward(d_h, bc.u, blk.w2, pre + "w2",
                     find_pair(adapter, pre + "w2"), scale, n, grads,
                     train_base, &d_u);
    d_z1.resize(d_u.size());
    {
      const long long sz = static_cast<long long>(d_u.size());
#pragma omp parallel for schedule(static) if (par)
      for (long long i = 0; i < sz; ++i)
        d_z1[i] = d_u[i] * (1.0 - bc.u[i] * bc.u[i]);
    }
    project_backward(d_z1, bc.h_mid, blk.w1, pre + "w1",
                     find_pair(adapter, pre + "w1"), scale, n, grads,
                     train_base, &d_h);

    // Attention residual: h_mid = h_in + (P V) Wo^T
    d_attn.assign(static_cast<std::size_t>(n) * w, 0.0);
    project_backward(d_h, bc.attn, blk.wo, pre + "wo",
                     find_pair(adapter, pre + "wo"), scale, n, grads,
                     train_base, &d_attn);

    d_p.assign(static_cast<std::size_t>(n) * n, 0.0);
    matmul_nt(d_p.data(), d_attn.data(), bc.v.data(), n, w, n, false);
    d_v.assign(static_cast<std::size_t>(n) * w, 0.0);
    matmul_tn(d_v.data(), bc.p.data(), d_attn.data(), n, n, w, false);

    // softmax backward, then fold in the 1/sqrt(w) score scale
#pragma omp parallel for schedule(static) if (par)
    for (int i = 0; i < n; ++i) {
      const double* prow = bc.p.data() + static_cast<std::size_t>(i) * n;
      double* dprow = d_p.data() + static_cast<std::size_t>(i) * n;
      double dot = 0.0;
      for (int j = 0; j < n; ++j) dot += prow[j] * dprow[j];
      for (int j = 0; j < n; ++j)
        dprow[j] = prow[j] * (dprow[j] - dot) * inv_sqrt_w;
    }

    d_q.assign(static_cast<std::size_t>(n) * w, 0.0);
    matmul_nn(d_q.data(), d_p.data(), bc.k.data(), n, n, w, false);
    d_k.assign(static_cast<std::size_t>(n) * w, 0.0);
    matmul_tn(d_k.data(), d_p.data(), bc.q.data(), n, n, w, false);

    project_backward(d_q, h_in, blk.wq, pre + "wq",
                     find_pair(adapter, pre + "wq"), scale, n, grads,
                     train_base, &d_h);
    project_backward(d_k, h_in, blk.wk, pre + "wk",
                     find_pair(adapter, pre + "wk"), scale, n, grads,
                     train_base, &d_h);
    project_backward(d_v, h_in, blk.wv, pre + "wv",
                     find_pair(adapter, pre + "wv"), scale, n, grads,
                     train_base, &d_h);
  }

  // Embedding gradients (base training only; adapters never touch tables).
  if (train_base) {
    Matrix& g_type = ensure("base.type_emb", 3, w);
    Matrix& g_time = ensure("base.time_emb", arch.timesteps, w);
    Matrix& g_cs = ensure("base.code_shape", arch.n_shape, w);
    Matrix& g_cc = ensure("base.code_color", arch.n_color, w);
    Matrix& g_cb = ensure("base.code_bg", arch.n_bg, w);
    Matrix& g_pn = ensure("base.pos_noisy", params.pos_noisy.rows, w);
    Matrix& g_pa = ensure("base.pos_app", params.pos_app.rows, w);
    Matrix& g_pm = ensure("base.pos_mot", params.pos_mot.rows, w);
    for (int i = 0; i < n; ++i) {
      const double* dr = d_h.data() + static_cast<std::size_t>(i) * w;
      const int role = lay.role(i);
      double* rows[6] = {
          g_type.row(role), g_time.row(conds.t - 1), g_cs.row(conds.code.shape),
          g_cc.row(conds.code.color), g_cb.row(conds.code.background),
          role == kTokenAppearance ? g_pa.row(lay.local(i))
          : role == kTokenMotion   ? g_pm.row(lay.local(i))
                                   : g_pn.row(lay.local(i))};
      for (double* target : rows)
        for (int j = 0; j < w; ++j) target[j] += dr[j];
    }
  }

  project_backward(d_h, cache.x_in, params.in_proj, "base.in_proj",
                   find_pair(adapter, "base.in_proj"), scale, n, grads,
                   train_base, nullptr);
  (void)x_t;
}

GradMap grad(const LatentTensor& x_t, const ConditionBundle& conds,
             const LatentTensor& eps, const DenoiserParams& params,
             const LoraAdapter* adapter, bool train_base, double* loss_out) {
  ForwardCache cache;
  LatentTensor eps_hat = forward(x_t, conds, params, adapter, &cache);
  if (!eps_hat.same_shape(eps))
    throw std::invalid_argument("grad: eps shape mismatch");
  LatentTensor d(eps_hat.tdim, eps_hat.height, eps_hat.width, eps_hat.channels);
  const double inv = 2.0 / static_cast<double>(eps_hat.data.size());
  double loss = 0.0;
  for (std::size_t i = 0; i < d.data.size(); ++i) {
    const double diff = eps_hat.data[i] - eps.data[i];
    d.data[i] = inv * diff;
    loss += diff * diff;
  }
  if (loss_out != nullptr)
    *loss_out = loss / static_cast<double>(eps_hat.data.size());
  GradMap grads;
  backward(x_t, conds, params, adapter, cache, d, grads, train_base);
  return grads;
}

DenoiserParams merge_lora(const DenoiserParams& params,
                          const LoraAdapter& adapter) {
  DenoiserParams merged = params;
  for_each_adapted(merged, [&](const std::string& name, Matrix& m) {
    auto it = adapter.pairs.find(name);
    if (it == adapter.pairs.end()) return;
    const LoraPair& lp = it->second;
    if (lp.down.cols != m.cols || lp.up.rows != m.rows ||
        lp.down.rows != lp.up.cols)
      throw std::invalid_argument("merge_lora: rank/dim mismatch on " + name);
    Matrix delta(m.rows, m.cols);
    matmul_nn(delta.a.data(), lp.up.a.data(), lp.down.a.data(), m.rows,
              lp.up.cols, m.cols, false);
    for (std::size_t i = 0; i < m.a.size(); ++i)
      m.a[i] += adapter.scale * delta.a[i];
  });
  return merged;
}

}  // namespace maskvid::denoiser
