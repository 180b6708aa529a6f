#include <doctest.h>

#include <Eigen/Dense>
#include <Eigen/SVD>
#include <cmath>
#include <map>
#include <stdexcept>

#include "maskvid/denoiser.hpp"
#include "maskvid/rng.hpp"

using namespace maskvid;
using denoiser::ArchConfig;
using denoiser::ConditionBundle;
using denoiser::DenoiserParams;
using denoiser::LoraAdapter;
using denoiser::Matrix;

namespace {

ArchConfig tiny_arch() {
  ArchConfig a;
  a.width = 16;
  a.blocks = 2;
  a.mlp_hidden = 32;
  a.latent_channels = 24;
  a.n_noisy = 32;  // latent (2,4,4,24) from a 4x8x8 clip, patch (2,2,2)
  a.n_app = 16;
  a.n_mot = 4;
  a.timesteps = 8;
  return a;
}

LatentTensor random_latent(int t, int h, int w, int c, std::uint64_t seed) {
  LatentTensor x(t, h, w, c);
  Rng rng(seed);
  rng.fill_normal(x.data);
  return x;
}

struct TestInputs {
  LatentTensor x_t, eps, mask_feat, app, mot;
  ConditionBundle conds;

  TestInputs()
      : x_t(random_latent(2, 4, 4, 24, 100)),
        eps(random_latent(2, 4, 4, 24, 101)),
        mask_feat(random_latent(2, 4, 4, 24, 102)),
        app(random_latent(1, 4, 4, 24, 103)),
        mot(random_latent(1, 2, 2, 24, 104)) {
    conds.mask_features = &mask_feat;
    conds.appearance = &app;
    conds.motion = &mot;
    conds.code = {1, 3, 2};
    conds.t = 5;
  }
};

std::map<std::string, Matrix*> tensor_pointers(DenoiserParams& p) {
  std::map<std::string, Matrix*> out;
  denoiser::for_each_tensor(p, [&](const std::string& n, Matrix& m) { out[n] = &m; });
  return out;
}

double loss_of(const LatentTensor& x_t, const ConditionBundle& conds,
               const LatentTensor& eps, const DenoiserParams& params,
               const LoraAdapter* adapter) {
  const LatentTensor eps_hat = denoiser::forward(x_t, conds, params, adapter);
  double s = 0.0;
  for (std::size_t i = 0; i < eps.data.size(); ++i) {
    const double d = eps_hat.data[i] - eps.data[i];
    s += d * d;
  }
  return s / static_cast<double>(eps.data.size());
}

}  // namespace

TEST_CASE("init is deterministic and mask columns start at zero") {
  const ArchConfig arch = tiny_arch();
  DenoiserParams a = denoiser::init_params(arch, 42);
  DenoiserParams b = denoiser::init_params(arch, 42);
  DenoiserParams c = denoiser::init_params(arch, 43);
  auto pb = tensor_pointers(b);
  auto pc = tensor_pointers(c);
  bool all_equal = true, any_diff_seed = false;
  denoiser::for_each_tensor(a, [&](const std::string& name, Matrix& m) {
    if (m.a != pb.at(name)->a) all_equal = false;
    if (m.a != pc.at(name)->a) any_diff_seed = true;
  });
  CHECK(all_equal);
  CHECK(any_diff_seed);
  for (int r = 0; r < arch.width; ++r)
    for (int col = arch.latent_channels; col < 2 * arch.latent_channels; ++col)
      CHECK(a.in_proj.at(r, col) == 0.0);
  CHECK_THROWS_AS(denoiser::init_params(ArchConfig{}, 0), std::invalid_argument);
}

TEST_CASE("at init, mask features cannot influence the output") {
  const TestInputs in;
  const DenoiserParams params = denoiser::init_params(tiny_arch(), 7);
  ConditionBundle with_mask = in.conds;
  ConditionBundle without_mask = in.conds;
  without_mask.mask_features = nullptr;
  const LatentTensor a = denoiser::forward(in.x_t, with_mask, params);
  const LatentTensor b = denoiser::forward(in.x_t, without_mask, params);
  CHECK(a.data == b.data);
}

TEST_CASE("zero-initialized adapter never changes any output (bit-exact)") {
  const TestInputs in;
  const DenoiserParams params = denoiser::init_params(tiny_arch(), 8);
  const LoraAdapter adapter = denoiser::make_adapter(params, 2, 1.0, 9);
  const LatentTensor base = denoiser::forward(in.x_t, in.conds, params);
  const LatentTensor adapted = denoiser::forward(in.x_t, in.conds, params, &adapter);
  CHECK(base.data == adapted.data);
}

TEST_CASE("output keeps the latent shape however many condition tokens exist") {
  const TestInputs in;
  const DenoiserParams params = denoiser::init_params(tiny_arch(), 10);
  for (int variant = 0; variant < 4; ++variant) {
    ConditionBundle conds = in.conds;
    if (!(variant & 1)) conds.appearance = nullptr;
    if (!(variant & 2)) conds.motion = nullptr;
    const LatentTensor out = denoiser::forward(in.x_t, conds, params);
    CHECK(out.same_shape(in.x_t));
  }
}

TEST_CASE("forward validates code indices and shapes") {
  const TestInputs in;
  const DenoiserParams params = denoiser::init_params(tiny_arch(), 11);
  ConditionBundle bad = in.conds;
  bad.code.color = 99;
  CHECK_THROWS_AS(denoiser::forward(in.x_t, bad, params), std::invalid_argument);
  bad = in.conds;
  bad.t = 9;
  CHECK_THROWS_AS(denoiser::forward(in.x_t, bad, params), std::invalid_argument);
  const LatentTensor wrong = random_latent(2, 4, 4, 23, 1);
  CHECK_THROWS_AS(denoiser::forward(wrong, in.conds, params), std::invalid_argument);
}

TEST_CASE("merge_lora: identity at B=0 and dual-path equality") {
  const TestInputs in;
  DenoiserParams params = denoiser::init_params(tiny_arch(), 12);
  LoraAdapter adapter = denoiser::make_adapter(params, 2, 0.5, 13);

  SUBCASE("B = 0 merge is the identity") {
    DenoiserParams merged = denoiser::merge_lora(params, adapter);
    auto pp = tensor_pointers(params);
    bool equal = true;
    denoiser::for_each_tensor(merged, [&](const std::string& name, Matrix& m) {
      if (m.a != pp.at(name)->a) equal = false;
    });
    CHECK(equal);
  }

  SUBCASE("random adapter: merged forward equals runtime-adapter forward") {
    Rng rng(14);
    for (auto& [name, pair] : adapter.pairs)
      for (double& v : pair.up.a) v = 0.2 * rng.normal();
    const DenoiserParams merged = denoiser::merge_lora(params, adapter);
    const LatentTensor a = denoiser::forward(in.x_t, in.conds, params, &adapter);
    const LatentTensor b = denoiser::forward(in.x_t, in.conds, merged);
    double max_diff = 0.0;
    for (std::size_t i = 0; i < a.data.size(); ++i)
      max_diff = std::max(max_diff, std::abs(a.data[i] - b.data[i]));
    CHECK(max_diff <= 1e-10);
  }
}

TEST_CASE("full-rank adapter represents an arbitrary delta via its SVD factors") {
  DenoiserParams params = denoiser::init_params(tiny_arch(), 15);
  // target: out_proj [C x w]; full rank r = min(C, w) = 16
  const int out_dim = params.out_proj.rows, in_dim = params.out_proj.cols;
  const int rank = std::min(out_dim, in_dim);
  Matrix delta(out_dim, in_dim);
  Rng rng(16);
  for (double& v : delta.a) v = 0.1 * rng.normal();

  Eigen::MatrixXd d(out_dim, in_dim);
  for (int r = 0; r < out_dim; ++r)
    for (int c = 0; c < in_dim; ++c) d(r, c) = delta.at(r, c);
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(d, Eigen::ComputeThinU | Eigen::ComputeThinV);

  LoraAdapter adapter = denoiser::make_adapter(params, rank, 1.0, 17);
  for (auto& [name, pair] : adapter.pairs) {
    pair.down.zero();
    pair.up.zero();
  }
  denoiser::LoraPair& pair = adapter.pairs.at("base.out_proj");
  for (int r = 0; r < out_dim; ++r)
    for (int k = 0; k < rank; ++k)
      pair.up.at(r, k) = svd.matrixU()(r, k) * svd.singularValues()(k);
  for (int k = 0; k < rank; ++k)
    for (int c = 0; c < in_dim; ++c) pair.down.at(k, c) = svd.matrixV()(c, k);

  const DenoiserParams merged = denoiser::merge_lora(params, adapter);
  for (int r = 0; r < out_dim; ++r)
    for (int c = 0; c < in_dim; ++c)
      CHECK(merged.out_proj.at(r, c) ==
            doctest::Approx(params.out_proj.at(r, c) + delta.at(r, c)).epsilon(1e-9));
}

TEST_CASE("frozen base: adapter-mode gradients touch only adapter tensors") {
  const TestInputs in;
  const DenoiserParams params = denoiser::init_params(tiny_arch(), 18);
  const LoraAdapter adapter = denoiser::make_adapter(params, 2, 1.0, 19);
  const denoiser::GradMap grads =
      denoiser::grad(in.x_t, in.conds, in.eps, params, &adapter, false);
  CHECK(!grads.empty());
  for (const auto& [name, g] : grads) CHECK(name.rfind("lora.", 0) == 0);
}

TEST_CASE("descent along the adapter gradient reduces the loss") {
  const TestInputs in;
  const DenoiserParams params = denoiser::init_params(tiny_arch(), 20);
  LoraAdapter adapter = denoiser::make_adapter(params, 2, 1.0, 21);
  double loss0 = 0.0;
  denoiser::GradMap grads =
      denoiser::grad(in.x_t, in.conds, in.eps, params, &adapter, false, &loss0);
  const double eta = 1e-3;
  for (auto& [name, pair] : adapter.pairs) {
    const std::string key = "lora." + name.substr(5);
    if (auto it = grads.find(key + ".a"); it != grads.end())
      for (std::size_t i = 0; i < pair.down.a.size(); ++i)
        pair.down.a[i] -= eta * it->second.a[i];
    if (auto it = grads.find(key + ".b"); it != grads.end())
      for (std::size_t i = 0; i < pair.up.a.size(); ++i)
        pair.up.a[i] -= eta * it->second.a[i];
  }
  const double loss1 = loss_of(in.x_t, in.conds, in.eps, params, &adapter);
  CHECK(loss1 < loss0);
}

TEST_CASE("analytic gradients match central finite differences") {
  const TestInputs in;
  DenoiserParams params = denoiser::init_params(tiny_arch(), 22);
  LoraAdapter adapter = denoiser::make_adapter(params, 2, 1.0, 23);
  // make the adapter path active so B gradients are nontrivial
  Rng brng(24);
  for (auto& [name, pair] : adapter.pairs)
    for (double& v : pair.up.a) v = 0.05 * brng.normal();

  const double h = 1e-5;
  Rng coord_rng(25);

  SUBCASE("base tensors (pretraining path)") {
    const denoiser::GradMap grads =
        denoiser::grad(in.x_t, in.conds, in.eps, params, nullptr, true);
    auto ptrs = tensor_pointers(params);
    for (auto& [name, g] : grads) {
      Matrix* theta = ptrs.at(name);
      for (int probe = 0; probe < 6; ++probe) {
        const std::size_t i =
            static_cast<std::size_t>(coord_rng.uniform() * theta->a.size());
        const double saved = theta->a[i];
        theta->a[i] = saved + h;
        const double lp = loss_of(in.x_t, in.conds, in.eps, params, nullptr);
        theta->a[i] = saved - h;
        const double lm = loss_of(in.x_t, in.conds, in.eps, params, nullptr);
        theta->a[i] = saved;
        const double fd = (lp - lm) / (2.0 * h);
        const double analytic = g.a[i];
        const double rel =
            std::abs(analytic - fd) / std::max(1.0, std::abs(analytic));
        CAPTURE(name);
        CAPTURE(i);
        CHECK(rel <= 1e-4);
      }
    }
  }

  SUBCASE("adapter tensors (fine-tuning path)") {
    const denoiser::GradMap grads =
        denoiser::grad(in.x_t, in.conds, in.eps, params, &adapter, false);
    for (auto& [key, g] : grads) {
      // key is lora.<name>.a or lora.<name>.b
      const bool is_down = key.back() == 'a';
      const std::string base_name = "base." + key.substr(5, key.size() - 7);
      Matrix& theta = is_down ? adapter.pairs.at(base_name).down
                              : adapter.pairs.at(base_name).up;
      for (int probe = 0; probe < 6; ++probe) {
        const std::size_t i =
            static_cast<std::size_t>(coord_rng.uniform() * theta.a.size());
        const double saved = theta.a[i];
        theta.a[i] = saved + h;
        const double lp = loss_of(in.x_t, in.conds, in.eps, params, &adapter);
        theta.a[i] = saved - h;
        const double lm = loss_of(in.x_t, in.conds, in.eps, params, &adapter);
        theta.a[i] = saved;
        const double fd = (lp - lm) / (2.0 * h);
        const double analytic = g.a[i];
        const double rel =
            std::abs(analytic - fd) / std::max(1.0, std::abs(analytic));
        CAPTURE(key);
        CAPTURE(i);
        CHECK(rel <= 1e-4);
      }
    }
  }
}
