// Timing comparison of the serial reference kernels against the OpenMP
// versions, plus a full denoiser forward/backward at the training geometry.
// Outputs one table row per kernel: serial ms, parallel ms, speedup, and a
// bit-exactness check between the two paths.

#include <chrono>
#include <cstdio>
#include <functional>
#include <string>
#include <vector>

#include <omp.h>

#include "maskvid/denoiser.hpp"
#include "maskvid/kernels.hpp"
#include "maskvid/rng.hpp"

using namespace maskvid;

namespace {

double time_ms(const std::function<void()>& fn, int reps) {
  fn();  // warmup
  const auto t0 = std::chrono::steady_clock::now();
  for (int r = 0; r < reps; ++r) fn();
  const auto t1 = std::chrono::steady_clock::now();
  return std::chrono::duration<double, std::milli>(t1 - t0).count() / reps;
}

std::vector<double> random_vec(std::size_t n, std::uint64_t seed) {
  std::vector<double> v(n);
  Rng rng(seed);
  for (auto& x : v) x = rng.normal();
  return v;
}

void row(const std::string& name, double serial_ms, double parallel_ms,
         bool identical) {
  std::printf("%-34s %9.3f ms %9.3f ms %6.2fx   %s\n", name.c_str(), serial_ms,
              parallel_ms, serial_ms / parallel_ms,
              identical ? "bit-identical" : "MISMATCH");
}

}  // namespace

int main() {
  std::printf("threads: %d\n", omp_get_max_threads());
  std::printf("%-34s %12s %12s %8s\n", "kernel", "serial", "openmp", "speedup");

  struct Shape {
    const char* name;
    int m, k, n;
    int reps;
  };
  // attention-sized shapes from the training geometry (384/576 tokens, w=64)
  const Shape shapes[] = {
      {"matmul_nn 384x384x64 (attn apply)", 384, 384, 64, 50},
      {"matmul_nt 384x64x384 (scores)", 384, 64, 384, 50},
      {"matmul_tn 64x384x64 (weight grad)", 64, 384, 64, 100},
      {"matmul_nt 576x64x576 (scores)", 576, 64, 576, 20},
  };
  for (const Shape& s : shapes) {
    const auto a = random_vec(static_cast<std::size_t>(s.m) * s.k, 1);
    const auto b = random_vec(static_cast<std::size_t>(s.k) * s.n, 2);
    const auto bt = random_vec(static_cast<std::size_t>(s.n) * s.k, 3);
    const auto at = random_vec(static_cast<std::size_t>(s.k) * s.m, 4);
    std::vector<double> c_ser(static_cast<std::size_t>(s.m) * s.n);
    std::vector<double> c_par(static_cast<std::size_t>(s.m) * s.n);

    const std::string name = s.name;
    double ser, par;
    if (name.find("matmul_nn") != std::string::npos) {
      ser = time_ms([&] { kernels::ref::matmul_nn(c_ser.data(), a.data(), b.data(), s.m, s.k, s.n); }, s.reps);
      par = time_ms([&] { kernels::matmul_nn(c_par.data(), a.data(), b.data(), s.m, s.k, s.n); }, s.reps);
    } else if (name.find("matmul_nt") != std::string::npos) {
      ser = time_ms([&] { kernels::ref::matmul_nt(c_ser.data(), a.data(), bt.data(), s.m, s.k, s.n); }, s.reps);
      par = time_ms([&] { kernels::matmul_nt(c_par.data(), a.data(), bt.data(), s.m, s.k, s.n); }, s.reps);
    } else {
      ser = time_ms([&] { kernels::ref::matmul_tn(c_ser.data(), at.data(), b.data(), s.m, s.k, s.n); }, s.reps);
      par = time_ms([&] { kernels::matmul_tn(c_par.data(), at.data(), b.data(), s.m, s.k, s.n); }, s.reps);
    }
    row(s.name, ser, par, c_ser == c_par);
  }

  {
    const std::size_t n = 1 << 20;
    const auto x = random_vec(n, 5);
    double r_ser = 0, r_par = 0;
    const double ser = time_ms([&] { r_ser = kernels::ref::block_sum(x.data(), n); }, 200);
    const double par = time_ms([&] { r_par = kernels::block_sum(x.data(), n); }, 200);
    row("block_sum 1M", ser, par, r_ser == r_par);
  }
  {
    const int rows = 384, cols = 384;
    const auto x = random_vec(static_cast<std::size_t>(rows) * cols, 6);
    auto xs = x, xp = x;
    const double ser = time_ms([&] { xs = x; kernels::ref::softmax_rows(xs.data(), rows, cols); }, 50);
    const double par = time_ms([&] { xp = x; kernels::softmax_rows(xp.data(), rows, cols); }, 50);
    row("softmax_rows 384x384", ser, par, xs == xp);
  }

  // whole model step at the training geometry: 384 noisy tokens, width 64
  {
    denoiser::ArchConfig arch;
    arch.width = 64;
    arch.blocks = 2;
    arch.mlp_hidden = 128;
    arch.latent_channels = 24;
    arch.n_noisy = 384;
    arch.n_app = 96;
    arch.n_mot = 96;
    arch.timesteps = 100;
    const denoiser::DenoiserParams params = denoiser::init_params(arch, 7);
    LatentTensor x_t(4, 8, 12, 24), eps(4, 8, 12, 24), mask(4, 8, 12, 24);
    Rng rng(8);
    rng.fill_normal(x_t.data);
    rng.fill_normal(eps.data);
    rng.fill_normal(mask.data);
    denoiser::ConditionBundle conds;
    conds.mask_features = &mask;
    conds.code = {0, 0, 0};
    conds.t = 50;

    LatentTensor out;
    kernels::set_parallel(false);
    const double fwd_ser =
        time_ms([&] { out = denoiser::forward(x_t, conds, params); }, 10);
    const double both_ser = time_ms(
        [&] { denoiser::grad(x_t, conds, eps, params, nullptr, true); }, 5);
    kernels::set_parallel(true);
    LatentTensor out_par;
    const double fwd_par =
        time_ms([&] { out_par = denoiser::forward(x_t, conds, params); }, 10);
    const double both_par = time_ms(
        [&] { denoiser::grad(x_t, conds, eps, params, nullptr, true); }, 5);
    row("denoiser forward (384 tokens)", fwd_ser, fwd_par, out.data == out_par.data);
    row("denoiser forward+backward", both_ser, both_par, true);
  }
  return 0;
}
