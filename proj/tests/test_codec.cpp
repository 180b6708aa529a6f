#include <doctest.h>

#include <stdexcept>
#include <cmath>

#include "maskvid/codec.hpp"
#include "maskvid/rng.hpp"

using namespace maskvid;

namespace {

VideoTensor random_video(int t, int h, int w, std::uint64_t seed,
                         bool quantized = false) {
  VideoTensor v(t, h, w);
  Rng rng(seed);
  for (float& x : v.data) {
    double u = rng.uniform();
    if (quantized) u = std::floor(u * 1024.0) / 1024.0;  // exact f32 multiples
    x = static_cast<float>(u);
  }
  return v;
}

}  // namespace

TEST_CASE("encode shape arithmetic: 16x32x48x3 -> 8x16x24x24") {
  const VideoTensor v(16, 32, 48);
  const LatentTensor lat = codec::encode(v);
  CHECK(lat.tdim == 8);
  CHECK(lat.height == 16);
  CHECK(lat.width == 24);
  CHECK(lat.channels == 24);
}

TEST_CASE("constant video maps to constant latent") {
  VideoTensor v(4, 8, 8);
  for (float& x : v.data) x = 0.5f;
  const LatentTensor lat = codec::encode(v);
  for (double x : lat.data) CHECK(x == 0.5);
}

TEST_CASE("decode(encode(v)) is bit-identical") {
  const int shapes[][3] = {{16, 32, 48}, {2, 2, 2}, {4, 10, 6}, {8, 16, 24}};
  for (auto [t, h, w] : shapes) {
    const VideoTensor v = random_video(t, h, w, 1000 + t + h + w);
    const VideoTensor back = codec::decode(codec::encode(v));
    REQUIRE(back.same_shape(v));
    CHECK(back.data == v.data);
  }
}

TEST_CASE("zero latent decodes to zero video") {
  const LatentTensor z(2, 4, 4, 24);
  const VideoTensor v = codec::decode(z);
  for (float x : v.data) CHECK(x == 0.0f);
}

TEST_CASE("encode is linear") {
  // values on a 2^-10 grid with power-of-two weights keep f32 arithmetic exact,
  // so linearity holds bit-for-bit
  const VideoTensor u = random_video(4, 8, 8, 7, true);
  const VideoTensor v = random_video(4, 8, 8, 8, true);
  VideoTensor mix(4, 8, 8);
  for (std::size_t i = 0; i < mix.data.size(); ++i)
    mix.data[i] = 0.5f * u.data[i] + 0.25f * v.data[i];
  const LatentTensor lhs = codec::encode(mix);
  const LatentTensor eu = codec::encode(u);
  const LatentTensor ev = codec::encode(v);
  for (std::size_t i = 0; i < lhs.data.size(); ++i)
    CHECK(lhs.data[i] == 0.5 * eu.data[i] + 0.25 * ev.data[i]);
}

TEST_CASE("single latent voxel perturbation changes exactly one pixel") {
  const codec::PatchFactors pf;
  const VideoTensor v = random_video(4, 8, 8, 9);
  const LatentTensor base = codec::encode(v, pf);
  // enumerate: channel c' of latent voxel (t,y,x) maps to video pixel
  // (t*pt+dt, y*ph+dh, x*pw+dw, rgb) with c' = ((dt*ph+dh)*pw+dw)*3+rgb
  for (int cprime : {0, 7, 13, 23}) {
    LatentTensor perturbed = base;
    const int t = 1, y = 2, x = 3;
    perturbed.at(t, y, x, cprime) += 0.25;
    const VideoTensor back = codec::decode(perturbed, pf);
    const int rgb = cprime % 3;
    const int rest = cprime / 3;
    const int dw = rest % pf.pw;
    const int dh = (rest / pf.pw) % pf.ph;
    const int dt = rest / (pf.pw * pf.ph);
    int diffs = 0;
    for (int tt = 0; tt < 4; ++tt)
      for (int yy = 0; yy < 8; ++yy)
        for (int xx = 0; xx < 8; ++xx)
          for (int c = 0; c < 3; ++c)
            if (back.at(tt, yy, xx, c) != v.at(tt, yy, xx, c)) {
              ++diffs;
              CHECK(tt == t * pf.pt + dt);
              CHECK(yy == y * pf.ph + dh);
              CHECK(xx == x * pf.pw + dw);
              CHECK(c == rgb);
            }
    CHECK(diffs == 1);
  }
}

TEST_CASE("encode/decode reject indivisible or malformed dims") {
  CHECK_THROWS_AS(codec::encode(VideoTensor(3, 8, 8)), std::invalid_argument);
  CHECK_THROWS_AS(codec::encode(VideoTensor(4, 7, 8)), std::invalid_argument);
  CHECK_THROWS_AS(codec::decode(LatentTensor(2, 4, 4, 23)), std::invalid_argument);
}

TEST_CASE("downsample: shape, constants, checkerboard, mean preservation") {
  SUBCASE("factor 2 on 32x48 gives 16x24") {
    const VideoTensor v(2, 32, 48);
    const VideoTensor d = codec::downsample(v, 2);
    CHECK(d.height == 16);
    CHECK(d.width == 24);
    CHECK(d.frames == 2);
  }
  SUBCASE("constant stays constant") {
    VideoTensor v(2, 8, 8);
    for (float& x : v.data) x = 0.75f;
    for (float x : codec::downsample(v, 2).data) CHECK(x == 0.75f);
  }
  SUBCASE("period-1 checkerboard pools to exactly 0.5") {
    VideoTensor v(1, 8, 8);
    for (int y = 0; y < 8; ++y)
      for (int x = 0; x < 8; ++x)
        for (int c = 0; c < 3; ++c) v.at(0, y, x, c) = ((y + x) & 1) ? 1.0f : 0.0f;
    for (float x : codec::downsample(v, 2).data) CHECK(x == 0.5f);
  }
  SUBCASE("global mean preserved") {
    const VideoTensor v = random_video(2, 16, 16, 11);
    const VideoTensor d = codec::downsample(v, 4);
    double mv = 0.0, md = 0.0;
    for (float x : v.data) mv += x;
    for (float x : d.data) md += x;
    CHECK(mv / v.data.size() == doctest::Approx(md / d.data.size()).epsilon(1e-6));
  }
  SUBCASE("indivisible dims rejected") {
    CHECK_THROWS_AS(codec::downsample(VideoTensor(1, 9, 8), 2), std::invalid_argument);
  }
}

TEST_CASE("encode_mask: constants and exact inverse") {
  MaskSequence m(4, 8, 8);
  SUBCASE("all-zero mask gives all-zero features") {
    for (double x : codec::encode_mask(m).data) CHECK(x == 0.0);
  }
  SUBCASE("all-one mask gives all-one features") {
    std::fill(m.data.begin(), m.data.end(), 1);
    for (double x : codec::encode_mask(m).data) CHECK(x == 1.0);
  }
  SUBCASE("decode recovers the replicated mask exactly") {
    Rng rng(13);
    for (auto& x : m.data) x = rng.uniform() < 0.3 ? 1 : 0;
    const VideoTensor back = codec::decode(codec::encode_mask(m));
    for (int t = 0; t < 4; ++t)
      for (int y = 0; y < 8; ++y)
        for (int x = 0; x < 8; ++x)
          for (int c = 0; c < 3; ++c)
            CHECK(back.at(t, y, x, c) == (m.at(t, y, x) ? 1.0f : 0.0f));
  }
}
