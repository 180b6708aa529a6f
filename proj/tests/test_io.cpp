#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>

#include "maskvid/config.hpp"
#include "maskvid/io.hpp"
#include "maskvid/pipeline.hpp"
#include "maskvid/rng.hpp"

using namespace maskvid;

namespace {

std::string tmp_path(const std::string& name) {
  return (std::filesystem::temp_directory_path() / ("maskvid_test_" + name)).string();
}

std::vector<std::uint8_t> file_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in);
  return std::vector<std::uint8_t>((std::istreambuf_iterator<char>(in)),
                                   std::istreambuf_iterator<char>());
}

std::vector<Triplet> small_dataset() {
  config::RunConfig cfg;
  cfg.frames = 4;
  cfg.height = 8;
  cfg.width = 8;
  cfg.clip_frames = 4;
  cfg.motion_window = 2;
  cfg.n_samples = 3;
  cfg.size_min = 1.5;
  cfg.size_max = 2.5;
  cfg.speed_max = 0.2;
  return pipeline::generate_dataset(cfg);
}

}  // namespace

TEST_CASE("config: defaults validate, unknown keys and bad values are rejected") {
  config::RunConfig cfg;
  config::validate(cfg);
  CHECK_THROWS_AS(config::parse_config_text("no_such_key=1\n"), config::ConfigError);
  CHECK_THROWS_AS(config::parse_config_text("steps=abc\n"), config::ConfigError);
  CHECK_THROWS_AS(config::parse_config_text("just a line\n"), config::ConfigError);

  const config::RunConfig parsed = config::parse_config_text(
      "# comment\nsteps=7\nalpha=0.5\nmode=pretrain\nholdout_pairs=0:1,2:3\n");
  CHECK(parsed.steps == 7);
  CHECK(parsed.alpha == 0.5);
  CHECK(parsed.mode == config::TrainMode::kPretrain);
  REQUIRE(parsed.holdout_pairs.size() == 2);
  CHECK(parsed.holdout_pairs[1] == std::pair<int, int>{2, 3});

  config::RunConfig bad;
  bad.clip_frames = 32;  // > frames
  CHECK_THROWS_AS(config::validate(bad), config::ConfigError);
  bad = config::RunConfig{};
  bad.height = 30;  // not divisible by downsample*patch
  CHECK_THROWS_AS(config::validate(bad), config::ConfigError);
}

TEST_CASE("config hash is stable and value-sensitive") {
  config::RunConfig a, b;
  CHECK(config::config_hash(a) == config::config_hash(b));
  b.alpha = 0.25;
  CHECK(config::config_hash(a) != config::config_hash(b));
  const std::string canon = config::canonical_text(a);
  CHECK(config::parse_config_text(canon).steps == a.steps);  // round-trips
  CHECK(config::config_hash(config::parse_config_text(canon)) ==
        config::config_hash(a));
}

TEST_CASE("dataset container round-trips losslessly and byte-identically") {
  const std::vector<Triplet> data = small_dataset();
  const std::string p1 = tmp_path("ds1.mvtr"), p2 = tmp_path("ds2.mvtr");
  io::save_dataset(p1, data);
  io::save_dataset(p2, data);
  CHECK(file_bytes(p1) == file_bytes(p2));

  const std::vector<Triplet> back = io::load_dataset(p1);
  REQUIRE(back.size() == data.size());
  for (std::size_t i = 0; i < data.size(); ++i) {
    CHECK(back[i].video.data == data[i].video.data);
    CHECK(back[i].masks.data == data[i].masks.data);
    CHECK(back[i].cond == data[i].cond);
  }

  // save(load(x)) must also be byte-identical
  io::save_dataset(p2, back);
  CHECK(file_bytes(p1) == file_bytes(p2));
  std::remove(p1.c_str());
  std::remove(p2.c_str());
}

TEST_CASE("truncated dataset names the failing offset") {
  const std::string p = tmp_path("trunc.mvtr");
  io::save_dataset(p, small_dataset());
  std::vector<std::uint8_t> bytes = file_bytes(p);
  bytes.resize(bytes.size() / 2);
  {
    std::ofstream out(p, std::ios::binary | std::ios::trunc);
    out.write(reinterpret_cast<const char*>(bytes.data()),
              static_cast<std::streamsize>(bytes.size()));
  }
  try {
    io::load_dataset(p);
    FAIL("expected FileError");
  } catch (const io::FileError& e) {
    CHECK(std::string(e.what()).find("offset") != std::string::npos);
  }
  std::remove(p.c_str());
}

TEST_CASE("checkpoint round-trip is byte-identical and state-exact") {
  denoiser::ArchConfig arch;
  arch.width = 8;
  arch.blocks = 1;
  arch.mlp_hidden = 16;
  arch.latent_channels = 24;
  arch.n_noisy = 8;
  arch.n_app = 4;
  arch.n_mot = 2;
  arch.timesteps = 4;
  const denoiser::DenoiserParams params = denoiser::init_params(arch, 50);
  denoiser::LoraAdapter adapter = denoiser::make_adapter(params, 2, 1.0, 51);
  Rng rng(52);
  for (auto& [n, pair] : adapter.pairs)
    for (double& v : pair.up.a) v = rng.normal();
  trainer::OptState opt;
  opt.step = 123;
  opt.m["lora.in_proj.a"] = denoiser::Matrix(2, 48);
  opt.v["lora.in_proj.a"] = denoiser::Matrix(2, 48);
  for (double& v : opt.m["lora.in_proj.a"].a) v = rng.normal();

  const io::Checkpoint ck =
      io::checkpoint_from_state(params, &adapter, &opt, opt.step, 0xdeadbeefcafef00dULL);
  const std::string p1 = tmp_path("ck1.mvck"), p2 = tmp_path("ck2.mvck");
  io::save_checkpoint(p1, ck);
  const io::Checkpoint loaded = io::load_checkpoint(p1);
  io::save_checkpoint(p2, loaded);
  CHECK(file_bytes(p1) == file_bytes(p2));

  const io::LoadedState st = io::state_from_checkpoint(loaded, arch, 2, 1.0);
  CHECK(st.step == 123);
  CHECK(st.config_hash == 0xdeadbeefcafef00dULL);
  REQUIRE(st.adapter.has_value());
  CHECK(st.adapter->pairs.at("base.in_proj").up.a ==
        adapter.pairs.at("base.in_proj").up.a);
  CHECK(st.params.in_proj.a == params.in_proj.a);
  CHECK(st.opt.m.at("lora.in_proj.a").a == opt.m.at("lora.in_proj.a").a);

  // a missing tensor is an error
  io::Checkpoint broken = loaded;
  broken.erase("base.out_proj");
  CHECK_THROWS_AS(io::state_from_checkpoint(broken, arch, 2, 1.0), io::FileError);
  std::remove(p1.c_str());
  std::remove(p2.c_str());
}

TEST_CASE("mask and video containers round-trip") {
  MaskSequence m(3, 6, 5);
  Rng rng(60);
  for (auto& v : m.data) v = rng.uniform() < 0.4 ? 1 : 0;
  const std::string mp = tmp_path("m.mvmk");
  io::save_mask(mp, m, 7);
  const MaskSequence mback = io::load_mask(mp);
  CHECK(mback.data == m.data);
  CHECK(mback.frames == 3);

  VideoTensor v(2, 4, 6);
  for (float& x : v.data) x = static_cast<float>(rng.uniform());
  const std::string vp = tmp_path("v.mvvd");
  io::save_video(vp, v, 7);
  const VideoTensor vback = io::load_video(vp);
  CHECK(vback.data == v.data);

  // non-binary mask byte rejected
  std::vector<std::uint8_t> bytes = file_bytes(mp);
  bytes.back() = 2;
  {
    std::ofstream out(mp, std::ios::binary | std::ios::trunc);
    out.write(reinterpret_cast<const char*>(bytes.data()),
              static_cast<std::streamsize>(bytes.size()));
  }
  CHECK_THROWS_AS(io::load_mask(mp), io::FileError);
  std::remove(mp.c_str());
  std::remove(vp.c_str());
}

TEST_CASE("metrics report: format and footer re-aggregation") {
  maskeval::MiouResult res;
  res.records = {{0, 0, 1.0}, {0, 1, 0.5}, {1, 0, 0.25}, {1, 1, 0.75}};
  res.per_video = {0.75, 0.5};
  res.s_m = 0.625;
  const std::string report = io::format_miou_report(res, 0xabcULL);
  CHECK(report.find("config_hash=0000000000000abc") != std::string::npos);
  CHECK(report.find("S_m=0.625000\n") != std::string::npos);
  CHECK(report.find("0\t1\t0.500000\n") != std::string::npos);
  CHECK(io::reaggregate_report(report) == doctest::Approx(0.625).epsilon(1e-6));
}

TEST_CASE("gif export is well-formed and deterministic") {
  VideoTensor v(3, 6, 8);
  Rng rng(70);
  for (float& x : v.data) x = static_cast<float>(rng.uniform());
  const std::string p1 = tmp_path("a.gif"), p2 = tmp_path("b.gif");
  io::write_gif(p1, v, 2);
  io::write_gif(p2, v, 2);
  const auto b1 = file_bytes(p1), b2 = file_bytes(p2);
  CHECK(b1 == b2);
  REQUIRE(b1.size() > 13);
  CHECK(std::string(b1.begin(), b1.begin() + 6) == "GIF89a");
  CHECK(b1.back() == 0x3B);
  std::remove(p1.c_str());
  std::remove(p2.c_str());
}
