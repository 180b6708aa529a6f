#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "maskvid/config.hpp"
#include "maskvid/io.hpp"
#include "maskvid/longgen.hpp"
#include "maskvid/pipeline.hpp"

namespace {

using namespace maskvid;

constexpr int kExitOk = 0;
constexpr int kExitRuntime = 1;
constexpr int kExitValidation = 2;

struct CommonOpts {
  std::string config_path;
  std::string out;
  bool seed_set = false;
  std::uint64_t seed = 0;
};

config::RunConfig effective_config(const CommonOpts& common) {
  config::RunConfig cfg;
  if (!common.config_path.empty())
    cfg = config::load_config_file(common.config_path);
  if (common.seed_set) cfg.seed = common.seed;
  config::validate(cfg);
  return cfg;
}

void echo_config(const config::RunConfig& cfg) {
  std::cout << "# effective config (hash " << config::hash_hex(config::config_hash(cfg))
            << ")\n"
            << config::canonical_text(cfg);
}

std::vector<synthkit::FrameTransform> parse_transforms(const std::string& path,
                                                       int frames) {
  std::ifstream in(path);
  if (!in) throw config::ConfigError("cannot open transforms file '" + path + "'");
  std::vector<synthkit::FrameTransform> list;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    std::istringstream ss(line);
    synthkit::FrameTransform tr;
    if (ss >> tr.scale_x) {
      if (!(ss >> tr.scale_y >> tr.translate_x >> tr.translate_y))
        throw config::ConfigError("transforms line " + std::to_string(lineno) +
                                  ": need 'sx sy tx ty'");
      std::string extra;
      if (ss >> extra)
        throw config::ConfigError("transforms line " + std::to_string(lineno) +
                                  ": trailing token '" + extra + "'");
      list.push_back(tr);
    }
  }
  if (list.empty()) throw config::ConfigError("transforms file has no entries");
  if (static_cast<int>(list.size()) == 1)
    return std::vector<synthkit::FrameTransform>(frames, list[0]);
  if (static_cast<int>(list.size()) != frames)
    throw config::ConfigError("transforms file has " + std::to_string(list.size()) +
                              " entries, mask has " + std::to_string(frames) +
                              " frames");
  return list;
}

int cmd_gen_data(const CommonOpts& common) {
  const config::RunConfig cfg = effective_config(common);
  echo_config(cfg);
  const std::vector<Triplet> triplets = pipeline::generate_dataset(cfg);
  io::save_dataset(common.out, triplets);
  std::cout << "wrote " << triplets.size() << " triplets to " << common.out << "\n";
  return kExitOk;
}

int cmd_train(const CommonOpts& common, const std::string& dataset_path,
              const std::string& init_path, const std::string& resume_path) {
  const config::RunConfig cfg = effective_config(common);
  echo_config(cfg);
  const std::vector<Triplet> dataset = io::load_dataset(dataset_path);
  int printed = 0;
  pipeline::StepCallback cb = [&](long long step, const trainer::LossReport& rep) {
    if (step % 100 == 0 || step == cfg.steps - 1) {
      std::printf("step %lld  L_d %.6f  L_c %.6f  L %.6f\n", step, rep.l_d,
                  rep.l_c, rep.l);
      std::fflush(stdout);
      ++printed;
    }
  };
  pipeline::run_training(cfg, dataset, common.out, init_path, resume_path, cb);
  std::cout << "checkpoint: " << common.out << "\nmetrics log: " << common.out
            << ".log\n";
  return kExitOk;
}

int cmd_longgen(const CommonOpts& common, const std::string& checkpoint_path,
                const std::string& mask_path, bool no_conditions) {
  const config::RunConfig cfg = effective_config(common);
  echo_config(cfg);
  const io::LoadedState st = io::state_from_checkpoint(
      io::load_checkpoint(checkpoint_path), cfg.arch_config(), cfg.lora_rank,
      cfg.lora_scale);
  const denoiser::DenoiserParams merged =
      st.adapter ? denoiser::merge_lora(st.params, *st.adapter) : st.params;

  longgen::LongGenPlan plan;
  plan.total_clips = cfg.clips;
  plan.clip_frames = cfg.clip_frames;
  plan.motion_window = cfg.motion_window;
  plan.downsample_factor = cfg.downsample_factor;
  plan.masks = io::load_mask(mask_path);
  plan.code = {cfg.cond_shape, cfg.cond_color, cfg.cond_background};
  plan.seed = cfg.seed;
  plan.use_conditions = !no_conditions;

  const diffusion::NoiseSchedule sched =
      diffusion::make_schedule(cfg.sched_steps, cfg.beta_min, cfg.beta_max);
  const VideoTensor video =
      longgen::generate_long(plan, merged, sched, cfg.clip_geometry());

  const std::uint64_t hash = config::config_hash(cfg);
  io::save_video(common.out, video, hash);
  io::write_gif(common.out + ".gif", video, cfg.gif_scale);
  const std::vector<double> bc = longgen::boundary_consistency(video, cfg.clip_frames);
  std::cout << "wrote " << video.frames << " frames to " << common.out << " (+ "
            << common.out << ".gif)\n";
  for (std::size_t i = 0; i < bc.size(); ++i)
    std::printf("boundary %zu: %.6f\n", i, bc[i]);
  return kExitOk;
}

int cmd_eval(const CommonOpts& common, const std::vector<std::string>& video_paths,
             const std::vector<std::string>& mask_paths,
             const std::string& dataset_path) {
  const config::RunConfig cfg = effective_config(common);
  std::vector<VideoTensor> videos;
  for (const std::string& p : video_paths) videos.push_back(io::load_video(p));

  std::vector<MaskSequence> masks;
  if (!dataset_path.empty()) {
    for (const Triplet& t : io::load_dataset(dataset_path))
      masks.push_back(t.masks);
  } else {
    for (const std::string& p : mask_paths) masks.push_back(io::load_mask(p));
  }
  if (videos.size() != masks.size())
    throw config::ConfigError("eval: " + std::to_string(videos.size()) +
                              " videos vs " + std::to_string(masks.size()) +
                              " ground-truth masks");

  const maskeval::MiouResult res = maskeval::mask_miou(videos, masks);
  const std::string report = io::format_miou_report(res, config::config_hash(cfg));
  io::save_text(common.out, report);
  std::printf("S_m=%.6f (%zu videos) -> %s\n", res.s_m, videos.size(),
              common.out.c_str());
  return kExitOk;
}

int cmd_edit_mask(const CommonOpts& common, const std::string& mask_path,
                  const std::string& transforms_path) {
  const config::RunConfig cfg = effective_config(common);
  const MaskSequence masks = io::load_mask(mask_path);
  const std::vector<synthkit::FrameTransform> transforms =
      parse_transforms(transforms_path, masks.frames);
  const MaskSequence edited = synthkit::edit_mask_affine(masks, transforms);
  io::save_mask(common.out, edited, config::config_hash(cfg));

  std::string prov = "# edit-mask provenance\ninput=" + mask_path +
                     "\ntransforms=" + transforms_path + "\n";
  char line[128];
  for (std::size_t i = 0; i < transforms.size(); ++i) {
    std::snprintf(line, sizeof(line), "frame %zu: sx=%.9g sy=%.9g tx=%.9g ty=%.9g\n",
                  i, transforms[i].scale_x, transforms[i].scale_y,
                  transforms[i].translate_x, transforms[i].translate_y);
    prov += line;
  }
  io::save_text(common.out + ".prov", prov);
  std::cout << "wrote " << common.out << " and " << common.out << ".prov\n";
  return kExitOk;
}

int cmd_combine_mask(const CommonOpts& common, const std::string& mask_a,
                     const std::string& mask_b) {
  const config::RunConfig cfg = effective_config(common);
  const MaskSequence combined =
      synthkit::combine_masks(io::load_mask(mask_a), io::load_mask(mask_b));
  io::save_mask(common.out, combined, config::config_hash(cfg));
  std::cout << "wrote " << common.out << "\n";
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"mask-conditioned video diffusion toolkit"};
  app.require_subcommand(1);

  CommonOpts common;
  auto add_common = [&](CLI::App* sub, bool needs_out = true) {
    sub->add_option("--config", common.config_path, "key=value config file");
    sub->add_option("--seed", common.seed, "seed override")
        ->each([&](const std::string&) { common.seed_set = true; });
    auto* out = sub->add_option("--out", common.out, "output path");
    if (needs_out) out->required();
  };

  auto* gen = app.add_subcommand("gen-data", "generate a synthetic triplet dataset");
  add_common(gen);

  auto* train = app.add_subcommand("train", "pretrain or fine-tune a model");
  add_common(train);
  std::string dataset_path, init_path, resume_path;
  train->add_option("--dataset", dataset_path, "MVTR dataset")->required();
  train->add_option("--init", init_path, "base checkpoint for fine-tuning");
  train->add_option("--resume", resume_path, "checkpoint to resume");

  auto* lg = app.add_subcommand("longgen", "iterative long-video generation");
  add_common(lg);
  std::string checkpoint_path, mask_path;
  bool no_conditions = false;
  lg->add_option("--checkpoint", checkpoint_path, "trained checkpoint")->required();
  lg->add_option("--mask", mask_path, "MVMK mask sequence covering all clips")
      ->required();
  lg->add_flag("--no-conditions", no_conditions,
               "drop appearance/motion conditions (ablation)");

  auto* ev = app.add_subcommand("eval", "mask mIoU metric report");
  add_common(ev);
  std::vector<std::string> video_paths, mask_paths;
  std::string eval_dataset;
  ev->add_option("--videos", video_paths, "generated MVVD files")->required();
  ev->add_option("--masks", mask_paths, "ground-truth MVMK files");
  ev->add_option("--dataset", eval_dataset, "MVTR dataset as ground truth");

  auto* em = app.add_subcommand("edit-mask", "affine mask sequence editing");
  add_common(em);
  std::string edit_mask_path, transforms_path;
  em->add_option("--mask", edit_mask_path, "input MVMK")->required();
  em->add_option("--transforms", transforms_path,
                 "text file: sx sy tx ty (one line, or one per frame)")
      ->required();

  auto* cm = app.add_subcommand("combine-mask", "union of two mask sequences");
  add_common(cm);
  std::string mask_a, mask_b;
  cm->add_option("--mask", mask_a, "first MVMK")->required();
  cm->add_option("--mask2", mask_b, "second MVMK")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kExitOk : kExitValidation;
  }

  try {
    if (gen->parsed()) return cmd_gen_data(common);
    if (train->parsed()) return cmd_train(common, dataset_path, init_path, resume_path);
    if (lg->parsed()) return cmd_longgen(common, checkpoint_path, mask_path, no_conditions);
    if (ev->parsed()) return cmd_eval(common, video_paths, mask_paths, eval_dataset);
    if (em->parsed()) return cmd_edit_mask(common, edit_mask_path, transforms_path);
    if (cm->parsed()) return cmd_combine_mask(common, mask_a, mask_b);
  } catch (const config::ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitValidation;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitValidation;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitOk;
}
