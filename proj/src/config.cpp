#include "maskvid/config.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

#include "maskvid/synthkit.hpp"

namespace maskvid::config {

namespace {

std::string fmt_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

int parse_int(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    const int r = std::stoi(v, &pos);
    if (pos != v.size()) throw std::invalid_argument("");
    return r;
  } catch (...) {
    throw ConfigError("config: bad integer for " + key + ": '" + v + "'");
  }
}

double parse_double(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    const double r = std::stod(v, &pos);
    if (pos != v.size()) throw std::invalid_argument("");
    return r;
  } catch (...) {
    throw ConfigError("config: bad number for " + key + ": '" + v + "'");
  }
}

std::uint64_t parse_u64(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    const unsigned long long r = std::stoull(v, &pos);
    if (pos != v.size()) throw std::invalid_argument("");
    return r;
  } catch (...) {
    throw ConfigError("config: bad seed for " + key + ": '" + v + "'");
  }
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "0" || v == "false") return false;
  if (v == "1" || v == "true") return true;
  throw ConfigError("config: bad boolean for " + key + ": '" + v + "'");
}

std::vector<std::pair<int, int>> parse_pairs(const std::string& key,
                                             const std::string& v) {
  std::vector<std::pair<int, int>> out;
  if (v.empty()) return out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const auto colon = item.find(':');
    if (colon == std::string::npos)
      throw ConfigError("config: bad pair in " + key + ": '" + item + "'");
    out.emplace_back(parse_int(key, item.substr(0, colon)),
                     parse_int(key, item.substr(colon + 1)));
  }
  return out;
}

std::string pairs_to_string(const std::vector<std::pair<int, int>>& pairs) {
  std::string out;
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(pairs[i].first) + ":" + std::to_string(pairs[i].second);
  }
  return out;
}

}  // namespace

sampling::ClipGeometry RunConfig::clip_geometry() const {
  sampling::ClipGeometry g;
  g.clip_frames = clip_frames;
  g.height = height;
  g.width = width;
  g.patch = {patch_t, patch_h, patch_w};
  return g;
}

trainer::TrainConfig RunConfig::train_config() const {
  trainer::TrainConfig t;
  t.steps = steps;
  t.batch_size = batch_size;
  t.learning_rate = learning_rate;
  t.alpha = alpha;
  t.beta1 = adam_beta1;
  t.beta2 = adam_beta2;
  t.eps = adam_eps;
  t.seed = seed;
  t.checkpoint_interval = checkpoint_interval;
  t.long_cond_fraction = long_cond_fraction;
  t.clip_frames = clip_frames;
  t.motion_window = motion_window;
  t.downsample_factor = downsample_factor;
  return t;
}

denoiser::ArchConfig RunConfig::arch_config() const {
  denoiser::ArchConfig a;
  a.width = model_width;
  a.blocks = model_blocks;
  a.mlp_hidden = mlp_hidden;
  a.latent_channels = 3 * patch_t * patch_h * patch_w;
  a.n_noisy = (clip_frames / patch_t) * (height / patch_h) * (width / patch_w);
  a.n_app = (height / patch_h) * (width / patch_w);
  a.n_mot = (motion_window / patch_t) * (height / downsample_factor / patch_h) *
            (width / downsample_factor / patch_w);
  a.timesteps = sched_steps;
  a.n_shape = synthkit::kNumShapes;
  a.n_color = synthkit::kNumColors;
  a.n_bg = synthkit::kNumBackgrounds;
  return a;
}

void apply_override(RunConfig& c, const std::string& key, const std::string& v) {
  if (key == "frames") c.frames = parse_int(key, v);
  else if (key == "height") c.height = parse_int(key, v);
  else if (key == "width") c.width = parse_int(key, v);
  else if (key == "clip_frames") c.clip_frames = parse_int(key, v);
  else if (key == "motion_window") c.motion_window = parse_int(key, v);
  else if (key == "patch_t") c.patch_t = parse_int(key, v);
  else if (key == "patch_h") c.patch_h = parse_int(key, v);
  else if (key == "patch_w") c.patch_w = parse_int(key, v);
  else if (key == "downsample_factor") c.downsample_factor = parse_int(key, v);
  else if (key == "sched_steps") c.sched_steps = parse_int(key, v);
  else if (key == "beta_min") c.beta_min = parse_double(key, v);
  else if (key == "beta_max") c.beta_max = parse_double(key, v);
  else if (key == "model_width") c.model_width = parse_int(key, v);
  else if (key == "model_blocks") c.model_blocks = parse_int(key, v);
  else if (key == "mlp_hidden") c.mlp_hidden = parse_int(key, v);
  else if (key == "lora_rank") c.lora_rank = parse_int(key, v);
  else if (key == "lora_scale") c.lora_scale = parse_double(key, v);
  else if (key == "mode") {
    if (v == "pretrain") c.mode = TrainMode::kPretrain;
    else if (v == "finetune") c.mode = TrainMode::kFinetune;
    else throw ConfigError("config: mode must be pretrain|finetune, got '" + v + "'");
  } else if (key == "steps") c.steps = parse_int(key, v);
  else if (key == "batch_size") c.batch_size = parse_int(key, v);
  else if (key == "learning_rate") c.learning_rate = parse_double(key, v);
  else if (key == "alpha") c.alpha = parse_double(key, v);
  else if (key == "adam_beta1") c.adam_beta1 = parse_double(key, v);
  else if (key == "adam_beta2") c.adam_beta2 = parse_double(key, v);
  else if (key == "adam_eps") c.adam_eps = parse_double(key, v);
  else if (key == "seed") c.seed = parse_u64(key, v);
  else if (key == "checkpoint_interval") c.checkpoint_interval = parse_int(key, v);
  else if (key == "long_cond_fraction") c.long_cond_fraction = parse_double(key, v);
  else if (key == "n_samples") c.n_samples = parse_int(key, v);
  else if (key == "jitter") c.jitter = parse_bool(key, v);
  else if (key == "holdout_mode") {
    if (v == "none") c.holdout_mode = HoldoutMode::kNone;
    else if (v == "exclude") c.holdout_mode = HoldoutMode::kExclude;
    else if (v == "only") c.holdout_mode = HoldoutMode::kOnly;
    else throw ConfigError("config: holdout_mode must be none|exclude|only");
  } else if (key == "holdout_pairs") c.holdout_pairs = parse_pairs(key, v);
  else if (key == "size_min") c.size_min = parse_double(key, v);
  else if (key == "size_max") c.size_max = parse_double(key, v);
  else if (key == "speed_max") c.speed_max = parse_double(key, v);
  else if (key == "clips") c.clips = parse_int(key, v);
  else if (key == "cond_shape") c.cond_shape = parse_int(key, v);
  else if (key == "cond_color") c.cond_color = parse_int(key, v);
  else if (key == "cond_background") c.cond_background = parse_int(key, v);
  else if (key == "gif_scale") c.gif_scale = parse_int(key, v);
  else throw ConfigError("config: unknown key '" + key + "'");
}

RunConfig parse_config_text(const std::string& text) {
  RunConfig cfg;
  std::stringstream ss(text);
  std::string line;
  int lineno = 0;
  while (std::getline(ss, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    // trim
    const auto b = line.find_first_not_of(" \t\r");
    if (b == std::string::npos) continue;
    const auto e = line.find_last_not_of(" \t\r");
    line = line.substr(b, e - b + 1);
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("config: line " + std::to_string(lineno) +
                        " is not key=value: '" + line + "'");
    std::string key = line.substr(0, eq);
    std::string val = line.substr(eq + 1);
    const auto ke = key.find_last_not_of(" \t");
    key = key.substr(0, ke + 1);
    const auto vb = val.find_first_not_of(" \t");
    val = vb == std::string::npos ? "" : val.substr(vb);
    apply_override(cfg, key, val);
  }
  return cfg;
}

RunConfig load_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config: cannot open '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config_text(ss.str());
}

void validate(const RunConfig& c) {
  auto req = [](bool ok, const std::string& msg) {
    if (!ok) throw ConfigError("config: " + msg);
  };
  req(c.frames >= 2, "frames must be >= 2");
  req(c.height >= 4 && c.width >= 4, "frame dims too small");
  req(c.clip_frames >= 2 && c.clip_frames <= c.frames,
      "clip_frames must be in [2, frames]");
  req(c.motion_window >= 1 && c.motion_window <= c.clip_frames,
      "motion_window must be in [1, clip_frames]");
  req(c.patch_t >= 1 && c.patch_h >= 1 && c.patch_w >= 1, "patch factors must be >= 1");
  req(c.clip_frames % c.patch_t == 0, "clip_frames not divisible by patch_t");
  req(c.height % c.patch_h == 0, "height not divisible by patch_h");
  req(c.width % c.patch_w == 0, "width not divisible by patch_w");
  req(c.motion_window % c.patch_t == 0, "motion_window not divisible by patch_t");
  req(c.downsample_factor >= 1, "downsample_factor must be >= 1");
  req(c.height % c.downsample_factor == 0 && c.width % c.downsample_factor == 0,
      "dims not divisible by downsample_factor");
  req((c.height / c.downsample_factor) % c.patch_h == 0 &&
          (c.width / c.downsample_factor) % c.patch_w == 0,
      "downsampled dims not divisible by patch factors");
  req(c.sched_steps >= 2, "sched_steps must be >= 2");
  req(c.beta_min > 0.0 && c.beta_min <= c.beta_max && c.beta_max < 1.0,
      "need 0 < beta_min <= beta_max < 1");
  req(c.model_width >= 1 && c.model_blocks >= 1 && c.mlp_hidden >= 1,
      "model dims must be >= 1");
  req(c.lora_rank >= 1, "lora_rank must be >= 1");
  req(c.steps >= 0, "steps must be >= 0");
  req(c.batch_size >= 1, "batch_size must be >= 1");
  req(c.learning_rate > 0.0, "learning_rate must be > 0");
  req(c.alpha >= 0.0, "alpha must be >= 0");
  req(c.adam_beta1 >= 0.0 && c.adam_beta1 < 1.0, "adam_beta1 must be in [0,1)");
  req(c.adam_beta2 >= 0.0 && c.adam_beta2 < 1.0, "adam_beta2 must be in [0,1)");
  req(c.adam_eps > 0.0, "adam_eps must be > 0");
  req(c.checkpoint_interval >= 1, "checkpoint_interval must be >= 1");
  req(c.long_cond_fraction >= 0.0 && c.long_cond_fraction <= 1.0,
      "long_cond_fraction must be in [0,1]");
  if (c.long_cond_fraction > 0.0)
    req(c.frames >= 2 * c.clip_frames,
        "long_cond_fraction > 0 needs frames >= 2*clip_frames");
  req(c.n_samples >= 1, "n_samples must be >= 1");
  req(c.size_min > 0.5 && c.size_min <= c.size_max, "bad size range");
  req(c.speed_max >= 0.0, "speed_max must be >= 0");
  for (const auto& [s, col] : c.holdout_pairs) {
    req(s >= 0 && s < synthkit::kNumShapes, "holdout pair shape out of range");
    req(col >= 0 && col < synthkit::kNumColors, "holdout pair color out of range");
  }
  if (c.holdout_mode != HoldoutMode::kNone)
    req(!c.holdout_pairs.empty(), "holdout_mode needs holdout_pairs");
  if (c.holdout_mode == HoldoutMode::kExclude)
    req(c.holdout_pairs.size() <
            static_cast<std::size_t>(synthkit::kNumShapes * synthkit::kNumColors),
        "holdout_pairs excludes every shape/color combination");
  req(c.clips >= 1, "clips must be >= 1");
  req(c.cond_shape >= 0 && c.cond_shape < synthkit::kNumShapes, "cond_shape out of range");
  req(c.cond_color >= 0 && c.cond_color < synthkit::kNumColors, "cond_color out of range");
  req(c.cond_background >= 0 && c.cond_background < synthkit::kNumBackgrounds,
      "cond_background out of range");
  req(c.gif_scale >= 1, "gif_scale must be >= 1");
}

std::string canonical_text(const RunConfig& c) {
  std::map<std::string, std::string> kv;
  kv["frames"] = std::to_string(c.frames);
  kv["height"] = std::to_string(c.height);
  kv["width"] = std::to_string(c.width);
  kv["clip_frames"] = std::to_string(c.clip_frames);
  kv["motion_window"] = std::to_string(c.motion_window);
  kv["patch_t"] = std::to_string(c.patch_t);
  kv["patch_h"] = std::to_string(c.patch_h);
  kv["patch_w"] = std::to_string(c.patch_w);
  kv["downsample_factor"] = std::to_string(c.downsample_factor);
  kv["sched_steps"] = std::to_string(c.sched_steps);
  kv["beta_min"] = fmt_double(c.beta_min);
  kv["beta_max"] = fmt_double(c.beta_max);
  kv["model_width"] = std::to_string(c.model_width);
  kv["model_blocks"] = std::to_string(c.model_blocks);
  kv["mlp_hidden"] = std::to_string(c.mlp_hidden);
  kv["lora_rank"] = std::to_string(c.lora_rank);
  kv["lora_scale"] = fmt_double(c.lora_scale);
  kv["mode"] = c.mode == TrainMode::kPretrain ? "pretrain" : "finetune";
  kv["steps"] = std::to_string(c.steps);
  kv["batch_size"] = std::to_string(c.batch_size);
  kv["learning_rate"] = fmt_double(c.learning_rate);
  kv["alpha"] = fmt_double(c.alpha);
  kv["adam_beta1"] = fmt_double(c.adam_beta1);
  kv["adam_beta2"] = fmt_double(c.adam_beta2);
  kv["adam_eps"] = fmt_double(c.adam_eps);
  kv["seed"] = std::to_string(c.seed);
  kv["checkpoint_interval"] = std::to_string(c.checkpoint_interval);
  kv["long_cond_fraction"] = fmt_double(c.long_cond_fraction);
  kv["n_samples"] = std::to_string(c.n_samples);
  kv["jitter"] = c.jitter ? "1" : "0";
  kv["holdout_mode"] = c.holdout_mode == HoldoutMode::kNone      ? "none"
                       : c.holdout_mode == HoldoutMode::kExclude ? "exclude"
                                                                 : "only";
  kv["holdout_pairs"] = pairs_to_string(c.holdout_pairs);
  kv["size_min"] = fmt_double(c.size_min);
  kv["size_max"] = fmt_double(c.size_max);
  kv["speed_max"] = fmt_double(c.speed_max);
  kv["clips"] = std::to_string(c.clips);
  kv["cond_shape"] = std::to_string(c.cond_shape);
  kv["cond_color"] = std::to_string(c.cond_color);
  kv["cond_background"] = std::to_string(c.cond_background);
  kv["gif_scale"] = std::to_string(c.gif_scale);

  std::string out;
  for (const auto& [k, v] : kv) out += k + "=" + v + "\n";
  return out;
}

std::uint64_t config_hash(const RunConfig& cfg) {
  const std::string text = canonical_text(cfg);
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : text) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string hash_hex(std::uint64_t hash) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(hash));
  return buf;
}

}  // namespace maskvid::config
