#include "maskvid/io.hpp"

#include <cstdio>
#include <cstring>
#include <fstream>
#include <unordered_map>

namespace maskvid::io {

namespace {

// --- little-endian buffer helpers ---

struct Writer {
  std::vector<std::uint8_t> buf;

  void u8(std::uint8_t v) { buf.push_back(v); }
  void u16(std::uint16_t v) {
    buf.push_back(v & 0xff);
    buf.push_back((v >> 8) & 0xff);
  }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) buf.push_back((v >> (8 * i)) & 0xff);
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) buf.push_back((v >> (8 * i)) & 0xff);
  }
  void f32(float v) {
    std::uint32_t bits;
    std::memcpy(&bits, &v, 4);
    u32(bits);
  }
  void f64(double v) {
    std::uint64_t bits;
    std::memcpy(&bits, &v, 8);
    u64(bits);
  }
  void bytes(const void* p, std::size_t n) {
    const auto* b = static_cast<const std::uint8_t*>(p);
    buf.insert(buf.end(), b, b + n);
  }
};

struct Reader {
  const std::vector<std::uint8_t>& buf;
  std::size_t off = 0;
  std::string what;

  Reader(const std::vector<std::uint8_t>& b, std::string w)
      : buf(b), what(std::move(w)) {}

  void need(std::size_t n, const char* field) {
    if (off + n > buf.size())
      throw FileError(what + ": truncated at offset " + std::to_string(off) +
                      " (need " + std::to_string(n) + " bytes for " + field +
                      ", have " + std::to_string(buf.size() - off) + ")");
  }
  std::uint8_t u8(const char* f) {
    need(1, f);
    return buf[off++];
  }
  std::uint16_t u16(const char* f) {
    need(2, f);
    std::uint16_t v = buf[off] | (buf[off + 1] << 8);
    off += 2;
    return v;
  }
  std::uint32_t u32(const char* f) {
    need(4, f);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(buf[off + i]) << (8 * i);
    off += 4;
    return v;
  }
  std::uint64_t u64(const char* f) {
    need(8, f);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(buf[off + i]) << (8 * i);
    off += 8;
    return v;
  }
  float f32(const char* f) {
    const std::uint32_t bits = u32(f);
    float v;
    std::memcpy(&v, &bits, 4);
    return v;
  }
  double f64(const char* f) {
    const std::uint64_t bits = u64(f);
    double v;
    std::memcpy(&v, &bits, 8);
    return v;
  }
};

void write_atomic(const std::string& path, const std::vector<std::uint8_t>& buf) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw FileError("cannot open '" + tmp + "' for writing");
    out.write(reinterpret_cast<const char*>(buf.data()),
              static_cast<std::streamsize>(buf.size()));
    if (!out) throw FileError("write failed on '" + tmp + "'");
  }
  if (std::rename(tmp.c_str(), path.c_str()) != 0)
    throw FileError("cannot rename '" + tmp + "' to '" + path + "'");
}

std::vector<std::uint8_t> read_all(const std::string& path) {
  std::ifstream in(path, std::ios::binary | std::ios::ate);
  if (!in) throw FileError("cannot open '" + path + "'");
  const std::streamsize size = in.tellg();
  in.seekg(0);
  std::vector<std::uint8_t> buf(static_cast<std::size_t>(size));
  in.read(reinterpret_cast<char*>(buf.data()), size);
  if (!in) throw FileError("read failed on '" + path + "'");
  return buf;
}

void check_magic(Reader& r, const char* magic) {
  r.need(4, "magic");
  if (std::memcmp(r.buf.data() + r.off, magic, 4) != 0)
    throw FileError(r.what + ": bad magic (expected " + magic + ")");
  r.off += 4;
}

constexpr std::uint32_t kFormatVersion = 1;

}  // namespace

// --- dataset ---

void save_dataset(const std::string& path, const std::vector<Triplet>& triplets) {
  Writer w;
  w.bytes("MVTR", 4);
  w.u32(kFormatVersion);
  w.u32(static_cast<std::uint32_t>(triplets.size()));
  for (const Triplet& t : triplets) {
    w.u16(static_cast<std::uint16_t>(t.video.frames));
    w.u16(static_cast<std::uint16_t>(t.video.height));
    w.u16(static_cast<std::uint16_t>(t.video.width));
    w.u16(static_cast<std::uint16_t>(t.cond.shape));
    w.u16(static_cast<std::uint16_t>(t.cond.color));
    w.u16(static_cast<std::uint16_t>(t.cond.background));
    for (float v : t.video.data) w.f32(v);
    w.bytes(t.masks.data.data(), t.masks.data.size());
  }
  write_atomic(path, w.buf);
}

std::vector<Triplet> load_dataset(const std::string& path) {
  const std::vector<std::uint8_t> buf = read_all(path);
  Reader r(buf, "dataset '" + path + "'");
  check_magic(r, "MVTR");
  const std::uint32_t version = r.u32("version");
  if (version != kFormatVersion)
    throw FileError(r.what + ": unsupported version " + std::to_string(version));
  const std::uint32_t count = r.u32("sample count");
  std::vector<Triplet> out;
  out.reserve(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    Triplet t;
    const int frames = r.u16("frames");
    const int h = r.u16("height");
    const int wd = r.u16("width");
    t.cond.shape = r.u16("cond shape");
    t.cond.color = r.u16("cond color");
    t.cond.background = r.u16("cond background");
    t.video = VideoTensor(frames, h, wd);
    const std::size_t vbytes = t.video.data.size() * 4;
    r.need(vbytes, "video payload");
    for (float& v : t.video.data) v = r.f32("video payload");
    t.masks = MaskSequence(frames, h, wd);
    r.need(t.masks.data.size(), "mask payload");
    for (std::uint8_t& m : t.masks.data) {
      m = r.u8("mask payload");
      if (m > 1) throw FileError(r.what + ": non-binary mask byte");
    }
    out.push_back(std::move(t));
  }
  if (r.off != buf.size())
    throw FileError(r.what + ": " + std::to_string(buf.size() - r.off) +
                    " trailing bytes at offset " + std::to_string(r.off));
  return out;
}

// --- checkpoint ---

void save_checkpoint(const std::string& path, const Checkpoint& ck) {
  Writer w;
  w.bytes("MVCK", 4);
  w.u32(kFormatVersion);
  w.u32(static_cast<std::uint32_t>(ck.size()));
  for (const auto& [name, blob] : ck) {
    w.u16(static_cast<std::uint16_t>(name.size()));
    w.bytes(name.data(), name.size());
    w.u8(static_cast<std::uint8_t>(blob.dims.size()));
    std::size_t numel = 1;
    for (std::uint32_t d : blob.dims) {
      w.u32(d);
      numel *= d;
    }
    if (numel != blob.data.size())
      throw FileError("checkpoint tensor '" + name + "' dims/data mismatch");
    for (double v : blob.data) w.f64(v);
  }
  write_atomic(path, w.buf);
}

Checkpoint load_checkpoint(const std::string& path) {
  const std::vector<std::uint8_t> buf = read_all(path);
  Reader r(buf, "checkpoint '" + path + "'");
  check_magic(r, "MVCK");
  const std::uint32_t version = r.u32("version");
  if (version != kFormatVersion)
    throw FileError(r.what + ": unsupported version " + std::to_string(version));
  const std::uint32_t count = r.u32("tensor count");
  Checkpoint ck;
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::uint16_t name_len = r.u16("name length");
    r.need(name_len, "name");
    std::string name(reinterpret_cast<const char*>(buf.data() + r.off), name_len);
    r.off += name_len;
    TensorBlob blob;
    const std::uint8_t rank = r.u8("rank");
    std::size_t numel = 1;
    for (int d = 0; d < rank; ++d) {
      blob.dims.push_back(r.u32("dim"));
      numel *= blob.dims.back();
    }
    r.need(numel * 8, "tensor data");
    blob.data.resize(numel);
    for (double& v : blob.data) v = r.f64("tensor data");
    ck.emplace(std::move(name), std::move(blob));
  }
  if (r.off != buf.size())
    throw FileError(r.what + ": " + std::to_string(buf.size() - r.off) +
                    " trailing bytes at offset " + std::to_string(r.off));
  return ck;
}

namespace {

TensorBlob blob_from_matrix(const denoiser::Matrix& m) {
  TensorBlob b;
  b.dims = {static_cast<std::uint32_t>(m.rows), static_cast<std::uint32_t>(m.cols)};
  b.data = m.a;
  return b;
}

denoiser::Matrix matrix_from_blob(const std::string& name, const TensorBlob& b) {
  if (b.dims.size() != 2)
    throw FileError("checkpoint tensor '" + name + "' is not a matrix");
  denoiser::Matrix m(static_cast<int>(b.dims[0]), static_cast<int>(b.dims[1]));
  m.a = b.data;
  return m;
}

}  // namespace

Checkpoint checkpoint_from_state(const denoiser::DenoiserParams& params,
                                 const denoiser::LoraAdapter* adapter,
                                 const trainer::OptState* opt, long long step,
                                 std::uint64_t config_hash) {
  Checkpoint ck;
  denoiser::for_each_tensor(params,
                            [&](const std::string& name, const denoiser::Matrix& m) {
                              ck[name] = blob_from_matrix(m);
                            });
  if (adapter != nullptr)
    for (const auto& [name, pair] : adapter->pairs) {
      ck["lora." + name.substr(5) + ".a"] = blob_from_matrix(pair.down);
      ck["lora." + name.substr(5) + ".b"] = blob_from_matrix(pair.up);
    }
  if (opt != nullptr) {
    for (const auto& [name, m] : opt->m) ck["opt.m." + name] = blob_from_matrix(m);
    for (const auto& [name, m] : opt->v) ck["opt.v." + name] = blob_from_matrix(m);
  }
  TensorBlob step_blob;
  step_blob.dims = {1};
  step_blob.data = {static_cast<double>(step)};
  ck["meta.step"] = std::move(step_blob);
  TensorBlob hash_blob;
  hash_blob.dims = {2};
  hash_blob.data = {static_cast<double>(config_hash & 0xffffffffULL),
                    static_cast<double>(config_hash >> 32)};
  ck["meta.config_hash"] = std::move(hash_blob);
  return ck;
}

LoadedState state_from_checkpoint(const Checkpoint& ck,
                                  const denoiser::ArchConfig& arch,
                                  int lora_rank, double lora_scale) {
  LoadedState st;
  st.params = denoiser::init_params(arch, 0);
  denoiser::for_each_tensor(st.params, [&](const std::string& name,
                                           denoiser::Matrix& m) {
    auto it = ck.find(name);
    if (it == ck.end()) throw FileError("checkpoint missing tensor '" + name + "'");
    denoiser::Matrix loaded = matrix_from_blob(name, it->second);
    if (!loaded.same_shape(m))
      throw FileError("checkpoint tensor '" + name + "' has shape " +
                      std::to_string(loaded.rows) + "x" + std::to_string(loaded.cols) +
                      ", config expects " + std::to_string(m.rows) + "x" +
                      std::to_string(m.cols));
    m = std::move(loaded);
  });

  bool has_adapter = false;
  for (const auto& [name, blob] : ck)
    if (name.rfind("lora.", 0) == 0) has_adapter = true;
  if (has_adapter) {
    denoiser::LoraAdapter ad = denoiser::make_adapter(st.params, lora_rank,
                                                      lora_scale, 0);
    for (auto& [name, pair] : ad.pairs) {
      const std::string key = "lora." + name.substr(5);
      auto ita = ck.find(key + ".a");
      auto itb = ck.find(key + ".b");
      if (ita == ck.end() || itb == ck.end())
        throw FileError("checkpoint missing adapter tensors for '" + name + "'");
      denoiser::Matrix a = matrix_from_blob(key + ".a", ita->second);
      denoiser::Matrix b = matrix_from_blob(key + ".b", itb->second);
      if (!a.same_shape(pair.down) || !b.same_shape(pair.up))
        throw FileError("checkpoint adapter tensor shape mismatch on '" + name + "'");
      pair.down = std::move(a);
      pair.up = std::move(b);
    }
    st.adapter = std::move(ad);
  }

  for (const auto& [name, blob] : ck) {
    if (name.rfind("opt.m.", 0) == 0)
      st.opt.m[name.substr(6)] = matrix_from_blob(name, blob);
    else if (name.rfind("opt.v.", 0) == 0)
      st.opt.v[name.substr(6)] = matrix_from_blob(name, blob);
  }

  if (auto it = ck.find("meta.step"); it != ck.end() && !it->second.data.empty()) {
    st.step = static_cast<long long>(it->second.data[0]);
    st.opt.step = st.step;
  }
  if (auto it = ck.find("meta.config_hash");
      it != ck.end() && it->second.data.size() == 2)
    st.config_hash = static_cast<std::uint64_t>(it->second.data[0]) |
                     (static_cast<std::uint64_t>(it->second.data[1]) << 32);
  return st;
}

// --- mask container ---

void save_mask(const std::string& path, const MaskSequence& masks,
               std::uint64_t config_hash) {
  Writer w;
  w.bytes("MVMK", 4);
  w.u32(kFormatVersion);
  w.u16(static_cast<std::uint16_t>(masks.frames));
  w.u16(static_cast<std::uint16_t>(masks.height));
  w.u16(static_cast<std::uint16_t>(masks.width));
  w.u64(config_hash);
  w.bytes(masks.data.data(), masks.data.size());
  write_atomic(path, w.buf);
}

MaskSequence load_mask(const std::string& path) {
  const std::vector<std::uint8_t> buf = read_all(path);
  Reader r(buf, "mask '" + path + "'");
  check_magic(r, "MVMK");
  if (r.u32("version") != kFormatVersion)
    throw FileError(r.what + ": unsupported version");
  const int frames = r.u16("frames");
  const int h = r.u16("height");
  const int wd = r.u16("width");
  r.u64("config hash");
  MaskSequence m(frames, h, wd);
  r.need(m.data.size(), "mask payload");
  for (std::uint8_t& v : m.data) {
    v = r.u8("mask payload");
    if (v > 1) throw FileError(r.what + ": non-binary mask byte");
  }
  if (r.off != buf.size()) throw FileError(r.what + ": trailing bytes");
  return m;
}

// --- video container ---

void save_video(const std::string& path, const VideoTensor& video,
                std::uint64_t config_hash) {
  Writer w;
  w.bytes("MVVD", 4);
  w.u32(kFormatVersion);
  w.u16(static_cast<std::uint16_t>(video.frames));
  w.u16(static_cast<std::uint16_t>(video.height));
  w.u16(static_cast<std::uint16_t>(video.width));
  w.u64(config_hash);
  for (float v : video.data) w.f32(v);
  write_atomic(path, w.buf);
}

VideoTensor load_video(const std::string& path) {
  const std::vector<std::uint8_t> buf = read_all(path);
  Reader r(buf, "video '" + path + "'");
  check_magic(r, "MVVD");
  if (r.u32("version") != kFormatVersion)
    throw FileError(r.what + ": unsupported version");
  const int frames = r.u16("frames");
  const int h = r.u16("height");
  const int wd = r.u16("width");
  r.u64("config hash");
  VideoTensor v(frames, h, wd);
  r.need(v.data.size() * 4, "video payload");
  for (float& x : v.data) x = r.f32("video payload");
  if (r.off != buf.size()) throw FileError(r.what + ": trailing bytes");
  return v;
}

// --- metrics report ---

std::string format_miou_report(const maskeval::MiouResult& result,
                               std::uint64_t config_hash) {
  const int videos = static_cast<int>(result.per_video.size());
  const int frames =
      videos > 0 ? static_cast<int>(result.records.size()) / videos : 0;
  std::string out = "# maskvid-miou\tconfig_hash=" +
                    std::string(16 - 0, '0');  // placeholder replaced below
  char head[128];
  std::snprintf(head, sizeof(head), "# maskvid-miou\tconfig_hash=%016llx\tvideos=%d\tframes=%d\n",
                static_cast<unsigned long long>(config_hash), videos, frames);
  out = head;
  char line[64];
  for (const auto& rec : result.records) {
    std::snprintf(line, sizeof(line), "%d\t%d\t%.6f\n", rec.video, rec.frame, rec.iou);
    out += line;
  }
  std::snprintf(line, sizeof(line), "S_m=%.6f\n", result.s_m);
  out += line;
  return out;
}

void save_text(const std::string& path, const std::string& text) {
  std::vector<std::uint8_t> buf(text.begin(), text.end());
  write_atomic(path, buf);
}

std::string load_text(const std::string& path) {
  const std::vector<std::uint8_t> buf = read_all(path);
  return std::string(buf.begin(), buf.end());
}

double reaggregate_report(const std::string& report_text) {
  std::size_t pos = 0;
  double sum = 0.0;
  long long count = 0;
  while (pos < report_text.size()) {
    std::size_t end = report_text.find('\n', pos);
    if (end == std::string::npos) end = report_text.size();
    const std::string line = report_text.substr(pos, end - pos);
    pos = end + 1;
    if (line.empty() || line[0] == '#' || line.rfind("S_m=", 0) == 0) continue;
    int video, frame;
    double iou;
    if (std::sscanf(line.c_str(), "%d\t%d\t%lf", &video, &frame, &iou) != 3)
      throw FileError("report: malformed body line '" + line + "'");
    sum += iou;
    ++count;
  }
  if (count == 0) throw FileError("report: no body lines");
  return sum / static_cast<double>(count);
}

// --- GIF export ---

namespace {

class GifBitPacker {
 public:
  explicit GifBitPacker(Writer& w) : w_(w) {}

  void put(std::uint32_t code, int bits) {
    acc_ |= static_cast<std::uint64_t>(code) << nbits_;
    nbits_ += bits;
    while (nbits_ >= 8) {
      block_.push_back(acc_ & 0xff);
      acc_ >>= 8;
      nbits_ -= 8;
      if (block_.size() == 255) flush_block();
    }
  }

  void finish() {
    if (nbits_ > 0) {
      block_.push_back(acc_ & 0xff);
      acc_ = 0;
      nbits_ = 0;
      if (block_.size() == 255) flush_block();
    }
    if (!block_.empty()) flush_block();
    w_.u8(0);  // block terminator
  }

 private:
  void flush_block() {
    w_.u8(static_cast<std::uint8_t>(block_.size()));
    w_.bytes(block_.data(), block_.size());
    block_.clear();
  }

  Writer& w_;
  std::uint64_t acc_ = 0;
  int nbits_ = 0;
  std::vector<std::uint8_t> block_;
};

void lzw_encode(Writer& w, const std::vector<std::uint8_t>& indices) {
  constexpr int kMinCodeSize = 8;
  constexpr std::uint32_t kClear = 1 << kMinCodeSize;       // 256
  constexpr std::uint32_t kEoi = kClear + 1;                // 257
  w.u8(kMinCodeSize);
  GifBitPacker packer(w);

  std::unordered_map<std::uint32_t, std::uint32_t> dict;
  std::uint32_t next_code = kEoi + 1;
  int code_size = kMinCodeSize + 1;
  packer.put(kClear, code_size);

  std::uint32_t prefix = indices.empty() ? 0 : indices[0];
  for (std::size_t i = 1; i < indices.size(); ++i) {
    const std::uint32_t sym = indices[i];
    const std::uint32_t key = (prefix << 8) | sym;
    auto it = dict.find(key);
    if (it != dict.end()) {
      prefix = it->second;
      continue;
    }
    packer.put(prefix, code_size);
    dict.emplace(key, next_code);
    if (next_code == (1u << code_size) && code_size < 12) ++code_size;
    ++next_code;
    if (next_code > 4095) {
      packer.put(kClear, code_size);
      dict.clear();
      next_code = kEoi + 1;
      code_size = kMinCodeSize + 1;
    }
    prefix = sym;
  }
  if (!indices.empty()) packer.put(prefix, code_size);
  packer.put(kEoi, code_size);
  packer.finish();
}

std::uint8_t quantize6(float v) {
  int q = static_cast<int>(v * 5.0f + 0.5f);
  if (q < 0) q = 0;
  if (q > 5) q = 5;
  return static_cast<std::uint8_t>(q);
}

}  // namespace

void write_gif(const std::string& path, const VideoTensor& video, int scale,
               int delay_cs) {
  if (scale < 1) throw FileError("write_gif: scale must be >= 1");
  const int gw = video.width * scale, gh = video.height * scale;
  if (gw > 0xffff || gh > 0xffff) throw FileError("write_gif: frame too large");

  Writer w;
  w.bytes("GIF89a", 6);
  w.u16(static_cast<std::uint16_t>(gw));
  w.u16(static_cast<std::uint16_t>(gh));
  w.u8(0xF7);  // global color table, 256 entries
  w.u8(0);     // background color index
  w.u8(0);     // aspect
  // 6x6x6 color cube + grayscale padding to 256
  for (int r = 0; r < 6; ++r)
    for (int g = 0; g < 6; ++g)
      for (int b = 0; b < 6; ++b) {
        w.u8(static_cast<std::uint8_t>(r * 51));
        w.u8(static_cast<std::uint8_t>(g * 51));
        w.u8(static_cast<std::uint8_t>(b * 51));
      }
  for (int i = 216; i < 256; ++i) {
    const std::uint8_t v = static_cast<std::uint8_t>((i - 216) * 255 / 39);
    w.u8(v);
    w.u8(v);
    w.u8(v);
  }
  // Netscape looping extension
  w.u8(0x21);
  w.u8(0xFF);
  w.u8(0x0B);
  w.bytes("NETSCAPE2.0", 11);
  w.u8(0x03);
  w.u8(0x01);
  w.u16(0);  // loop forever
  w.u8(0x00);

  std::vector<std::uint8_t> indices(static_cast<std::size_t>(gw) * gh);
  for (int t = 0; t < video.frames; ++t) {
    // graphic control
    w.u8(0x21);
    w.u8(0xF9);
    w.u8(0x04);
    w.u8(0x04);  // disposal: do not dispose
    w.u16(static_cast<std::uint16_t>(delay_cs));
    w.u8(0);
    w.u8(0);
    // image descriptor
    w.u8(0x2C);
    w.u16(0);
    w.u16(0);
    w.u16(static_cast<std::uint16_t>(gw));
    w.u16(static_cast<std::uint16_t>(gh));
    w.u8(0);
    for (int y = 0; y < gh; ++y)
      for (int x = 0; x < gw; ++x) {
        const int sy = y / scale, sx = x / scale;
        const std::uint8_t qr = quantize6(video.at(t, sy, sx, 0));
        const std::uint8_t qg = quantize6(video.at(t, sy, sx, 1));
        const std::uint8_t qb = quantize6(video.at(t, sy, sx, 2));
        indices[static_cast<std::size_t>(y) * gw + x] =
            static_cast<std::uint8_t>(qr * 36 + qg * 6 + qb);
      }
    lzw_encode(w, indices);
  }
  w.u8(0x3B);  // trailer
  write_atomic(path, w.buf);
}

}  // namespace maskvid::io
