#include "univid/dataio.hpp"

#include <algorithm>
#include <bit>
#include <cctype>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include "univid/error.hpp"

namespace univid {
namespace {

constexpr uint8_t kMagic[4] = {'U', 'V', 'T', 'F'};
constexpr uint8_t kVersion = 1;
constexpr uint8_t kDtypeF32 = 1;

void put_u32(std::vector<uint8_t>& out, uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<uint8_t>(v >> (8 * i)));
}

uint32_t get_u32(const uint8_t* p) {
  return static_cast<uint32_t>(p[0]) | (static_cast<uint32_t>(p[1]) << 8) | (static_cast<uint32_t>(p[2]) << 16) |
         (static_cast<uint32_t>(p[3]) << 24);
}

std::string join_shape(const Shape& s) {
  std::string out;
  for (size_t i = 0; i < s.size(); ++i) out += (i ? "x" : "") + std::to_string(s[i]);
  return out;
}

Shape parse_shape_text(const std::string& text, const std::string& context) {
  Shape s;
  std::stringstream ss(text);
  for (std::string part; std::getline(ss, part, 'x');) {
    try {
      size_t used = 0;
      const long long v = std::stoll(part, &used);
      if (used != part.size() || v < 0) throw std::invalid_argument(part);
      s.push_back(v);
    } catch (const std::exception&) {
      throw FormatError(context + ": bad shape '" + text + "'");
    }
  }
  if (s.empty()) throw FormatError(context + ": empty shape");
  return s;
}

std::string trim(std::string s) {
  while (!s.empty() && (s.back() == '\r' || s.back() == ' ' || s.back() == '\n')) s.pop_back();
  size_t i = 0;
  while (i < s.size() && s[i] == ' ') ++i;
  return s.substr(i);
}

}  // namespace

std::vector<uint8_t> encode_tensor(const Tensor& t) {
  if (t.rank() < 1 || t.rank() > kMaxTensorRank) {
    throw ShapeError("tensor rank " + std::to_string(t.rank()) + " not in [1, " + std::to_string(kMaxTensorRank) + "]");
  }
  std::vector<uint8_t> out(kMagic, kMagic + 4);
  out.push_back(kVersion);
  out.push_back(kDtypeF32);
  out.push_back(static_cast<uint8_t>(t.rank()));
  out.push_back(0);
  for (int64_t d : t.shape()) {
    if (d > UINT32_MAX) throw ShapeError("tensor dimension too large for the file format");
    put_u32(out, static_cast<uint32_t>(d));
  }
  out.reserve(out.size() + 4 * static_cast<size_t>(t.numel()));
  for (float v : t.values()) put_u32(out, std::bit_cast<uint32_t>(v));
  return out;
}

Tensor decode_tensor(std::span<const uint8_t> bytes, const std::string& context) {
  if (bytes.size() < 8) throw FormatError(context + ": truncated header");
  if (std::memcmp(bytes.data(), kMagic, 4) != 0) throw FormatError(context + ": bad magic");
  if (bytes[4] != kVersion) throw FormatError(context + ": unsupported version " + std::to_string(bytes[4]));
  if (bytes[5] != kDtypeF32) throw FormatError(context + ": unsupported dtype " + std::to_string(bytes[5]));
  const int ndim = bytes[6];
  if (ndim < 1 || ndim > kMaxTensorRank) throw FormatError(context + ": bad rank " + std::to_string(ndim));
  if (bytes[7] != 0) throw FormatError(context + ": non-zero pad byte");
  const size_t header = 8 + 4 * static_cast<size_t>(ndim);
  if (bytes.size() < header) throw FormatError(context + ": truncated dimensions");
  Shape shape;
  for (int i = 0; i < ndim; ++i) shape.push_back(get_u32(bytes.data() + 8 + 4 * i));
  const int64_t n = numel_of(shape);
  if (bytes.size() != header + 4 * static_cast<size_t>(n)) {
    throw FormatError(context + ": payload has " + std::to_string(bytes.size() - header) + " bytes, expected " +
                      std::to_string(4 * n));
  }
  std::vector<float> values(static_cast<size_t>(n));
  for (int64_t i = 0; i < n; ++i) values[static_cast<size_t>(i)] = std::bit_cast<float>(get_u32(bytes.data() + header + 4 * i));
  return Tensor(std::move(shape), std::move(values));
}

std::vector<uint8_t> read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return bytes;
}

void write_file(const fs::path& path, std::span<const uint8_t> bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("failed writing " + path.string());
}

void write_text(const fs::path& path, const std::string& text) {
  write_file(path, std::span(reinterpret_cast<const uint8_t*>(text.data()), text.size()));
}

std::string read_text(const fs::path& path) {
  const auto bytes = read_file(path);
  return std::string(bytes.begin(), bytes.end());
}

void write_tensor(const fs::path& path, const Tensor& t) { write_file(path, encode_tensor(t)); }

Tensor read_tensor(const fs::path& path) { return decode_tensor(read_file(path), path.string()); }

void save_checkpoint(const fs::path& dir, const ParameterStore& store, const std::string& config_hash,
                     const std::map<std::string, std::string>& extras) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create checkpoint directory " + dir.string() + ": " + ec.message());
  std::ostringstream m;
  m << "univid-checkpoint 1\n";
  m << "config_hash " << config_hash << '\n';
  for (const auto& [k, v] : extras) {
    if (k.find_first_of(" \n") != std::string::npos || v.find('\n') != std::string::npos) {
      throw FormatError("checkpoint extra '" + k + "' cannot be stored on one line");
    }
    m << "extra " << k << ' ' << v << '\n';
  }
  for (const auto& p : store.params()) {
    const std::string file = p.name + ".uvt";
    write_tensor(dir / file, p.var.value());
    m << "param " << p.name << ' ' << group_name(p.group) << ' ' << join_shape(p.var.shape()) << ' ' << file << '\n';
  }
  write_text(dir / "manifest.txt", m.str());
}

Checkpoint load_checkpoint(const fs::path& dir) {
  const fs::path manifest = dir / "manifest.txt";
  if (!fs::exists(manifest)) throw IoError("checkpoint " + dir.string() + " has no manifest.txt");
  std::istringstream in(read_text(manifest));
  Checkpoint ck;
  std::string line;
  if (!std::getline(in, line) || trim(line) != "univid-checkpoint 1") {
    throw FormatError(manifest.string() + ": not a checkpoint manifest");
  }
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    line = trim(line);
    if (line.empty()) continue;
    const std::string where = manifest.string() + ":" + std::to_string(lineno);
    std::istringstream ls(line);
    std::string kind;
    ls >> kind;
    if (kind == "config_hash") {
      ls >> ck.config_hash;
    } else if (kind == "extra") {
      std::string key, value;
      ls >> key;
      std::getline(ls, value);
      ck.extras[key] = trim(value);
    } else if (kind == "param") {
      std::string name, group, shape, file;
      if (!(ls >> name >> group >> shape >> file)) throw FormatError(where + ": incomplete param line");
      const ParamGroup g = parse_group(group);
      const Shape expected = parse_shape_text(shape, where);
      const fs::path path = dir / file;
      if (!fs::exists(path)) throw IoError("checkpoint is missing the file for parameter '" + name + "' (" + path.string() + ")");
      Tensor t = read_tensor(path);
      if (t.shape() != expected) {
        throw ShapeError("parameter '" + name + "': manifest shape " + shape_str(expected) + " but file holds " +
                         shape_str(t.shape()));
      }
      ck.store.add(name, g, std::move(t));
    } else {
      throw FormatError(where + ": unknown entry '" + kind + "'");
    }
  }
  return ck;
}

CodecKind parse_codec(const std::string& name) {
  if (name == "identity") return CodecKind::kIdentity;
  if (name == "patchify2") return CodecKind::kPatchify2;
  throw RangeError("unknown codec '" + name + "' (expected identity or patchify2)");
}

std::string codec_name(CodecKind k) { return k == CodecKind::kIdentity ? "identity" : "patchify2"; }

Shape latent_shape(const Shape& pixel, CodecKind k) {
  if (pixel.size() < 3) throw ShapeError("codec input must be [..., C, H, W], got " + shape_str(pixel));
  if (k == CodecKind::kIdentity) return pixel;
  const size_t r = pixel.size();
  if (pixel[r - 1] % 2 != 0 || pixel[r - 2] % 2 != 0) {
    throw DivisibilityError("patchify2 needs even H and W, got " + shape_str(pixel));
  }
  Shape out = pixel;
  out[r - 3] *= 4;
  out[r - 2] /= 2;
  out[r - 1] /= 2;
  return out;
}

Tensor codec_encode(const Tensor& x, CodecKind k) {
  const Shape ls = latent_shape(x.shape(), k);
  if (k == CodecKind::kIdentity) return x;
  const int64_t C = x.dim(-3), H = x.dim(-2), W = x.dim(-1), h = H / 2, w = W / 2;
  const int64_t lead = x.numel() / (C * H * W);
  Tensor z(ls);
  const float* src = x.data();
  float* dst = z.data();
  for (int64_t n = 0; n < lead; ++n)
    for (int64_t c = 0; c < C; ++c)
      for (int64_t dy = 0; dy < 2; ++dy)
        for (int64_t dx = 0; dx < 2; ++dx) {
          float* out = dst + ((n * C + c) * 4 + dy * 2 + dx) * h * w;
          const float* in = src + (n * C + c) * H * W;
          for (int64_t y = 0; y < h; ++y)
            for (int64_t xx = 0; xx < w; ++xx) out[y * w + xx] = in[(2 * y + dy) * W + 2 * xx + dx];
        }
  return z;
}

Tensor codec_decode(const Tensor& z, CodecKind k) {
  if (z.rank() < 3) throw ShapeError("codec input must be [..., C, H, W], got " + shape_str(z.shape()));
  if (k == CodecKind::kIdentity) return z;
  const int64_t C4 = z.dim(-3), h = z.dim(-2), w = z.dim(-1);
  if (C4 % 4 != 0) throw DivisibilityError("patchify2 latent channels must be a multiple of 4");
  const int64_t C = C4 / 4, H = 2 * h, W = 2 * w;
  Shape ps = z.shape();
  ps[ps.size() - 3] = C;
  ps[ps.size() - 2] = H;
  ps[ps.size() - 1] = W;
  const int64_t lead = z.numel() / (C4 * h * w);
  Tensor x(ps);
  for (int64_t n = 0; n < lead; ++n)
    for (int64_t c = 0; c < C; ++c)
      for (int64_t dy = 0; dy < 2; ++dy)
        for (int64_t dx = 0; dx < 2; ++dx) {
          const float* in = z.data() + ((n * C + c) * 4 + dy * 2 + dx) * h * w;
          float* out = x.data() + (n * C + c) * H * W;
          for (int64_t y = 0; y < h; ++y)
            for (int64_t xx = 0; xx < w; ++xx) out[(2 * y + dy) * W + 2 * xx + dx] = in[y * w + xx];
        }
  return x;
}

Tensor to_signed(const Tensor& x) {
  Tensor y(x.shape());
  for (int64_t i = 0; i < x.numel(); ++i) y[i] = 2.0f * x[i] - 1.0f;
  return y;
}

Tensor to_unit(const Tensor& x) {
  Tensor y(x.shape());
  for (int64_t i = 0; i < x.numel(); ++i) y[i] = 0.5f * (x[i] + 1.0f);
  return y;
}

Tensor clamp(const Tensor& x, float lo, float hi) {
  Tensor y(x.shape());
  for (int64_t i = 0; i < x.numel(); ++i) y[i] = std::isnan(x[i]) ? lo : std::clamp(x[i], lo, hi);
  return y;
}

const std::vector<std::string>& color_names() {
  static const std::vector<std::string> names = {"red", "green", "blue", "yellow", "cyan", "magenta", "white"};
  return names;
}

std::array<float, 3> color_rgb(const std::string& name) {
  static const std::map<std::string, std::array<float, 3>> table = {
      {"red", {1, 0, 0}},    {"green", {0, 1, 0}},   {"blue", {0, 0, 1}}, {"yellow", {1, 1, 0}},
      {"cyan", {0, 1, 1}},   {"magenta", {1, 0, 1}}, {"white", {1, 1, 1}}};
  auto it = table.find(name);
  if (it == table.end()) throw RangeError("unknown colour '" + name + "'");
  return it->second;
}

std::string shape_word(ShapeKind s) {
  switch (s) {
    case ShapeKind::kCircle:
      return "circle";
    case ShapeKind::kSquare:
      return "square";
    case ShapeKind::kTriangle:
      return "triangle";
  }
  return "?";
}

std::string motion_word(Motion m) {
  switch (m) {
    case Motion::kLeft:
      return "left";
    case Motion::kRight:
      return "right";
    case Motion::kUp:
      return "up";
    case Motion::kDown:
      return "down";
    case Motion::kDiagonal:
      return "diagonal";
  }
  return "?";
}

std::string speed_word(Speed s) { return s == Speed::kSlow ? "slow" : "fast"; }

ShapeKind parse_shape(const std::string& w) {
  for (auto s : {ShapeKind::kCircle, ShapeKind::kSquare, ShapeKind::kTriangle})
    if (shape_word(s) == w) return s;
  throw RangeError("unknown shape '" + w + "'");
}

Motion parse_motion(const std::string& w) {
  for (auto m : {Motion::kLeft, Motion::kRight, Motion::kUp, Motion::kDown, Motion::kDiagonal})
    if (motion_word(m) == w) return m;
  throw RangeError("unknown motion '" + w + "'");
}

Speed parse_speed(const std::string& w) {
  if (w == "slow") return Speed::kSlow;
  if (w == "fast") return Speed::kFast;
  throw RangeError("unknown speed '" + w + "'");
}

int pixels_per_frame(Speed s) { return s == Speed::kSlow ? 1 : 2; }

std::vector<std::string> caption_for(const ClipSpec& spec) {
  return {spec.color, shape_word(spec.shape), "moving", motion_word(spec.motion), speed_word(spec.speed)};
}

std::vector<Placement> plan_motion(const ClipSpec& spec, uint64_t seed) {
  if (spec.frames < 1 || spec.height < 1 || spec.width < 1) throw RangeError("clip sizes must be positive");
  int dx = 0, dy = 0;
  switch (spec.motion) {
    case Motion::kLeft:
      dx = -1;
      break;
    case Motion::kRight:
      dx = 1;
      break;
    case Motion::kUp:
      dy = -1;
      break;
    case Motion::kDown:
      dy = 1;
      break;
    case Motion::kDiagonal:
      dx = dy = 1;
      break;
  }
  const int v = pixels_per_frame(spec.speed);
  const int travel = v * (spec.frames - 1);
  const int side = std::min(spec.height, spec.width);
  const int r_lo = std::max(2, side / 8);
  const int r_hi = std::max(r_lo, side / 5);
  Rng rng(seed);
  const int r = static_cast<int>(rng.uniform_int(r_lo, r_hi));
  auto range = [&](int extent, int d) {
    const int lo = r + (d < 0 ? travel : 0);
    const int hi = extent - 1 - r - (d > 0 ? travel : 0);
    if (lo > hi) {
      throw RangeError("a radius-" + std::to_string(r) + " object moving " + std::to_string(travel) +
                       " px does not fit in " + std::to_string(spec.width) + "x" + std::to_string(spec.height));
    }
    return std::pair{lo, hi};
  };
  const auto [x_lo, x_hi] = range(spec.width, dx);
  const auto [y_lo, y_hi] = range(spec.height, dy);
  const int cx0 = static_cast<int>(rng.uniform_int(x_lo, x_hi));
  const int cy0 = static_cast<int>(rng.uniform_int(y_lo, y_hi));
  std::vector<Placement> out;
  for (int f = 0; f < spec.frames; ++f) out.push_back({cx0 + dx * v * f, cy0 + dy * v * f, r});
  return out;
}

bool shape_covers(ShapeKind s, const Placement& p, int x, int y) {
  const int ax = x - p.cx, ay = y - p.cy;
  switch (s) {
    case ShapeKind::kCircle:
      return ax * ax + ay * ay <= p.radius * p.radius;
    case ShapeKind::kSquare:
      return std::abs(ax) <= p.radius && std::abs(ay) <= p.radius;
    case ShapeKind::kTriangle:
      return ay >= -p.radius && ay <= p.radius && 2 * std::abs(ax) <= ay + p.radius;
  }
  return false;
}

Clip gen_clip(const ClipSpec& spec, uint64_t seed) {
  const auto rgb = color_rgb(spec.color);
  const auto plan = plan_motion(spec, seed);
  const int64_t F = spec.frames, H = spec.height, W = spec.width;
  Clip clip;
  clip.video = Tensor({F, 3, H, W});
  for (int64_t f = 0; f < F; ++f)
    for (int y = 0; y < H; ++y)
      for (int x = 0; x < W; ++x) {
        if (!shape_covers(spec.shape, plan[static_cast<size_t>(f)], x, y)) continue;
        for (int64_t c = 0; c < 3; ++c) clip.video.at({f, c, y, x}) = rgb[static_cast<size_t>(c)];
      }
  clip.caption = caption_for(spec);
  clip.reference = Tensor({3, H, W}, std::vector<float>(clip.video.data(), clip.video.data() + 3 * H * W));
  return clip;
}

ClipSpec random_clip_spec(Rng& rng, int frames, int height, int width) {
  ClipSpec s;
  s.shape = static_cast<ShapeKind>(rng.uniform_int(0, 2));
  s.color = color_names()[static_cast<size_t>(rng.uniform_int(0, static_cast<int64_t>(color_names().size()) - 1))];
  s.motion = static_cast<Motion>(rng.uniform_int(0, 4));
  s.speed = static_cast<Speed>(rng.uniform_int(0, 1));
  s.frames = frames;
  s.height = height;
  s.width = width;
  return s;
}

std::vector<DatasetEntry> plan_dataset(int clips, int frames, int height, int width, uint64_t seed) {
  if (clips < 1) throw RangeError("need at least one clip");
  Rng rng(seed);
  std::vector<DatasetEntry> out;
  for (int i = 0; i < clips; ++i) {
    DatasetEntry e;
    e.id = i;
    e.spec = random_clip_spec(rng, frames, height, width);
    e.seed = rng.next_u64();
    const auto words = caption_for(e.spec);
    for (size_t k = 0; k < words.size(); ++k) e.caption += (k ? " " : "") + words[k];
    out.push_back(std::move(e));
  }
  return out;
}

void write_dataset(const fs::path& dir, const std::vector<DatasetEntry>& entries) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create dataset directory " + dir.string() + ": " + ec.message());
  std::ostringstream m;
  m << "id,shape,color,motion,speed,frames,height,width,seed,caption\n";
  for (const auto& e : entries) {
    const Clip clip = gen_clip(e.spec, e.seed);
    write_tensor(dir / ("clip-" + std::to_string(e.id) + ".uvt"), clip.video);
    write_text(dir / ("caption-" + std::to_string(e.id) + ".txt"), e.caption + "\n");
    m << e.id << ',' << shape_word(e.spec.shape) << ',' << e.spec.color << ',' << motion_word(e.spec.motion) << ','
      << speed_word(e.spec.speed) << ',' << e.spec.frames << ',' << e.spec.height << ',' << e.spec.width << ','
      << e.seed << ',' << e.caption << '\n';
  }
  write_text(dir / "manifest.csv", m.str());
  Vocabulary::synthetic().save((dir / "vocab.txt").string());
}

Dataset Dataset::open(const fs::path& dir) {
  Dataset ds;
  ds.dir_ = dir;
  const fs::path manifest = dir / "manifest.csv";
  if (!fs::exists(manifest)) throw IoError("dataset " + dir.string() + " has no manifest.csv");
  std::istringstream in(read_text(manifest));
  std::string line;
  std::getline(in, line);
  if (trim(line) != "id,shape,color,motion,speed,frames,height,width,seed,caption") {
    throw FormatError(manifest.string() + ": unexpected header");
  }
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    line = trim(line);
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ss(line);
    for (std::string cell; std::getline(ss, cell, ',');) f.push_back(cell);
    if (f.size() != 10) throw FormatError(manifest.string() + ":" + std::to_string(lineno) + ": expected 10 fields");
    try {
      DatasetEntry e;
      e.id = std::stoi(f[0]);
      e.spec.shape = parse_shape(f[1]);
      e.spec.color = f[2];
      e.spec.motion = parse_motion(f[3]);
      e.spec.speed = parse_speed(f[4]);
      e.spec.frames = std::stoi(f[5]);
      e.spec.height = std::stoi(f[6]);
      e.spec.width = std::stoi(f[7]);
      e.seed = std::stoull(f[8]);
      e.caption = f[9];
      ds.entries_.push_back(std::move(e));
    } catch (const std::invalid_argument&) {
      throw FormatError(manifest.string() + ":" + std::to_string(lineno) + ": malformed number");
    }
  }
  if (ds.entries_.empty()) throw FormatError(manifest.string() + ": no clips");
  const fs::path vocab = dir / "vocab.txt";
  ds.vocab_ = fs::exists(vocab) ? Vocabulary::load(vocab.string()) : Vocabulary::synthetic();
  return ds;
}

Tensor Dataset::clip(size_t i) const {
  const auto& e = entries_.at(i);
  Tensor t = read_tensor(dir_ / ("clip-" + std::to_string(e.id) + ".uvt"));
  const Shape expected{e.spec.frames, 3, e.spec.height, e.spec.width};
  if (t.shape() != expected) {
    throw ShapeError("clip " + std::to_string(e.id) + " holds " + shape_str(t.shape()) + ", manifest says " +
                     shape_str(expected));
  }
  return t;
}

std::vector<std::string> Dataset::caption(size_t i) const {
  const auto& e = entries_.at(i);
  const fs::path p = dir_ / ("caption-" + std::to_string(e.id) + ".txt");
  return split_words(fs::exists(p) ? read_text(p) : e.caption);
}

std::vector<uint8_t> encode_ppm_grid(const Tensor& video) {
  if (video.rank() != 4 || video.dim(1) != 3) throw ShapeError("ppm grid needs [F, 3, H, W], got " + shape_str(video.shape()));
  const int64_t F = video.dim(0), H = video.dim(2), W = video.dim(3);
  const std::string header = "P6\n" + std::to_string(W * F) + " " + std::to_string(H) + "\n255\n";
  std::vector<uint8_t> out(header.begin(), header.end());
  out.reserve(out.size() + static_cast<size_t>(3 * F * H * W));
  for (int64_t y = 0; y < H; ++y)
    for (int64_t f = 0; f < F; ++f)
      for (int64_t x = 0; x < W; ++x)
        for (int64_t c = 0; c < 3; ++c) {
          const float v = video.at({f, c, y, x});
          const float q = std::isnan(v) ? 0.0f : std::clamp(v, 0.0f, 1.0f);
          out.push_back(static_cast<uint8_t>(std::lround(255.0f * q)));
        }
  return out;
}

Tensor decode_ppm_grid(std::span<const uint8_t> bytes, int frames) {
  size_t pos = 0;
  auto token = [&]() {
    while (pos < bytes.size() && std::isspace(bytes[pos])) ++pos;
    std::string t;
    while (pos < bytes.size() && !std::isspace(bytes[pos])) t.push_back(static_cast<char>(bytes[pos++]));
    if (t.empty()) throw FormatError("ppm: truncated header");
    return t;
  };
  if (token() != "P6") throw FormatError("ppm: not a P6 file");
  int64_t gw = 0, h = 0, maxval = 0;
  try {
    gw = std::stoll(token());
    h = std::stoll(token());
    maxval = std::stoll(token());
  } catch (const std::invalid_argument&) {
    throw FormatError("ppm: malformed header");
  }
  if (maxval != 255) throw FormatError("ppm: only maxval 255 is supported");
  ++pos;
  if (frames < 1 || gw % frames != 0) throw DivisibilityError("ppm: width " + std::to_string(gw) + " is not a multiple of " + std::to_string(frames) + " frames");
  const int64_t w = gw / frames;
  if (bytes.size() - pos != static_cast<size_t>(3 * gw * h)) throw FormatError("ppm: payload size mismatch");
  Tensor video({frames, 3, h, w});
  for (int64_t y = 0; y < h; ++y)
    for (int64_t f = 0; f < frames; ++f)
      for (int64_t x = 0; x < w; ++x)
        for (int64_t c = 0; c < 3; ++c) video.at({f, c, y, x}) = static_cast<float>(bytes[pos++]) / 255.0f;
  return video;
}

void write_ppm_grid(const fs::path& path, const Tensor& video) { write_file(path, encode_ppm_grid(video)); }

Tensor read_ppm_grid(const fs::path& path, int frames) { return decode_ppm_grid(read_file(path), frames); }

}  // namespace univid
