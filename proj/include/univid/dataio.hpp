#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "univid/conditioning.hpp"
#include "univid/params.hpp"
#include "univid/rng.hpp"
#include "univid/tensor.hpp"

namespace univid {

namespace fs = std::filesystem;

// Tensor file: "UVTF" | u8 version=1 | u8 dtype=1 (f32) | u8 ndim | u8 pad=0 |
// ndim x u32 LE dims | row-major f32 LE payload.
inline constexpr int kMaxTensorRank = 8;
std::vector<uint8_t> encode_tensor(const Tensor& t);
// `context` names the source in error messages.
Tensor decode_tensor(std::span<const uint8_t> bytes, const std::string& context = "tensor");
void write_tensor(const fs::path& path, const Tensor& t);
Tensor read_tensor(const fs::path& path);

std::vector<uint8_t> read_file(const fs::path& path);
void write_file(const fs::path& path, std::span<const uint8_t> bytes);
void write_text(const fs::path& path, const std::string& text);
std::string read_text(const fs::path& path);

// Checkpoint directory: manifest.txt plus one tensor file per parameter.
struct Checkpoint {
  ParameterStore store;
  std::string config_hash;
  std::map<std::string, std::string> extras;
};
void save_checkpoint(const fs::path& dir, const ParameterStore& store, const std::string& config_hash,
                     const std::map<std::string, std::string>& extras = {});
Checkpoint load_checkpoint(const fs::path& dir);

// Lossless latent codecs over [..., C, H, W].
enum class CodecKind { kIdentity, kPatchify2 };
CodecKind parse_codec(const std::string& name);
std::string codec_name(CodecKind k);
Shape latent_shape(const Shape& pixel, CodecKind k);
// patchify2 moves each 2x2 block into channels: c' = 4c + 2dy + dx.
Tensor codec_encode(const Tensor& x, CodecKind k);
Tensor codec_decode(const Tensor& z, CodecKind k);
// [0, 1] <-> [-1, 1].
Tensor to_signed(const Tensor& x);
Tensor to_unit(const Tensor& x);
Tensor clamp(const Tensor& x, float lo, float hi);

// Synthetic moving-shape clips.
enum class ShapeKind { kCircle, kSquare, kTriangle };
enum class Motion { kLeft, kRight, kUp, kDown, kDiagonal };
enum class Speed { kSlow, kFast };

struct ClipSpec {
  ShapeKind shape = ShapeKind::kCircle;
  std::string color = "red";
  Motion motion = Motion::kRight;
  Speed speed = Speed::kSlow;
  int frames = 8;
  int height = 32;
  int width = 32;
};

struct Clip {
  Tensor video;      // [F, 3, H, W] in [0, 1]
  std::vector<std::string> caption;
  Tensor reference;  // frame 0, [3, H, W]
};

const std::vector<std::string>& color_names();
std::array<float, 3> color_rgb(const std::string& name);
std::string shape_word(ShapeKind s);
std::string motion_word(Motion m);
std::string speed_word(Speed s);
ShapeKind parse_shape(const std::string& w);
Motion parse_motion(const std::string& w);
Speed parse_speed(const std::string& w);
int pixels_per_frame(Speed s);
std::vector<std::string> caption_for(const ClipSpec& spec);

// Object placement as rasterised into frame f: centre and half-extent in pixels.
struct Placement {
  int cx = 0;
  int cy = 0;
  int radius = 0;
};
std::vector<Placement> plan_motion(const ClipSpec& spec, uint64_t seed);
bool shape_covers(ShapeKind s, const Placement& p, int x, int y);
// Raises RangeError when the object cannot stay inside the frame.
Clip gen_clip(const ClipSpec& spec, uint64_t seed);
ClipSpec random_clip_spec(Rng& rng, int frames, int height, int width);

// Dataset directory: manifest.csv, clip-<id>.uvt, caption-<id>.txt, vocab.txt.
struct DatasetEntry {
  int id = 0;
  ClipSpec spec;
  uint64_t seed = 0;
  std::string caption;
};
std::vector<DatasetEntry> plan_dataset(int clips, int frames, int height, int width, uint64_t seed);
void write_dataset(const fs::path& dir, const std::vector<DatasetEntry>& entries);

class Dataset {
 public:
  static Dataset open(const fs::path& dir);
  const std::vector<DatasetEntry>& entries() const { return entries_; }
  const Vocabulary& vocab() const { return vocab_; }
  size_t size() const { return entries_.size(); }
  Tensor clip(size_t i) const;  // [F, 3, H, W]
  std::vector<std::string> caption(size_t i) const;
  const fs::path& dir() const { return dir_; }

 private:
  fs::path dir_;
  std::vector<DatasetEntry> entries_;
  Vocabulary vocab_;
};

// P6 grid with frames tiled left to right, 8-bit round(255 clamp(x, 0, 1)).
std::vector<uint8_t> encode_ppm_grid(const Tensor& video);
// Inverse of the grid: returns [frames, 3, H, W] with values k / 255.
Tensor decode_ppm_grid(std::span<const uint8_t> bytes, int frames);
void write_ppm_grid(const fs::path& path, const Tensor& video);
Tensor read_ppm_grid(const fs::path& path, int frames);

}  // namespace univid
