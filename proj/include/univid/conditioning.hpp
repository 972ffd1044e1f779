#pragma once

#include <map>
#include <string>
#include <vector>

#include "univid/layers.hpp"

namespace univid {

// Text and image conditions for one batch. A stream is active when it is
// present and its weight is non-zero; an inactive stream contributes an exact
// zero rather than attention over an empty sequence.
struct ConditionBundle {
  ag::Var text;   // E_t [B, N_t, d_c] or undefined
  ag::Var image;  // E_v [B, N_v, d_c] or undefined
  float lambda_t = 0.0f;
  float lambda_v = 0.0f;

  bool text_active() const { return lambda_t != 0.0f && text.defined() && text.dim(1) > 0; }
  bool image_active() const { return lambda_v != 0.0f && image.defined() && image.dim(1) > 0; }
  // Negative weights, weights on missing streams and width mismatches are errors.
  void validate() const;
};

// Default guidance weights per generation mode.
enum class GenerationMode { kT2V, kI2V, kTI2V };
GenerationMode parse_mode(const std::string& name);
std::string mode_name(GenerationMode m);
std::pair<float, float> default_lambdas(GenerationMode m);

// Caption vocabulary; token id = line index.
class Vocabulary {
 public:
  Vocabulary() = default;
  explicit Vocabulary(std::vector<std::string> tokens);
  // Words used by the synthetic caption grammar, padded to 32 entries.
  static Vocabulary synthetic();
  static Vocabulary load(const std::string& path);
  void save(const std::string& path) const;

  int64_t size() const { return static_cast<int64_t>(tokens_.size()); }
  const std::vector<std::string>& tokens() const { return tokens_; }
  int64_t id(const std::string& token) const;
  std::vector<int64_t> encode(const std::vector<std::string>& caption) const;
  // Splits on whitespace, then encode().
  std::vector<int64_t> encode(const std::string& caption) const;

 private:
  std::vector<std::string> tokens_;
  std::map<std::string, int64_t> ids_;
};

std::vector<std::string> split_words(const std::string& text);

// Token embedding lookup plus learned positions.
struct TextEncoder {
  ag::Var table;  // [V, d_c]
  ag::Var pos;    // [max_len, d_c]

  static TextEncoder create(ParameterStore& store, const std::string& prefix, int64_t vocab, int64_t max_len,
                            int64_t width, Rng& rng);
  // One caption -> [N_t, d_c].
  ag::Var encode(std::span<const int64_t> ids) const;
  // Equal-length captions -> [B, N_t, d_c].
  ag::Var encode_batch(const std::vector<std::vector<int64_t>>& captions) const;
};

// Non-overlapping patches, linear projection, learned positions.
struct ImageEncoder {
  ag::Var proj_w;  // [C*p*p, d_c]
  ag::Var proj_b;  // [d_c]
  ag::Var pos;     // [N_v, d_c]
  int64_t patch = 8;

  static ImageEncoder create(ParameterStore& store, const std::string& prefix, int64_t channels, int64_t height,
                             int64_t width, int64_t patch, int64_t cond_width, Rng& rng);
  // [C, H, W] -> [N_v, d_c]
  ag::Var encode(const Tensor& image) const;
  // [B, C, H, W] -> [B, N_v, d_c]
  ag::Var encode_batch(const Tensor& images) const;
};

// One cross-attention stream: keys and values come from condition tokens.
struct StreamParams {
  ag::Var wk, wv;  // [d_c, width]
  ag::Var wo, bo;  // [width, width], [width]
};

struct DualCrossAttentionParams {
  NormParams norm;
  ag::Var wq;  // [width, width], shared by both streams
  StreamParams text, image;
  int heads = 1;
};

// zero_image_out starts the image stream's output projection at zero.
DualCrossAttentionParams make_dual_cross_attention(ParameterStore& store, const std::string& prefix, int64_t width,
                                                   int64_t cond_width, int heads, bool zero_image_out, Rng& rng,
                                                   bool with_norm = true);

// The fused update lambda_t * A_text + lambda_v * A_image for every frame of
// z [B, F, C, H, W], before the residual add. Streams are evaluated
// independently and combined last, so the result is exactly bilinear in the
// weights.
ag::Var dual_cross_attention_update(const ag::Var& z, const ConditionBundle& cond, const DualCrossAttentionParams& p);
// z + update.
ag::Var dual_cross_attention(const ag::Var& z, const ConditionBundle& cond, const DualCrossAttentionParams& p);

// Self-attention over the frame axis at every (b, h, w) location. `pos` is a
// [F, C] frame-position table added to the normalised input, or undefined.
ag::Var temporal_attention(const ag::Var& z, const AttentionParams& p, const Tensor& pos, bool residual = true);

// Fixed sinusoidal frame-position embedding [F, width].
Tensor frame_position_embedding(int64_t frames, int64_t width);

}  // namespace univid
