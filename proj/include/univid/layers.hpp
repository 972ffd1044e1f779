#pragma once

#include <string>

#include "univid/autograd.hpp"
#include "univid/params.hpp"
#include "univid/rng.hpp"

// Building blocks shared by the pyramid, conditioning and U-Net modules.
namespace univid {

// Largest divisor of `channels` that is <= 8.
int norm_groups(int64_t channels);

struct NormParams {
  ag::Var gamma, beta;
  int groups = 1;

  bool enabled() const { return gamma.defined(); }
  // Per-frame group norm of x [N, C, ...]; identity when disabled.
  ag::Var apply(const ag::Var& x) const;
};

NormParams make_norm(ParameterStore& store, const std::string& prefix, ParamGroup group, int64_t channels);

// Multi-head attention projections. wq/wk/wv map to `heads` heads of equal
// width; wo/bo map the concatenated heads back to the model width.
struct AttentionParams {
  NormParams norm;
  ag::Var wq, wk, wv, wo, bo;
  int heads = 1;

  int64_t model_width() const { return wq.dim(0); }
  int64_t context_width() const { return wk.dim(0); }
};

// wq [width, width], wk/wv [context, width], wo [width, width]. When zero_out is
// set the output projection starts at zero and the branch contributes nothing.
AttentionParams make_attention(ParameterStore& store, const std::string& prefix, ParamGroup group, int64_t width,
                               int64_t context, int heads, bool zero_out, Rng& rng, bool with_norm = true);

// Softmax(Q K^T / sqrt(d)) V followed by the output projection, for query
// tokens [B, Lq, width] and key/value tokens [B, Lk, context].
ag::Var attend(const ag::Var& query_tokens, const ag::Var& kv_tokens, const AttentionParams& p);

// [B, F, C, H, W] <-> [B, F*H*W, C]
ag::Var video_to_tokens(const ag::Var& x);
ag::Var tokens_to_video(const ag::Var& t, const Shape& video_shape);
// [B, F, C, H, W] <-> [B*F, H*W, C]
ag::Var frames_to_tokens(const ag::Var& x);
ag::Var tokens_to_frames(const ag::Var& t, const Shape& video_shape);
// [B, F, C, H, W] <-> [B*H*W, F, C]
ag::Var video_to_time_tokens(const ag::Var& x);
ag::Var time_tokens_to_video(const ag::Var& t, const Shape& video_shape);

// Fixed sinusoidal table [positions, dim]: first half sines, second half cosines.
Tensor sinusoidal_embedding(std::span<const float> positions, int64_t dim);

// Fixed 2D table [channels, height, width]. The first half of the channels
// code the row, the second half the column, as sine/cosine pairs whose
// slowest period is twice the larger side. Leftover channels stay zero.
Tensor spatial_position_embedding(int64_t channels, int64_t height, int64_t width);

// Fan-in scaled normal initialisation.
Tensor init_normal(const Shape& shape, int64_t fan_in, Rng& rng, float gain = 1.0f);

}  // namespace univid
