#include "univid/layers.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "univid/error.hpp"
#include "univid/ops.hpp"

namespace univid {

int norm_groups(int64_t channels) {
  for (int g = 8; g > 1; --g)
    if (channels % g == 0) return g;
  return 1;
}

ag::Var NormParams::apply(const ag::Var& x) const {
  if (!enabled()) return x;
  return ag::group_norm(x, groups, gamma, beta);
}

NormParams make_norm(ParameterStore& store, const std::string& prefix, ParamGroup group, int64_t channels) {
  NormParams n;
  n.groups = norm_groups(channels);
  n.gamma = store.add(prefix + ".gamma", group, Tensor({channels}, 1.0f));
  n.beta = store.add(prefix + ".beta", group, Tensor({channels}, 0.0f));
  return n;
}

Tensor init_normal(const Shape& shape, int64_t fan_in, Rng& rng, float gain) {
  Tensor t(shape);
  rng.fill_normal(t, gain / std::sqrt(static_cast<float>(std::max<int64_t>(1, fan_in))));
  return t;
}

AttentionParams make_attention(ParameterStore& store, const std::string& prefix, ParamGroup group, int64_t width,
                               int64_t context, int heads, bool zero_out, Rng& rng, bool with_norm) {
  if (heads < 1 || width % heads != 0) {
    throw ShapeError(prefix + ": width " + std::to_string(width) + " not divisible by " + std::to_string(heads) +
                     " heads");
  }
  AttentionParams p;
  p.heads = heads;
  if (with_norm) p.norm = make_norm(store, prefix + ".norm", group, width);
  p.wq = store.add(prefix + ".wq", group, init_normal({width, width}, width, rng));
  p.wk = store.add(prefix + ".wk", group, init_normal({context, width}, context, rng));
  p.wv = store.add(prefix + ".wv", group, init_normal({context, width}, context, rng));
  p.wo = store.add(prefix + ".wo", group, zero_out ? Tensor({width, width}) : init_normal({width, width}, width, rng));
  p.bo = store.add(prefix + ".bo", group, Tensor({width}));
  return p;
}

ag::Var attend(const ag::Var& query_tokens, const ag::Var& kv_tokens, const AttentionParams& p) {
  const ag::Var none;
  ag::Var q = ag::linear(query_tokens, p.wq, none);
  ag::Var k = ag::linear(kv_tokens, p.wk, none);
  ag::Var v = ag::linear(kv_tokens, p.wv, none);
  return ag::linear(ag::attention(q, k, v, p.heads), p.wo, p.bo);
}

namespace {

void require_video(const ag::Var& x, const char* what) {
  if (x.value().rank() != 5) throw ShapeError(std::string(what) + ": expected [B,F,C,H,W], got " + shape_str(x.shape()));
}

}  // namespace

ag::Var video_to_tokens(const ag::Var& x) {
  require_video(x, "video_to_tokens");
  const Shape& s = x.shape();
  return ag::reshape(ag::permute(x, {0, 1, 3, 4, 2}), {s[0], s[1] * s[3] * s[4], s[2]});
}

ag::Var tokens_to_video(const ag::Var& t, const Shape& v) {
  return ag::permute(ag::reshape(t, {v[0], v[1], v[3], v[4], v[2]}), {0, 1, 4, 2, 3});
}

ag::Var frames_to_tokens(const ag::Var& x) {
  require_video(x, "frames_to_tokens");
  const Shape& s = x.shape();
  return ag::reshape(ag::permute(x, {0, 1, 3, 4, 2}), {s[0] * s[1], s[3] * s[4], s[2]});
}

ag::Var tokens_to_frames(const ag::Var& t, const Shape& v) { return tokens_to_video(t, v); }

ag::Var video_to_time_tokens(const ag::Var& x) {
  require_video(x, "video_to_time_tokens");
  const Shape& s = x.shape();
  return ag::reshape(ag::permute(x, {0, 3, 4, 1, 2}), {s[0] * s[3] * s[4], s[1], s[2]});
}

ag::Var time_tokens_to_video(const ag::Var& t, const Shape& v) {
  return ag::permute(ag::reshape(t, {v[0], v[3], v[4], v[1], v[2]}), {0, 3, 4, 1, 2});
}

Tensor sinusoidal_embedding(std::span<const float> positions, int64_t dim) {
  Tensor out({static_cast<int64_t>(positions.size()), dim});
  const int64_t half = dim / 2;
  for (size_t i = 0; i < positions.size(); ++i) {
    for (int64_t j = 0; j < half; ++j) {
      const double freq = std::exp(-std::log(10000.0) * static_cast<double>(j) / static_cast<double>(half));
      const double a = positions[i] * freq;
      out[static_cast<int64_t>(i) * dim + j] = static_cast<float>(std::sin(a));
      out[static_cast<int64_t>(i) * dim + half + j] = static_cast<float>(std::cos(a));
    }
  }
  return out;
}

Tensor spatial_position_embedding(int64_t channels, int64_t height, int64_t width) {
  Tensor out({channels, height, width});
  const int64_t freqs = channels / 4;
  const double base = std::numbers::pi / static_cast<double>(std::max(height, width));
  for (int64_t j = 0; j < freqs; ++j) {
    const double w = base * std::ldexp(1.0, static_cast<int>(j));
    for (int64_t y = 0; y < height; ++y)
      for (int64_t x = 0; x < width; ++x) {
        const int64_t s = y * width + x;
        const int64_t hw = height * width;
        out[(2 * j) * hw + s] = static_cast<float>(std::sin(w * y));
        out[(2 * j + 1) * hw + s] = static_cast<float>(std::cos(w * y));
        out[(2 * freqs + 2 * j) * hw + s] = static_cast<float>(std::sin(w * x));
        out[(2 * freqs + 2 * j + 1) * hw + s] = static_cast<float>(std::cos(w * x));
      }
  }
  return out;
}

}  // namespace univid
