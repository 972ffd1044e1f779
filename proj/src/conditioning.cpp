#include "univid/conditioning.hpp"

#include <fstream>
#include <sstream>

#include "univid/error.hpp"
#include "univid/ops.hpp"

namespace univid {

void ConditionBundle::validate() const {
  if (lambda_t < 0.0f || lambda_v < 0.0f) throw RangeError("guidance weights must be non-negative");
  if (lambda_t > 0.0f && !(text.defined() && text.dim(1) > 0)) {
    throw RangeError("text weight is positive but the text condition is absent");
  }
  if (lambda_v > 0.0f && !(image.defined() && image.dim(1) > 0)) {
    throw RangeError("image weight is positive but the image condition is absent");
  }
  if (text.defined() && image.defined() && text.dim(2) != image.dim(2)) {
    throw ShapeError("text and image condition widths differ");
  }
}

GenerationMode parse_mode(const std::string& name) {
  if (name == "t2v") return GenerationMode::kT2V;
  if (name == "i2v") return GenerationMode::kI2V;
  if (name == "ti2v") return GenerationMode::kTI2V;
  throw RangeError("unknown mode '" + name + "' (expected t2v, i2v or ti2v)");
}

std::string mode_name(GenerationMode m) {
  switch (m) {
    case GenerationMode::kT2V:
      return "t2v";
    case GenerationMode::kI2V:
      return "i2v";
    case GenerationMode::kTI2V:
      return "ti2v";
  }
  return "?";
}

std::pair<float, float> default_lambdas(GenerationMode m) {
  switch (m) {
    case GenerationMode::kT2V:
      return {1.0f, 0.0f};
    case GenerationMode::kI2V:
      return {0.0f, 1.0f};
    case GenerationMode::kTI2V:
      return {1.0f, 1.0f};
  }
  return {0.0f, 0.0f};
}

std::vector<std::string> split_words(const std::string& text) {
  std::istringstream is(text);
  std::vector<std::string> out;
  for (std::string w; is >> w;) out.push_back(w);
  return out;
}

Vocabulary::Vocabulary(std::vector<std::string> tokens) : tokens_(std::move(tokens)) {
  for (size_t i = 0; i < tokens_.size(); ++i) {
    if (tokens_[i].empty()) throw FormatError("vocabulary: empty token at line " + std::to_string(i + 1));
    if (!ids_.emplace(tokens_[i], static_cast<int64_t>(i)).second) {
      throw FormatError("vocabulary: duplicate token '" + tokens_[i] + "'");
    }
  }
}

Vocabulary Vocabulary::synthetic() {
  std::vector<std::string> t = {"red",   "green", "blue",    "yellow", "cyan", "magenta", "white",
                                "circle", "square", "triangle", "moving", "left", "right",   "up",
                                "down",  "diagonal", "slow",  "fast"};
  for (int i = static_cast<int>(t.size()); i < 32; ++i) t.push_back("<unused" + std::to_string(i) + ">");
  return Vocabulary(std::move(t));
}

Vocabulary Vocabulary::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open vocabulary file " + path);
  std::vector<std::string> tokens;
  for (std::string line; std::getline(in, line);) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    tokens.push_back(line);
  }
  return Vocabulary(std::move(tokens));
}

void Vocabulary::save(const std::string& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write vocabulary file " + path);
  for (const auto& t : tokens_) out << t << '\n';
  if (!out) throw IoError("failed writing " + path);
}

int64_t Vocabulary::id(const std::string& token) const {
  auto it = ids_.find(token);
  if (it == ids_.end()) throw RangeError("unknown token '" + token + "'");
  return it->second;
}

std::vector<int64_t> Vocabulary::encode(const std::vector<std::string>& caption) const {
  std::vector<int64_t> ids;
  ids.reserve(caption.size());
  for (const auto& w : caption) ids.push_back(id(w));
  return ids;
}

std::vector<int64_t> Vocabulary::encode(const std::string& caption) const { return encode(split_words(caption)); }

TextEncoder TextEncoder::create(ParameterStore& store, const std::string& prefix, int64_t vocab, int64_t max_len,
                                int64_t width, Rng& rng) {
  TextEncoder e;
  e.table = store.add(prefix + ".table", ParamGroup::kConditioning, init_normal({vocab, width}, 1, rng));
  e.pos = store.add(prefix + ".pos", ParamGroup::kConditioning, init_normal({max_len, width}, 1, rng, 0.1f));
  return e;
}

ag::Var TextEncoder::encode(std::span<const int64_t> ids) const {
  return ag::reshape(encode_batch({std::vector<int64_t>(ids.begin(), ids.end())}), {static_cast<int64_t>(ids.size()), table.dim(1)});
}

ag::Var TextEncoder::encode_batch(const std::vector<std::vector<int64_t>>& captions) const {
  if (captions.empty()) throw ShapeError("text encoder: empty batch");
  const int64_t n = static_cast<int64_t>(captions[0].size());
  const int64_t d = table.dim(1);
  std::vector<int64_t> flat;
  for (const auto& c : captions) {
    if (static_cast<int64_t>(c.size()) != n) throw ShapeError("text encoder: captions in a batch must have equal length");
    flat.insert(flat.end(), c.begin(), c.end());
  }
  if (n > pos.dim(0)) {
    throw ShapeError("text encoder: caption of " + std::to_string(n) + " tokens exceeds maximum " +
                     std::to_string(pos.dim(0)));
  }
  const int64_t B = static_cast<int64_t>(captions.size());
  if (n == 0) return ag::Var(Tensor({B, 0, d}));
  std::vector<int64_t> positions(static_cast<size_t>(n));
  for (int64_t i = 0; i < n; ++i) positions[static_cast<size_t>(i)] = i;
  ag::Var tokens = ag::reshape(ag::embedding(table, flat), {B, n, d});
  return ag::add_broadcast(tokens, ag::gather(pos, 0, positions));
}

ImageEncoder ImageEncoder::create(ParameterStore& store, const std::string& prefix, int64_t channels, int64_t height,
                                  int64_t width, int64_t patch, int64_t cond_width, Rng& rng) {
  if (patch < 1 || height % patch != 0 || width % patch != 0) {
    throw DivisibilityError("image size " + std::to_string(height) + "x" + std::to_string(width) +
                            " not divisible by patch " + std::to_string(patch));
  }
  ImageEncoder e;
  e.patch = patch;
  const int64_t in = channels * patch * patch;
  const int64_t n = (height / patch) * (width / patch);
  e.proj_w = store.add(prefix + ".proj_w", ParamGroup::kConditioning, init_normal({in, cond_width}, in, rng));
  e.proj_b = store.add(prefix + ".proj_b", ParamGroup::kConditioning, Tensor({cond_width}));
  e.pos = store.add(prefix + ".pos", ParamGroup::kConditioning, init_normal({n, cond_width}, 1, rng, 0.1f));
  return e;
}

ag::Var ImageEncoder::encode(const Tensor& image) const {
  if (image.rank() != 3) throw ShapeError("image encoder: expected [C,H,W], got " + shape_str(image.shape()));
  Shape s = image.shape();
  s.insert(s.begin(), 1);
  ag::Var out = encode_batch(image.reshape(s));
  return ag::reshape(out, {out.dim(1), out.dim(2)});
}

ag::Var ImageEncoder::encode_batch(const Tensor& images) const {
  if (images.rank() != 4) throw ShapeError("image encoder: expected [B,C,H,W], got " + shape_str(images.shape()));
  const int64_t B = images.dim(0), C = images.dim(1), H = images.dim(2), W = images.dim(3), p = patch;
  if (H % p != 0 || W % p != 0) {
    throw DivisibilityError("image size " + std::to_string(H) + "x" + std::to_string(W) +
                            " not divisible by patch " + std::to_string(p));
  }
  const int64_t n = (H / p) * (W / p);
  if (C * p * p != proj_w.dim(0) || n != pos.dim(0)) {
    throw ShapeError("image encoder: image " + shape_str(images.shape()) + " does not match encoder geometry");
  }
  ag::Var x(images.reshape({B, C, H / p, p, W / p, p}));
  ag::Var patches = ag::reshape(ag::permute(x, {0, 2, 4, 1, 3, 5}), {B, n, C * p * p});
  return ag::add_broadcast(ag::linear(patches, proj_w, proj_b), pos);
}

DualCrossAttentionParams make_dual_cross_attention(ParameterStore& store, const std::string& prefix, int64_t width,
                                                   int64_t cond_width, int heads, bool zero_image_out, Rng& rng,
                                                   bool with_norm) {
  if (heads < 1 || width % heads != 0) throw ShapeError(prefix + ": width not divisible by heads");
  const ParamGroup g = ParamGroup::kConditioning;
  DualCrossAttentionParams p;
  p.heads = heads;
  if (with_norm) p.norm = make_norm(store, prefix + ".norm", g, width);
  p.wq = store.add(prefix + ".wq", g, init_normal({width, width}, width, rng));
  auto stream = [&](const std::string& name, bool zero_out) {
    StreamParams s;
    s.wk = store.add(prefix + "." + name + ".wk", g, init_normal({cond_width, width}, cond_width, rng));
    s.wv = store.add(prefix + "." + name + ".wv", g, init_normal({cond_width, width}, cond_width, rng));
    s.wo = store.add(prefix + "." + name + ".wo", g,
                     zero_out ? Tensor({width, width}) : init_normal({width, width}, width, rng));
    s.bo = store.add(prefix + "." + name + ".bo", g, Tensor({width}));
    return s;
  };
  p.text = stream("text", false);
  p.image = stream("image", zero_image_out);
  return p;
}

namespace {

ag::Var stream_attend(const ag::Var& q, const ag::Var& context, const StreamParams& s, int heads) {
  if (context.dim(2) != s.wk.dim(0)) {
    throw ShapeError("cross-attention: condition width " + std::to_string(context.dim(2)) + " vs projection " +
                     std::to_string(s.wk.dim(0)));
  }
  const ag::Var none;
  ag::Var k = ag::linear(context, s.wk, none);
  ag::Var v = ag::linear(context, s.wv, none);
  return ag::linear(ag::attention(q, k, v, heads), s.wo, s.bo);
}

}  // namespace

ag::Var dual_cross_attention_update(const ag::Var& z, const ConditionBundle& cond, const DualCrossAttentionParams& p) {
  if (z.value().rank() != 5) throw ShapeError("dual_cross_attention: expected [B,F,C,H,W], got " + shape_str(z.shape()));
  cond.validate();
  const Shape& s = z.shape();
  const int64_t B = s[0], F = s[1], C = s[2], H = s[3], W = s[4];
  if (C != p.wq.dim(0)) throw ShapeError("dual_cross_attention: channel count does not match projections");
  const bool use_t = cond.text_active();
  const bool use_v = cond.image_active();
  if (use_t && cond.text.dim(0) != B) throw ShapeError("dual_cross_attention: text batch mismatch");
  if (use_v && cond.image.dim(0) != B) throw ShapeError("dual_cross_attention: image batch mismatch");
  if (!use_t && !use_v) return ag::Var(Tensor(s));

  ag::Var h = ag::reshape(p.norm.apply(ag::reshape(z, {B * F, C, H, W})), s);
  ag::Var q = ag::linear(video_to_tokens(h), p.wq, ag::Var());
  ag::Var fused;
  if (use_t) fused = ag::scale(stream_attend(q, cond.text, p.text, p.heads), cond.lambda_t);
  if (use_v) {
    ag::Var term = ag::scale(stream_attend(q, cond.image, p.image, p.heads), cond.lambda_v);
    fused = fused.defined() ? ag::add(fused, term) : term;
  }
  return tokens_to_video(fused, s);
}

ag::Var dual_cross_attention(const ag::Var& z, const ConditionBundle& cond, const DualCrossAttentionParams& p) {
  if (!cond.text_active() && !cond.image_active()) {
    cond.validate();
    return z;
  }
  return ag::add(z, dual_cross_attention_update(z, cond, p));
}

Tensor frame_position_embedding(int64_t frames, int64_t width) {
  std::vector<float> positions(static_cast<size_t>(frames));
  for (int64_t f = 0; f < frames; ++f) positions[static_cast<size_t>(f)] = static_cast<float>(f);
  return sinusoidal_embedding(positions, width);
}

ag::Var temporal_attention(const ag::Var& z, const AttentionParams& p, const Tensor& pos, bool residual) {
  if (z.value().rank() != 5) throw ShapeError("temporal_attention: expected [B,F,C,H,W], got " + shape_str(z.shape()));
  const Shape& s = z.shape();
  const int64_t B = s[0], F = s[1], C = s[2], H = s[3], W = s[4];
  if (F < 1) throw ShapeError("temporal_attention: need at least one frame");
  if (C != p.model_width()) throw ShapeError("temporal_attention: channel count does not match projections");
  ag::Var h = ag::reshape(p.norm.apply(ag::reshape(z, {B * F, C, H, W})), s);
  ag::Var tokens = video_to_time_tokens(h);
  if (!pos.empty()) {
    if (pos.shape() != Shape{F, C}) {
      throw ShapeError("temporal_attention: position table " + shape_str(pos.shape()) + " vs [F, C] = [" +
                       std::to_string(F) + "," + std::to_string(C) + "]");
    }
    tokens = ag::add_broadcast(tokens, ag::Var(pos));
  }
  ag::Var update = time_tokens_to_video(attend(tokens, tokens, p), s);
  return residual ? ag::add(z, update) : update;
}

}  // namespace univid
