#include "univid/unet.hpp"

#include <algorithm>
#include <cmath>

#include "univid/error.hpp"
#include "univid/ops.hpp"

namespace univid {
namespace {

ag::Var frames_conv(const ag::Var& x, const ag::Var& w, const ag::Var& b, int stride) {
  const Shape& s = x.shape();
  ag::Var y = ag::conv2d(ag::reshape(x, {s[0] * s[1], s[2], s[3], s[4]}), w, b, stride,
                         static_cast<int>(w.dim(2) / 2));
  return ag::reshape(y, {s[0], s[1], y.dim(1), y.dim(2), y.dim(3)});
}

ag::Var frames_upsample(const ag::Var& x) {
  const Shape& s = x.shape();
  ag::Var y = ag::upsample_nearest2x(ag::reshape(x, {s[0] * s[1], s[2], s[3], s[4]}));
  return ag::reshape(y, {s[0], s[1], s[2], 2 * s[3], 2 * s[4]});
}

Tensor conv_init(int64_t cout, int64_t cin, int64_t k, Rng& rng, float gain = 1.0f) {
  return init_normal({cout, cin, k, k}, cin * k * k, rng, gain);
}

}  // namespace

STBlock STBlock::create(ParameterStore& store, const std::string& prefix, const STBlockConfig& cfg, int64_t cond_dim,
                        int64_t time_dim, Rng& rng) {
  if (cfg.channels <= 0 || cfg.in_channels <= 0) throw ShapeError(prefix + ": channel counts must be positive");
  const ParamGroup S = ParamGroup::kSpatial, T = ParamGroup::kTemporal;
  const int64_t cin = cfg.in_channels, c = cfg.channels;
  STBlock b;
  b.cfg = cfg;
  const std::string cp = prefix + ".pstconv";
  b.conv.norm1 = make_norm(store, cp + ".norm1", S, cin);
  b.conv.conv1_w = store.add(cp + ".conv1.weight", S, conv_init(c, cin, 3, rng));
  b.conv.conv1_b = store.add(cp + ".conv1.bias", S, Tensor({c}));
  b.conv.norm2 = make_norm(store, cp + ".norm2", S, c);
  b.conv.conv2_w = store.add(cp + ".conv2.weight", S, conv_init(c, c, 3, rng));
  b.conv.conv2_b = store.add(cp + ".conv2.bias", S, Tensor({c}));
  b.conv.temporal_w = store.add(cp + ".temporal.weight", T, dirac_taps(cfg.kernel, c));
  b.conv.temporal_b = store.add(cp + ".temporal.bias", T, Tensor({c}));
  if (cin != c) {
    b.conv.skip_w = store.add(cp + ".skip.weight", S, conv_init(c, cin, 1, rng));
    b.conv.skip_b = store.add(cp + ".skip.bias", S, Tensor({c}));
  }
  b.scale_w = store.add(prefix + ".tmod.scale_w", S, init_normal({time_dim, c}, time_dim, rng, 0.1f));
  b.scale_b = store.add(prefix + ".tmod.scale_b", S, Tensor({c}));
  b.shift_w = store.add(prefix + ".tmod.shift_w", S, init_normal({time_dim, c}, time_dim, rng, 0.1f));
  b.shift_b = store.add(prefix + ".tmod.shift_b", S, Tensor({c}));
  b.self_attn = make_attention(store, prefix + ".selfattn", S, c, c, cfg.heads, false, rng);
  b.pst_attn = make_attention(store, prefix + ".pstattn", T, c, c, cfg.heads, true, rng);
  b.cross = make_dual_cross_attention(store, prefix + ".crossattn", c, cond_dim, cfg.heads, true, rng);
  b.temporal_attn = make_attention(store, prefix + ".temattn", T, c, c, cfg.heads, true, rng);
  return b;
}

ag::Var st_block_forward(const ag::Var& z, const ag::Var& t_act, const ConditionBundle& cond, const STBlock& block,
                         int step, const ForwardOptions& opts) {
  if (z.value().rank() != 5 || z.dim(2) != block.cfg.in_channels) {
    throw ShapeError("st_block f" + std::to_string(block.cfg.factor) + ": input " + shape_str(z.shape()) +
                     " does not have " + std::to_string(block.cfg.in_channels) + " channels");
  }
  const int F = static_cast<int>(z.dim(1));
  Modulation mod{ag::linear(t_act, block.scale_w, block.scale_b), ag::linear(t_act, block.shift_w, block.shift_b)};
  ag::Var h = pst_conv(z, block.conv, &mod);

  const Shape s = h.shape();
  ag::Var normed = block.self_attn.norm.apply(ag::reshape(h, {s[0] * s[1], s[2], s[3], s[4]}));
  ag::Var tokens = frames_to_tokens(ag::reshape(normed, s));
  h = ag::add(h, tokens_to_frames(attend(tokens, tokens, block.self_attn), s));

  const ReferenceSet gamma = build_reference_set(F, step, opts.mode, opts.rng);
  h = pst_attention(h, gamma, block.pst_attn);
  h = dual_cross_attention(h, cond, block.cross);
  return temporal_attention(h, block.temporal_attn, frame_position_embedding(F, s[2]));
}

UniVidModel::UniVidModel(UNetConfig cfg, uint64_t seed) : cfg_(std::move(cfg)) {
  for (int64_t c : cfg_.channels) {
    if (c <= 0 || c % cfg_.heads != 0) {
      throw ShapeError("channel width " + std::to_string(c) + " must be positive and divisible by " +
                       std::to_string(cfg_.heads) + " heads");
    }
  }
  Rng rng(seed);
  const ParamGroup S = ParamGroup::kSpatial;
  const auto& ch = cfg_.channels;
  const int64_t td = cfg_.time_dim();

  text_ = TextEncoder::create(store_, "encoder.text", cfg_.vocab_size, cfg_.text_max_len, cfg_.cond_dim, rng);
  image_ = ImageEncoder::create(store_, "encoder.image", cfg_.image_channels, cfg_.image_height, cfg_.image_width,
                                cfg_.image_patch, cfg_.cond_dim, rng);

  conv_in_w_ = store_.add("unet.conv_in.weight", S, conv_init(ch[0], cfg_.latent_channels, 3, rng));
  conv_in_b_ = store_.add("unet.conv_in.bias", S, Tensor({ch[0]}));
  time_w1_ = store_.add("unet.time.w1", S, init_normal({ch[0], td}, ch[0], rng));
  time_b1_ = store_.add("unet.time.b1", S, Tensor({td}));
  time_w2_ = store_.add("unet.time.w2", S, init_normal({td, td}, td, rng));
  time_b2_ = store_.add("unet.time.b2", S, Tensor({td}));

  auto block = [&](const std::string& name, int level, int64_t cin, int64_t cout) {
    const int f = kPyramidFactors[static_cast<size_t>(level)];
    STBlockConfig bc{f, cin, cout, cfg_.pyramid.at(f).kernel, cfg_.heads};
    blocks_.push_back(STBlock::create(store_, "unet." + name, bc, cfg_.cond_dim, td, rng));
  };
  block("down.f1", 0, ch[0], ch[0]);
  down_w_[0] = store_.add("unet.down.f1.downsample.weight", S, conv_init(ch[0], ch[0], 3, rng));
  down_b_[0] = store_.add("unet.down.f1.downsample.bias", S, Tensor({ch[0]}));
  block("down.f2", 1, ch[0], ch[1]);
  down_w_[1] = store_.add("unet.down.f2.downsample.weight", S, conv_init(ch[1], ch[1], 3, rng));
  down_b_[1] = store_.add("unet.down.f2.downsample.bias", S, Tensor({ch[1]}));
  block("down.f4", 2, ch[1], ch[2]);
  down_w_[2] = store_.add("unet.down.f4.downsample.weight", S, conv_init(ch[2], ch[2], 3, rng));
  down_b_[2] = store_.add("unet.down.f4.downsample.bias", S, Tensor({ch[2]}));
  block("mid.f8", 3, ch[2], ch[3]);
  block("up.f4", 2, ch[3] + ch[2], ch[2]);
  block("up.f2", 1, ch[2] + ch[1], ch[1]);
  block("up.f1", 0, ch[1] + ch[0], ch[0]);

  out_norm_ = make_norm(store_, "unet.out.norm", S, ch[0]);
  out_w_ = store_.add("unet.out.weight", S, conv_init(cfg_.latent_channels, ch[0], 3, rng, 0.1f));
  out_b_ = store_.add("unet.out.bias", S, Tensor({cfg_.latent_channels}));
}

ag::Var UniVidModel::time_embedding(std::span<const int> t) const {
  std::vector<float> pos(t.begin(), t.end());
  ag::Var e(sinusoidal_embedding(pos, cfg_.channels[0]));
  ag::Var h = ag::silu(ag::linear(e, time_w1_, time_b1_));
  return ag::linear(h, time_w2_, time_b2_);
}

ag::Var UniVidModel::forward(const ag::Var& z_t, std::span<const int> t, const ConditionBundle& cond,
                             const ForwardOptions& opts) const {
  if (z_t.value().rank() != 5) throw ShapeError("unet: expected [B,F,C,H,W], got " + shape_str(z_t.shape()));
  const Shape& s = z_t.shape();
  const int64_t B = s[0], F = s[1], H = s[3], W = s[4];
  if (s[2] != cfg_.latent_channels) {
    throw ShapeError("unet: expected " + std::to_string(cfg_.latent_channels) + " latent channels, got " +
                     std::to_string(s[2]));
  }
  if (H % 8 != 0 || W % 8 != 0) {
    throw DivisibilityError("unet: latent size " + std::to_string(H) + "x" + std::to_string(W) +
                            " must be divisible by 8");
  }
  if (static_cast<int64_t>(t.size()) != B) throw ShapeError("unet: need one timestep per sample");
  cond.validate();
  const PyramidSchedule sched = schedule_for(static_cast<int>(F), cfg_.pyramid);
  auto step = [&](const STBlock& b) { return sched.at(b.cfg.factor).step; };

  ag::Var t_act = ag::silu(time_embedding(t));
  ag::Var h = frames_conv(z_t, conv_in_w_, conv_in_b_, 1);
  h = ag::add_broadcast(h, ag::Var(spatial_position_embedding(cfg_.channels[0], H, W)));
  std::array<ag::Var, 3> skips;
  for (size_t i = 0; i < 3; ++i) {
    h = st_block_forward(h, t_act, cond, blocks_[i], step(blocks_[i]), opts);
    skips[i] = h;
    h = frames_conv(h, down_w_[i], down_b_[i], 2);
  }
  h = st_block_forward(h, t_act, cond, blocks_[3], step(blocks_[3]), opts);
  for (size_t j = 0; j < 3; ++j) {
    const size_t i = 2 - j;
    h = ag::concat({frames_upsample(h), skips[i]}, 2);
    h = st_block_forward(h, t_act, cond, blocks_[4 + j], step(blocks_[4 + j]), opts);
  }
  const Shape hs = h.shape();
  ag::Var o = ag::silu(out_norm_.apply(ag::reshape(h, {hs[0] * hs[1], hs[2], hs[3], hs[4]})));
  ag::Var out = frames_conv(ag::reshape(o, hs), out_w_, out_b_, 1);
  if (cfg_.output == OutputKind::kNoise) return out;

  // Per-sample coefficients: eps_hat = cz * z_t + cx * out.
  // clean:    eps_hat = (z_t - sqrt(ab) x0_hat) / sqrt(1 - ab)
  // residual: eps_hat = sqrt(1 - ab) z_t + out
  Tensor cz(s), cx(s);
  const int64_t per = z_t.numel() / B;
  for (int64_t b = 0; b < B; ++b) {
    const auto ti = static_cast<size_t>(t[static_cast<size_t>(b)]);
    if (ti == 0 || ti >= cfg_.alpha_bar.size()) throw RangeError("unet: timestep outside the alpha_bar table");
    const double ab = cfg_.alpha_bar[ti], sd = std::sqrt(1.0 - ab);
    if (!(sd > 0.0)) throw RangeError("unet: " + output_kind_name(cfg_.output) + " output needs a noisy timestep");
    const bool clean = cfg_.output == OutputKind::kClean;
    std::fill_n(cz.data() + b * per, per, static_cast<float>(clean ? 1.0 / sd : sd));
    std::fill_n(cx.data() + b * per, per, static_cast<float>(clean ? -std::sqrt(ab) / sd : 1.0));
  }
  return ag::add(ag::mul(z_t, ag::Var(std::move(cz))), ag::mul(out, ag::Var(std::move(cx))));
}

ConditionBundle UniVidModel::condition(const std::vector<std::vector<int64_t>>& captions, const Tensor& images,
                                       float lambda_t, float lambda_v) const {
  ConditionBundle c;
  c.lambda_t = lambda_t;
  c.lambda_v = lambda_v;
  if (!captions.empty() && !captions[0].empty()) c.text = text_.encode_batch(captions);
  if (!images.empty()) c.image = image_.encode_batch(images);
  c.validate();
  return c;
}

std::vector<std::string> UniVidModel::novel_output_names() const {
  std::vector<std::string> names;
  for (const auto& p : store_.params()) {
    const std::string& n = p.name;
    auto ends = [&](const std::string& suffix) {
      return n.size() >= suffix.size() && n.compare(n.size() - suffix.size(), suffix.size(), suffix) == 0;
    };
    if (ends(".pstattn.wo") || ends(".temattn.wo") || ends(".crossattn.image.wo")) names.push_back(n);
  }
  return names;
}

TrainingStage parse_stage(const std::string& name) {
  if (name == "t2v") return TrainingStage::kT2V;
  if (name == "adapters") return TrainingStage::kAdapters;
  if (name == "joint") return TrainingStage::kJoint;
  throw RangeError("unknown training stage '" + name + "' (expected t2v, adapters or joint)");
}

std::string stage_name(TrainingStage s) {
  switch (s) {
    case TrainingStage::kT2V:
      return "t2v";
    case TrainingStage::kAdapters:
      return "adapters";
    case TrainingStage::kJoint:
      return "joint";
  }
  return "?";
}

OutputKind parse_output_kind(const std::string& name) {
  if (name == "noise") return OutputKind::kNoise;
  if (name == "clean") return OutputKind::kClean;
  if (name == "residual") return OutputKind::kResidual;
  throw RangeError("unknown output kind '" + name + "' (expected noise, clean or residual)");
}

std::string output_kind_name(OutputKind k) {
  switch (k) {
    case OutputKind::kClean: return "clean";
    case OutputKind::kResidual: return "residual";
    default: return "noise";
  }
}

std::vector<std::string> select_trainable(const ParameterStore& store, InputKind kind, TrainingStage stage) {
  auto wanted = [&](ParamGroup g) {
    if (kind == InputKind::kImage) return g == ParamGroup::kSpatial;
    switch (stage) {
      case TrainingStage::kT2V:
        return g == ParamGroup::kSpatial || g == ParamGroup::kTemporal;
      case TrainingStage::kAdapters:
        return g == ParamGroup::kConditioning;
      case TrainingStage::kJoint:
        return true;
    }
    return false;
  };
  std::vector<std::string> names;
  for (const auto& p : store.params())
    if (wanted(p.group)) names.push_back(p.name);
  return names;
}

}  // namespace univid
