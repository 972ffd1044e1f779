#include "univid/pyramid.hpp"

#include <algorithm>
#include <string>

#include "univid/error.hpp"
#include "univid/ops.hpp"

namespace univid {

PyramidSchedule PyramidSchedule::default_table() {
  PyramidSchedule s;
  s.set(1, {4, 1});
  s.set(2, {2, 3});
  s.set(4, {1, 3});
  s.set(8, {1, 5});
  return s;
}

const PyramidLevel& PyramidSchedule::at(int factor) const {
  auto it = entries_.find(factor);
  if (it == entries_.end()) throw RangeError("no pyramid level for factor " + std::to_string(factor));
  return it->second;
}

void PyramidSchedule::set(int factor, PyramidLevel level) {
  if (std::find(kPyramidFactors.begin(), kPyramidFactors.end(), factor) == kPyramidFactors.end()) {
    throw RangeError("pyramid factor must be one of 1, 2, 4, 8; got " + std::to_string(factor));
  }
  if (level.step < 1) throw RangeError("pyramid step must be >= 1");
  if (level.kernel < 1 || level.kernel % 2 == 0) {
    throw ShapeError("pyramid kernel must be odd and >= 1, got " + std::to_string(level.kernel));
  }
  entries_[factor] = level;
}

int PyramidSchedule::reference_count(int factor, int frames) const {
  const int r = at(factor).step;
  if (frames % r != 0) {
    throw DivisibilityError("step " + std::to_string(r) + " does not divide " + std::to_string(frames) + " frames");
  }
  return frames / r;
}

void PyramidSchedule::validate(int frames) const {
  for (const auto& [f, level] : entries_) {
    if (frames % level.step != 0) {
      throw DivisibilityError("pyramid.f" + std::to_string(f) + ".r=" + std::to_string(level.step) +
                              " does not divide " + std::to_string(frames) + " frames");
    }
  }
}

PyramidSchedule schedule_for(int frames, const PyramidSchedule& base) {
  if (frames < 1) throw RangeError("frame count must be >= 1");
  if (frames == 1) {
    PyramidSchedule s;
    for (const auto& [f, level] : base.entries()) s.set(f, {1, level.kernel});
    return s;
  }
  base.validate(frames);
  return base;
}

std::vector<int64_t> ReferenceSet::zero_based() const {
  std::vector<int64_t> out;
  out.reserve(frames.size());
  for (int f : frames) out.push_back(f - 1);
  return out;
}

ReferenceSet build_reference_set(int frames, int step, ReferenceMode mode, Rng* rng) {
  if (frames < 1) throw RangeError("frame count must be >= 1");
  if (step < 1 || frames % step != 0) {
    throw DivisibilityError("step " + std::to_string(step) + " does not divide " + std::to_string(frames) + " frames");
  }
  if (mode == ReferenceMode::kTrainRandom && rng == nullptr) {
    throw Error("build_reference_set: train-random mode needs a generator");
  }
  ReferenceSet g;
  for (int seg = 0; seg < frames / step; ++seg) {
    const int lo = seg * step + 1;
    const int hi = lo + step - 1;
    g.frames.push_back(mode == ReferenceMode::kInferMid ? (lo + hi) / 2 : static_cast<int>(rng->uniform_int(lo, hi)));
  }
  return g;
}

ag::Var pst_attention(const ag::Var& z, const ReferenceSet& gamma, const AttentionParams& p, bool residual) {
  if (z.value().rank() != 5) throw ShapeError("pst_attention: expected [B,F,C,H,W], got " + shape_str(z.shape()));
  if (gamma.frames.empty()) throw ShapeError("pst_attention: empty reference set");
  const Shape& s = z.shape();
  const int64_t B = s[0], F = s[1], C = s[2], H = s[3], W = s[4];
  if (C != p.model_width() || C != p.context_width()) {
    throw ShapeError("pst_attention: " + std::to_string(C) + " channels vs projection width " +
                     std::to_string(p.model_width()));
  }
  for (int f : gamma.frames) {
    if (f < 1 || f > F) throw ShapeError("pst_attention: reference frame " + std::to_string(f) + " outside clip");
  }
  ag::Var h = ag::reshape(p.norm.apply(ag::reshape(z, {B * F, C, H, W})), s);
  ag::Var queries = video_to_tokens(h);
  const std::vector<int64_t> idx = gamma.zero_based();
  ag::Var keys = video_to_tokens(ag::gather(h, 1, idx));
  ag::Var update = tokens_to_video(attend(queries, keys, p), s);
  return residual ? ag::add(z, update) : update;
}

Tensor dirac_taps(int kernel, int64_t channels) {
  if (kernel < 1 || kernel % 2 == 0) throw ShapeError("temporal kernel must be odd, got " + std::to_string(kernel));
  Tensor w({kernel, channels, channels});
  const int64_t c = kernel / 2;
  for (int64_t i = 0; i < channels; ++i) w[(c * channels + i) * channels + i] = 1.0f;
  return w;
}

ag::Var pst_conv(const ag::Var& z, const PstConvParams& p, const Modulation* mod, bool residual) {
  if (z.value().rank() != 5) throw ShapeError("pst_conv: expected [B,F,C,H,W], got " + shape_str(z.shape()));
  if (p.temporal_w.dim(0) % 2 == 0) {
    throw ShapeError("pst_conv: temporal kernel must be odd, got " + std::to_string(p.temporal_w.dim(0)));
  }
  const Shape& s = z.shape();
  const int64_t B = s[0], F = s[1], Cin = s[2], H = s[3], W = s[4];
  const int64_t Cout = p.conv1_w.dim(0);
  ag::Var x = ag::reshape(z, {B * F, Cin, H, W});

  ag::Var h = x;
  if (p.norm1.enabled()) h = ag::silu(p.norm1.apply(h));
  h = ag::conv2d(h, p.conv1_w, p.conv1_b, 1, static_cast<int>(p.conv1_w.dim(2) / 2));
  if (mod) h = ag::modulate(h, mod->scale, mod->shift);
  if (p.conv2_w.defined()) {
    if (p.norm2.enabled()) h = ag::silu(p.norm2.apply(h));
    h = ag::conv2d(h, p.conv2_w, p.conv2_b, 1, static_cast<int>(p.conv2_w.dim(2) / 2));
  }
  h = ag::temporal_conv(ag::reshape(h, {B, F, Cout, H, W}), p.temporal_w, p.temporal_b);
  if (!residual) return h;

  ag::Var skip = z;
  if (p.skip_w.defined()) {
    skip = ag::reshape(ag::conv2d(x, p.skip_w, p.skip_b, 1, 0), {B, F, Cout, H, W});
  } else if (Cin != Cout) {
    throw ShapeError("pst_conv: channel change " + std::to_string(Cin) + "->" + std::to_string(Cout) +
                     " needs a skip projection");
  }
  return ag::add(skip, h);
}

}  // namespace univid
