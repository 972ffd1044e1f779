#include "univid/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "univid/conditioning.hpp"
#include "univid/error.hpp"
#include "univid/ops.hpp"
#include "univid/pyramid.hpp"
#include "univid/unet.hpp"

namespace univid {
namespace {

double objective(const Tensor& out, const Tensor& r) {
  double s = 0.0;
  for (int64_t i = 0; i < out.numel(); ++i) s += static_cast<double>(out[i]) * r[i];
  return s;
}

// Moves every parameter away from its (possibly zero or Dirac) initial value.
void perturb(ParameterStore& store, Rng& rng) {
  for (const auto& p : store.params()) {
    Tensor& v = const_cast<ag::Var&>(p.var).mutable_value();
    for (float& x : v.values()) x += 0.3f * rng.normal();
  }
}

std::vector<NamedInput> all_params(const ParameterStore& store) {
  std::vector<NamedInput> out;
  for (const auto& p : store.params()) out.push_back({p.name, p.var});
  return out;
}

ag::Var leaf(Rng& rng, const Shape& shape) { return ag::Var(rng.normal_tensor(shape), true); }

}  // namespace

const std::vector<std::string>& gradcheck_modules() {
  static const std::vector<std::string> names = {"pstattn", "pstconv", "dualca", "temattn", "unet"};
  return names;
}

double default_tolerance(const std::string& module) { return module == "unet" ? 1e-2 : 1e-3; }

GradcheckReport check_gradients(const std::string& label, const std::vector<NamedInput>& inputs,
                                const std::function<ag::Var()>& forward, double eps, double tol, int samples,
                                uint64_t seed) {
  for (const auto& in : inputs) {
    in.var.node()->requires_grad = true;
    in.var.node()->grad = Tensor();
  }
  Rng rng(seed ^ 0x9e3779b97f4a7c15ull);
  const ag::Var out = forward();
  Tensor r = rng.normal_tensor(out.shape());
  double norm = 0.0;
  for (float x : r.values()) norm += static_cast<double>(x) * x;
  for (float& x : r.values()) x = static_cast<float>(x / std::sqrt(norm));
  ag::backward(ag::weighted_sum(out, r));
  std::vector<Tensor> analytic;
  for (const auto& in : inputs) analytic.push_back(in.var.grad());

  // Coordinates: everything, or a round-robin over inputs with random indices.
  std::vector<std::pair<size_t, int64_t>> coords;
  if (samples <= 0) {
    for (size_t j = 0; j < inputs.size(); ++j)
      for (int64_t i = 0; i < inputs[j].var.numel(); ++i) coords.emplace_back(j, i);
  } else {
    for (int s = 0; s < samples; ++s) {
      const size_t j = static_cast<size_t>(s) % inputs.size();
      coords.emplace_back(j, rng.uniform_int(0, inputs[j].var.numel() - 1));
    }
  }

  GradcheckReport rep;
  rep.module = label;
  rep.tol = tol;
  for (const auto& [j, i] : coords) {
    Tensor& v = const_cast<ag::Var&>(inputs[j].var).mutable_value();
    const float orig = v[i];
    const float hi = static_cast<float>(orig + eps), lo = static_cast<float>(orig - eps);
    v[i] = hi;
    const double fp = objective(forward().value(), r);
    v[i] = lo;
    const double fm = objective(forward().value(), r);
    v[i] = orig;
    const double numeric = (fp - fm) / (static_cast<double>(hi) - lo);
    const double a = analytic[j][i];
    double err = std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), 1.0});
    if (!std::isfinite(err)) err = std::numeric_limits<double>::max();
    ++rep.checked;
    if (rep.worst.empty() || err > rep.max_error) {
      rep.max_error = err;
      rep.worst = inputs[j].name + "[" + std::to_string(i) + "]";
    }
  }
  for (const auto& in : inputs) {
    in.var.node()->grad = Tensor();
    in.var.node()->requires_grad = false;
  }
  rep.passed = rep.max_error < tol;
  return rep;
}

GradcheckReport run_gradcheck(const std::string& module, const GradcheckOptions& opts) {
  const auto& names = gradcheck_modules();
  if (std::find(names.begin(), names.end(), module) == names.end()) {
    throw ConfigError("unknown gradcheck module '" + module + "' (expected pstattn, pstconv, dualca, temattn or unet)");
  }
  if (!(opts.eps > 0.0) || !std::isfinite(opts.eps)) throw RangeError("gradcheck eps must be positive and finite");
  const double tol = opts.tol < 0.0 ? default_tolerance(module) : opts.tol;
  Rng rng(opts.seed);
  ParameterStore store;
  const int64_t F = 4, C = 4, H = 4, W = 4;
  const Shape video{1, F, C, H, W};

  if (module == "pstattn") {
    AttentionParams p = make_attention(store, "pstattn", ParamGroup::kTemporal, C, C, 2, false, rng);
    perturb(store, rng);
    ag::Var z = leaf(rng, video);
    const ReferenceSet gamma = build_reference_set(static_cast<int>(F), 2, ReferenceMode::kInferMid);
    auto inputs = all_params(store);
    inputs.push_back({"z", z});
    return check_gradients(module, inputs, [&] { return pst_attention(z, gamma, p, false); }, opts.eps, tol, opts.samples,
                           opts.seed);
  }
  if (module == "pstconv") {
    PstConvParams p;
    p.norm1 = make_norm(store, "pstconv.norm1", ParamGroup::kSpatial, C);
    p.conv1_w = store.add("pstconv.conv1.weight", ParamGroup::kSpatial, init_normal({C, C, 3, 3}, C * 9, rng));
    p.conv1_b = store.add("pstconv.conv1.bias", ParamGroup::kSpatial, Tensor({C}));
    p.norm2 = make_norm(store, "pstconv.norm2", ParamGroup::kSpatial, C);
    p.conv2_w = store.add("pstconv.conv2.weight", ParamGroup::kSpatial, init_normal({C, C, 3, 3}, C * 9, rng));
    p.conv2_b = store.add("pstconv.conv2.bias", ParamGroup::kSpatial, Tensor({C}));
    p.temporal_w = store.add("pstconv.temporal.weight", ParamGroup::kTemporal, dirac_taps(3, C));
    p.temporal_b = store.add("pstconv.temporal.bias", ParamGroup::kTemporal, Tensor({C}));
    perturb(store, rng);
    Modulation mod{leaf(rng, {1, C}), leaf(rng, {1, C})};
    ag::Var z = leaf(rng, video);
    auto inputs = all_params(store);
    inputs.push_back({"z", z});
    inputs.push_back({"mod.scale", mod.scale});
    inputs.push_back({"mod.shift", mod.shift});
    return check_gradients(module, inputs, [&] { return pst_conv(z, p, &mod, false); }, opts.eps, tol, opts.samples,
                           opts.seed);
  }
  if (module == "dualca") {
    DualCrossAttentionParams p = make_dual_cross_attention(store, "dualca", C, 4, 2, false, rng);
    perturb(store, rng);
    ConditionBundle cond;
    cond.text = leaf(rng, {1, 3, 4});
    cond.image = leaf(rng, {1, 4, 4});
    cond.lambda_t = 0.7f;
    cond.lambda_v = 1.3f;
    ag::Var z = leaf(rng, video);
    auto inputs = all_params(store);
    inputs.push_back({"z", z});
    inputs.push_back({"text", cond.text});
    inputs.push_back({"image", cond.image});
    return check_gradients(module, inputs, [&] { return dual_cross_attention_update(z, cond, p); }, opts.eps, tol,
                           opts.samples, opts.seed);
  }
  if (module == "temattn") {
    AttentionParams p = make_attention(store, "temattn", ParamGroup::kTemporal, C, C, 2, false, rng);
    perturb(store, rng);
    const Tensor pos = rng.normal_tensor({F, C});
    ag::Var z = leaf(rng, video);
    auto inputs = all_params(store);
    inputs.push_back({"z", z});
    return check_gradients(module, inputs, [&] { return temporal_attention(z, p, pos, false); }, opts.eps, tol,
                           opts.samples, opts.seed);
  }

  // Miniature denoiser: widths 8, 4 frames, 8x8 latent.
  UNetConfig cfg;
  cfg.latent_channels = 4;
  cfg.channels = {8, 8, 8, 8};
  cfg.heads = 2;
  cfg.cond_dim = 8;
  cfg.vocab_size = 32;
  cfg.text_max_len = 8;
  cfg.image_channels = 3;
  cfg.image_height = 8;
  cfg.image_width = 8;
  cfg.image_patch = 4;
  UniVidModel model(cfg, opts.seed);
  Rng prng(opts.seed + 1);
  perturb(model.store(), prng);
  const Tensor zt = prng.normal_tensor({1, 4, 4, 8, 8});
  const Tensor image = prng.normal_tensor({1, 3, 8, 8});
  const std::vector<std::vector<int64_t>> caption{{1, 7, 10, 12, 16}};
  const std::vector<int> t{37};
  const int samples = opts.samples > 0 ? opts.samples : 200;
  return check_gradients(
      module, all_params(model.store()),
      [&] {
        const ConditionBundle cond = model.condition(caption, image, 1.0f, 1.0f);
        return model.forward(ag::Var(zt), t, cond);
      },
      opts.eps, tol, samples, opts.seed);
}

}  // namespace univid
