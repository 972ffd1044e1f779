#include "univid/sampling.hpp"

#include <algorithm>
#include <cmath>

#include "univid/error.hpp"

namespace univid {

void validate_request(const GenerateRequest& req) {
  const bool wants_text = req.mode != GenerationMode::kI2V;
  const bool wants_image = req.mode != GenerationMode::kT2V;
  const std::string m = mode_name(req.mode);
  if (wants_text && req.prompt.empty()) throw ConfigError(m + " generation needs a prompt");
  if (wants_image && req.image.empty()) throw ConfigError(m + " generation needs a reference image");
  if (!(req.lambda_t >= 0.0f) || !(req.lambda_v >= 0.0f)) throw RangeError("guidance weights must be non-negative");
  if (!wants_text && req.lambda_t != 0.0f) throw RangeError("i2v has no text stream; lambda_t must be 0");
  if (!wants_image && req.lambda_v != 0.0f) throw RangeError("t2v has no image stream; lambda_v must be 0");
  if (!std::isfinite(req.scale)) throw RangeError("guidance scale must be finite");
  if (req.frames < 1) throw RangeError("frames must be >= 1");
  if (!req.image.empty() && req.image.rank() != 3) throw ShapeError("reference image must be [C, H, W]");
}

ConditionBundle request_condition(const UniVidModel& model, const GenerateRequest& req) {
  const bool text = req.mode != GenerationMode::kI2V;
  const bool image = req.mode != GenerationMode::kT2V;
  std::vector<std::vector<int64_t>> captions;
  if (text) captions.push_back(req.prompt);
  Tensor images;
  if (image) {
    Shape s = req.image.shape();
    s.insert(s.begin(), 1);
    images = req.image.reshape(s);
  }
  return model.condition(captions, images, text ? req.lambda_t : 0.0f, image ? req.lambda_v : 0.0f);
}

Tensor clip_noise_estimate(const Tensor& z_t, const Tensor& eps_hat, int t, const NoiseSchedule& s) {
  if (t < 1 || t > s.T) throw RangeError("timestep " + std::to_string(t) + " outside [1, " + std::to_string(s.T) + "]");
  const double ab = s.alpha_bar[static_cast<size_t>(t)];
  if (ab >= 1.0) return eps_hat;
  const double a = std::sqrt(ab), b = std::sqrt(1.0 - ab);
  Tensor out(eps_hat.shape());
  for (int64_t k = 0; k < out.numel(); ++k) {
    const double x0 = std::clamp((z_t[k] - b * eps_hat[k]) / a, -1.0, 1.0);
    out[k] = static_cast<float>((z_t[k] - a * x0) / b);
  }
  return out;
}

Tensor generate_latent(const UniVidModel& model, const NoiseSchedule& schedule, CodecKind codec,
                       const GenerateRequest& req) {
  validate_request(req);
  const UNetConfig& cfg = model.config();
  const ConditionBundle cond = request_condition(model, req);
  const ConditionBundle none;
  const Shape latent = latent_shape({cfg.image_channels, cfg.image_height, cfg.image_width}, codec);
  const Shape shape{1, req.frames, latent[0], latent[1], latent[2]};
  const SamplingPlan plan = respace(schedule, req.steps);

  Rng rng(req.seed);
  Tensor z = rng.normal_tensor(shape);
  const ForwardOptions fo{ReferenceMode::kInferMid, nullptr};
  for (int i = static_cast<int>(plan.timesteps.size()); i >= 1; --i) {
    const int t_model = plan.timesteps[static_cast<size_t>(i - 1)];
    const std::vector<int> t{t_model};
    const ag::Var zv(z);
    Tensor eps;
    if (req.scale == 1.0f) {
      eps = model.forward(zv, t, cond, fo).value();
    } else if (req.scale == 0.0f) {
      eps = model.forward(zv, t, none, fo).value();
    } else {
      const Tensor ec = model.forward(zv, t, cond, fo).value();
      eps = model.forward(zv, t, none, fo).value();
      for (int64_t k = 0; k < eps.numel(); ++k) eps[k] += req.scale * (ec[k] - eps[k]);
    }
    if (req.clip_denoised) eps = clip_noise_estimate(z, eps, i, plan.schedule);
    const Tensor noise = i > 1 ? rng.normal_tensor(shape) : Tensor();
    z = reverse_step(z, eps, i, plan.schedule, noise);
  }
  return z;
}

Tensor generate(const UniVidModel& model, const NoiseSchedule& schedule, CodecKind codec, const GenerateRequest& req) {
  const Tensor z = generate_latent(model, schedule, codec, req);
  Tensor x = clamp(to_unit(codec_decode(z, codec)), 0.0f, 1.0f);
  Shape s = x.shape();
  s.erase(s.begin());
  return std::move(x).reshape(s);
}

SweepResult lambda_sweep(const UniVidModel& model, const NoiseSchedule& schedule, CodecKind codec,
                         const GenerateRequest& base, const std::vector<std::pair<float, float>>& grid) {
  if (base.prompt.empty() || base.image.empty()) throw ConfigError("lambda sweep needs both a prompt and an image");
  SweepResult out;
  out.grid = grid;
  for (const auto& [lt, lv] : grid) {
    GenerateRequest r = base;
    r.mode = GenerationMode::kTI2V;
    r.lambda_t = lt;
    r.lambda_v = lv;
    out.videos.push_back(generate(model, schedule, codec, r));
  }
  for (size_t i = 1; i < out.videos.size(); ++i) {
    const Tensor& a = out.videos[i - 1];
    const Tensor& b = out.videos[i];
    double sum = 0.0;
    for (int64_t k = 0; k < a.numel(); ++k) sum += std::abs(static_cast<double>(a[k]) - b[k]);
    out.divergence.push_back(sum / static_cast<double>(a.numel()));
  }
  return out;
}

}  // namespace univid
