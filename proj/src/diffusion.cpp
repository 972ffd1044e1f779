#include "univid/diffusion.hpp"

#include <cmath>
#include <string>

#include "univid/error.hpp"
#include "univid/ops.hpp"

namespace univid {
namespace {

void check_timestep(int t, const NoiseSchedule& s) {
  if (t < 1 || t > s.T) {
    throw RangeError("timestep " + std::to_string(t) + " outside [1, " + std::to_string(s.T) + "]");
  }
}

}  // namespace

NoiseSchedule NoiseSchedule::from_betas(std::span<const double> betas) {
  if (betas.empty()) throw RangeError("noise schedule needs at least one timestep");
  NoiseSchedule s;
  s.T = static_cast<int>(betas.size());
  s.beta.assign(1, 0.0);
  s.alpha.assign(1, 1.0);
  s.alpha_bar.assign(1, 1.0);
  for (double b : betas) {
    if (!(b >= 0.0 && b <= 1.0)) throw RangeError("beta " + std::to_string(b) + " outside [0, 1]");
    s.beta.push_back(b);
    s.alpha.push_back(1.0 - b);
    s.alpha_bar.push_back(s.alpha_bar.back() * (1.0 - b));
  }
  return s;
}

NoiseSchedule make_schedule(int T, double beta_min, double beta_max) {
  if (T < 1) throw RangeError("timestep count must be >= 1, got " + std::to_string(T));
  if (!(beta_min >= 0.0 && beta_min <= beta_max && beta_max < 1.0)) {
    throw RangeError("beta bounds must satisfy 0 <= beta_min <= beta_max < 1");
  }
  std::vector<double> betas(static_cast<size_t>(T));
  for (int t = 0; t < T; ++t) {
    const double frac = T == 1 ? 0.0 : static_cast<double>(t) / (T - 1);
    betas[static_cast<size_t>(t)] = beta_min + (beta_max - beta_min) * frac;
  }
  return NoiseSchedule::from_betas(betas);
}

Tensor q_sample(const Tensor& z0, int t, const Tensor& eps, const NoiseSchedule& s) {
  if (!z0.same_shape(eps)) {
    throw ShapeError("q_sample: z0 " + shape_str(z0.shape()) + " vs eps " + shape_str(eps.shape()));
  }
  check_timestep(t, s);
  const float a = static_cast<float>(std::sqrt(s.alpha_bar[static_cast<size_t>(t)]));
  const float b = static_cast<float>(std::sqrt(1.0 - s.alpha_bar[static_cast<size_t>(t)]));
  Tensor out(z0.shape());
  for (int64_t i = 0; i < out.numel(); ++i) out[i] = a * z0[i] + b * eps[i];
  return out;
}

Tensor q_sample(const Tensor& z0, std::span<const int> t, const Tensor& eps, const NoiseSchedule& s) {
  if (!z0.same_shape(eps)) {
    throw ShapeError("q_sample: z0 " + shape_str(z0.shape()) + " vs eps " + shape_str(eps.shape()));
  }
  if (z0.rank() < 1 || z0.dim(0) != static_cast<int64_t>(t.size())) {
    throw ShapeError("q_sample: need one timestep per sample");
  }
  const int64_t per = t.empty() ? 0 : z0.numel() / static_cast<int64_t>(t.size());
  Tensor out(z0.shape());
  for (size_t b = 0; b < t.size(); ++b) {
    check_timestep(t[b], s);
    const float ca = static_cast<float>(std::sqrt(s.alpha_bar[static_cast<size_t>(t[b])]));
    const float cb = static_cast<float>(std::sqrt(1.0 - s.alpha_bar[static_cast<size_t>(t[b])]));
    const int64_t off = static_cast<int64_t>(b) * per;
    for (int64_t i = off; i < off + per; ++i) out[i] = ca * z0[i] + cb * eps[i];
  }
  return out;
}

DenoisingLoss denoising_loss(const NoisePredictor& predict, const Tensor& z0, const ConditionBundle& cond,
                             const NoiseSchedule& s, Rng& rng) {
  if (z0.rank() < 1 || z0.dim(0) < 1) throw ShapeError("denoising_loss: empty batch");
  DenoisingLoss out;
  out.t.resize(static_cast<size_t>(z0.dim(0)));
  for (int& ti : out.t) ti = static_cast<int>(rng.uniform_int(1, s.T));
  out.eps = rng.normal_tensor(z0.shape());
  ag::Var z_t(q_sample(z0, out.t, out.eps, s));
  ag::Var pred = predict(z_t, cond, out.t);
  if (pred.shape() != z0.shape()) {
    throw ShapeError("denoising_loss: prediction " + shape_str(pred.shape()) + " vs latent " + shape_str(z0.shape()));
  }
  out.loss = ag::mse(pred, ag::Var(out.eps));
  return out;
}

double posterior_sigma(int t, const NoiseSchedule& s) {
  check_timestep(t, s);
  if (t == 1) return 0.0;
  const auto i = static_cast<size_t>(t);
  const double denom = 1.0 - s.alpha_bar[i];
  if (denom <= 0.0) return 0.0;
  return std::sqrt(s.beta[i] * (1.0 - s.alpha_bar[i - 1]) / denom);
}

Tensor reverse_step(const Tensor& z_t, const Tensor& eps_hat, int t, const NoiseSchedule& s, const Tensor& noise) {
  check_timestep(t, s);
  if (!z_t.same_shape(eps_hat)) throw ShapeError("reverse_step: eps_hat shape mismatch");
  const auto i = static_cast<size_t>(t);
  const double beta = s.beta[i];
  const double sigma = posterior_sigma(t, s);
  if (sigma != 0.0 && !z_t.same_shape(noise)) throw ShapeError("reverse_step: noise shape mismatch");
  if (beta == 0.0) return z_t;
  const float c1 = static_cast<float>(1.0 / std::sqrt(s.alpha[i]));
  const float c2 = static_cast<float>(beta / std::sqrt(1.0 - s.alpha_bar[i]));
  const float sg = static_cast<float>(sigma);
  Tensor out(z_t.shape());
  for (int64_t k = 0; k < out.numel(); ++k) {
    out[k] = c1 * (z_t[k] - c2 * eps_hat[k]);
    if (sg != 0.0f) out[k] += sg * noise[k];
  }
  return out;
}

SamplingPlan respace(const NoiseSchedule& s, int steps) {
  if (steps < 1 || steps > s.T) {
    throw RangeError("sampling steps must be in [1, " + std::to_string(s.T) + "], got " + std::to_string(steps));
  }
  SamplingPlan plan;
  if (steps == s.T) {
    for (int t = 1; t <= s.T; ++t) plan.timesteps.push_back(t);
    plan.schedule = s;
    return plan;
  }
  if (steps == 1) {
    plan.timesteps = {1};
  } else {
    for (int i = 0; i < steps; ++i) {
      const double pos = 1.0 + static_cast<double>(s.T - 1) * i / (steps - 1);
      plan.timesteps.push_back(static_cast<int>(std::lround(pos)));
    }
  }
  std::vector<double> betas;
  double prev = 1.0;
  for (int t : plan.timesteps) {
    const double ab = s.alpha_bar[static_cast<size_t>(t)];
    betas.push_back(1.0 - ab / prev);
    prev = ab;
  }
  plan.schedule = NoiseSchedule::from_betas(betas);
  return plan;
}

}  // namespace univid
