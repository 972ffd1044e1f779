#pragma once

#include <functional>
#include <span>
#include <vector>

#include "univid/autograd.hpp"
#include "univid/conditioning.hpp"
#include "univid/rng.hpp"
#include "univid/tensor.hpp"

namespace univid {

// Per-timestep noise tables, indexed by t in [0, T]. Index 0 is the clean
// sample: beta[0] = 0, alpha[0] = alpha_bar[0] = 1.
struct NoiseSchedule {
  int T = 0;
  std::vector<double> beta;
  std::vector<double> alpha;
  std::vector<double> alpha_bar;

  // betas holds beta_1..beta_T, each in [0, 1].
  static NoiseSchedule from_betas(std::span<const double> betas);
};

// Linear beta ramp from beta_min (t = 1) to beta_max (t = T).
NoiseSchedule make_schedule(int T, double beta_min, double beta_max);

// z_t = sqrt(abar_t) z0 + sqrt(1 - abar_t) eps.
Tensor q_sample(const Tensor& z0, int t, const Tensor& eps, const NoiseSchedule& s);
// Batched form: one timestep per leading-axis sample.
Tensor q_sample(const Tensor& z0, std::span<const int> t, const Tensor& eps, const NoiseSchedule& s);

// Maps (z_t, condition, per-sample timesteps) to a noise estimate shaped like z_t.
using NoisePredictor = std::function<ag::Var(const ag::Var&, const ConditionBundle&, std::span<const int>)>;

struct DenoisingLoss {
  ag::Var loss;
  std::vector<int> t;
  Tensor eps;
};

// Draws t ~ U{1..T} per sample (in sample order), then eps ~ N(0, I) in
// row-major order, and returns mean((predict(z_t) - eps)^2).
DenoisingLoss denoising_loss(const NoisePredictor& predict, const Tensor& z0, const ConditionBundle& cond,
                             const NoiseSchedule& s, Rng& rng);

// Ancestral step z_t -> z_{t-1}. sigma_1 = 0, so noise is ignored at t = 1.
Tensor reverse_step(const Tensor& z_t, const Tensor& eps_hat, int t, const NoiseSchedule& s, const Tensor& noise);
double posterior_sigma(int t, const NoiseSchedule& s);

// Strided reverse process: `timesteps` are the original indices visited
// (ascending, first is 1, last is T when steps >= 2) and `schedule` is the
// matching respaced chain whose step i corresponds to timesteps[i-1].
struct SamplingPlan {
  std::vector<int> timesteps;
  NoiseSchedule schedule;
};

SamplingPlan respace(const NoiseSchedule& s, int steps);

}  // namespace univid
