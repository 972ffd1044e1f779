#pragma once

#include <utility>
#include <vector>

#include "univid/dataio.hpp"
#include "univid/diffusion.hpp"
#include "univid/unet.hpp"

namespace univid {

struct GenerateRequest {
  GenerationMode mode = GenerationMode::kT2V;
  std::vector<int64_t> prompt;  // empty = absent
  Tensor image;                 // [3, H, W] in [0, 1]; empty = absent
  float lambda_t = 1.0f;
  float lambda_v = 0.0f;
  int steps = 50;
  float scale = 1.0f;  // classifier-free guidance
  uint64_t seed = 0;
  int frames = 8;
  // Clamp the implied clean latent to [-1, 1] before each step.
  bool clip_denoised = true;
};

// Noise estimate consistent with the clean latent implied by eps_hat at t,
// clamped to [-1, 1].
Tensor clip_noise_estimate(const Tensor& z_t, const Tensor& eps_hat, int t, const NoiseSchedule& s);

// Checks that the inputs the mode needs are present and the weights are valid.
void validate_request(const GenerateRequest& req);

// Condition the request's mode uses; streams outside the mode stay absent.
ConditionBundle request_condition(const UniVidModel& model, const GenerateRequest& req);

// Latent-space reverse process from seeded noise: [1, F, C', H', W'].
Tensor generate_latent(const UniVidModel& model, const NoiseSchedule& schedule, CodecKind codec,
                       const GenerateRequest& req);

// Decoded video [F, 3, H, W] clamped to [0, 1].
Tensor generate(const UniVidModel& model, const NoiseSchedule& schedule, CodecKind codec, const GenerateRequest& req);

struct SweepResult {
  std::vector<std::pair<float, float>> grid;
  std::vector<Tensor> videos;
  // Mean absolute difference between consecutive grid entries.
  std::vector<double> divergence;
};

// One ti2v generation per (lambda_t, lambda_v), all from the same seed.
SweepResult lambda_sweep(const UniVidModel& model, const NoiseSchedule& schedule, CodecKind codec,
                         const GenerateRequest& base, const std::vector<std::pair<float, float>>& grid);

}  // namespace univid
