#pragma once

#include <array>
#include <span>
#include <string>
#include <vector>

#include "univid/conditioning.hpp"
#include "univid/pyramid.hpp"

namespace univid {

// What the last layer regresses. kClean outputs are converted to a noise
// estimate with the schedule and kResidual adds sqrt(1 - ab) z_t, so callers
// always receive eps_hat.
enum class OutputKind { kNoise, kClean, kResidual };

struct UNetConfig {
  int64_t latent_channels = 12;
  // Widths at f = 1, 2, 4, 8.
  std::array<int64_t, 4> channels{32, 64, 128, 128};
  int heads = 4;
  int64_t cond_dim = 32;
  int64_t vocab_size = 32;
  int64_t text_max_len = 16;
  int64_t image_channels = 3;
  int64_t image_height = 32;
  int64_t image_width = 32;
  int64_t image_patch = 8;
  PyramidSchedule pyramid = PyramidSchedule::default_table();
  OutputKind output = OutputKind::kNoise;
  std::vector<double> alpha_bar;  // indexed by timestep; needed unless kNoise

  int64_t time_dim() const { return 4 * channels[0]; }
};

struct STBlockConfig {
  int factor = 1;
  int64_t in_channels = 0;
  int64_t channels = 0;
  int kernel = 1;  // k_f
  int heads = 1;
};

struct STBlock {
  STBlockConfig cfg;
  PstConvParams conv;
  ag::Var scale_w, scale_b, shift_w, shift_b;  // timestep embedding -> modulation
  AttentionParams self_attn;
  AttentionParams pst_attn;
  DualCrossAttentionParams cross;
  AttentionParams temporal_attn;

  // Spatial weights random; temporal taps Dirac; pyramid attention, temporal
  // attention and image-stream outputs start at zero.
  static STBlock create(ParameterStore& store, const std::string& prefix, const STBlockConfig& cfg, int64_t cond_dim,
                        int64_t time_dim, Rng& rng);
};

struct ForwardOptions {
  ReferenceMode mode = ReferenceMode::kInferMid;
  Rng* rng = nullptr;  // required for kTrainRandom
};

// PSTConv -> SelfAttn -> PSTAttn -> CrossAttn_dual -> TemAttn, each residual.
// `step` is r_f for this clip length; t_act is SiLU of the timestep embedding.
ag::Var st_block_forward(const ag::Var& z, const ag::Var& t_act, const ConditionBundle& cond, const STBlock& block,
                         int step, const ForwardOptions& opts);

// Noise predictor: encoder f = 1, 2, 4, middle f = 8, decoder f = 4, 2, 1 with
// skip concatenation. Owns every parameter, including the prompt encoders.
class UniVidModel {
 public:
  explicit UniVidModel(UNetConfig cfg, uint64_t seed = 0);
  UniVidModel(const UniVidModel&) = delete;
  UniVidModel& operator=(const UniVidModel&) = delete;

  const UNetConfig& config() const { return cfg_; }
  ParameterStore& store() { return store_; }
  const ParameterStore& store() const { return store_; }
  const TextEncoder& text_encoder() const { return text_; }
  const ImageEncoder& image_encoder() const { return image_; }
  const std::vector<STBlock>& blocks() const { return blocks_; }

  // z_t [B, F, latent_channels, H, W] -> predicted noise of the same shape.
  ag::Var forward(const ag::Var& z_t, std::span<const int> t, const ConditionBundle& cond,
                  const ForwardOptions& opts = {}) const;

  // Encodes prompts into a bundle. Empty captions / images leave a stream absent.
  // images are [B, C, H, W] pixels in [0, 1].
  ConditionBundle condition(const std::vector<std::vector<int64_t>>& captions, const Tensor& images, float lambda_t,
                            float lambda_v) const;

  // Names of the zero-initialised output projections of novel branches.
  std::vector<std::string> novel_output_names() const;

 private:
  ag::Var time_embedding(std::span<const int> t) const;

  UNetConfig cfg_;
  ParameterStore store_;
  TextEncoder text_;
  ImageEncoder image_;
  ag::Var conv_in_w_, conv_in_b_;
  ag::Var time_w1_, time_b1_, time_w2_, time_b2_;
  std::vector<STBlock> blocks_;  // down f1, f2, f4, mid f8, up f4, f2, f1
  std::array<ag::Var, 3> down_w_, down_b_;
  NormParams out_norm_;
  ag::Var out_w_, out_b_;
};

enum class TrainingStage { kT2V, kAdapters, kJoint };
enum class InputKind { kImage, kVideo };

TrainingStage parse_stage(const std::string& name);
std::string stage_name(TrainingStage s);
OutputKind parse_output_kind(const std::string& name);
std::string output_kind_name(OutputKind k);

// Images update only the spatial group. Videos: t2v -> spatial + temporal,
// adapters -> conditioning, joint -> everything.
std::vector<std::string> select_trainable(const ParameterStore& store, InputKind kind, TrainingStage stage);

}  // namespace univid
