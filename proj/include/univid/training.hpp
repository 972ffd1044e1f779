#pragma once

#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <set>
#include <string>
#include <vector>

#include "univid/config.hpp"
#include "univid/dataio.hpp"
#include "univid/diffusion.hpp"
#include "univid/unet.hpp"

namespace univid {

struct StagePlan {
  TrainingStage stage = TrainingStage::kT2V;
  int steps = 0;
  double lr = 1e-3;
  double momentum = 0.9;
  double image_fraction = 0.0;
  double video_fraction = 1.0;
  double p_drop_text = 0.1;
  double p_drop_image = 0.1;
  int batch = 1;
  int checkpoint_every = 0;  // 0 = only at the end
  double grad_clip = 0.0;    // global-norm clip; 0 = off

  void validate() const;
};

// Everything a training run is configured by. Clip geometry comes from the data.
struct RunConfig {
  uint64_t seed = 0;
  CodecKind codec = CodecKind::kPatchify2;
  std::array<int64_t, 4> widths{32, 64, 128, 128};
  int heads = 4;
  int64_t cond_dim = 32;
  int64_t text_max_len = 16;
  int64_t image_patch = 8;
  PyramidSchedule pyramid = PyramidSchedule::default_table();
  OutputKind output = OutputKind::kNoise;
  int timesteps = 1000;
  double beta_min = 1e-4;
  double beta_max = 0.02;
  std::map<TrainingStage, StagePlan> stages;

  static std::set<std::string> keys();
  static RunConfig from_config(const Config& c);
  Config to_config() const;
  NoiseSchedule schedule() const;
  const StagePlan& plan(TrainingStage s) const;
};

struct DataGeometry {
  int frames = 8;
  int channels = 3;
  int height = 32;
  int width = 32;
};

UNetConfig model_config(const RunConfig& rc, const DataGeometry& g, int64_t vocab_size);

// One training batch of pixels in [0, 1].
struct Batch {
  InputKind kind = InputKind::kVideo;
  Tensor pixels;      // [B, F, 3, H, W]; F = 1 for image batches
  std::vector<std::vector<int64_t>> captions;
  Tensor references;  // [B, 3, H, W]
};

struct TrainingData {
  std::vector<Tensor> clips;  // [F, 3, H, W] each
  std::vector<std::vector<int64_t>> captions;
  Vocabulary vocab;
  DataGeometry geometry;

  static TrainingData from_dataset(const Dataset& ds);
};

// Draws the batch kind from the plan's fractions, then clips (and a frame for
// image batches). The reference image is frame 0 of the clip, or the frame
// itself for image batches.
Batch sample_batch(const TrainingData& data, const StagePlan& plan, Rng& rng);

struct OptimizerState {
  std::map<std::string, Tensor> velocity;
};

struct StepResult {
  double loss = 0.0;
  InputKind kind = InputKind::kVideo;
  bool dropped_text = false;
  bool dropped_image = false;
};

// One SGD-with-momentum step on select_trainable(kind, stage). Every other
// parameter is left bitwise untouched.
StepResult train_step(UniVidModel& model, const Batch& batch, const StagePlan& plan, OptimizerState& opt,
                      const NoiseSchedule& schedule, CodecKind codec, Rng& rng);

struct RunOptions {
  std::filesystem::path out;  // run directory; empty = no files
  int start_step = 0;         // last completed step when resuming
  std::function<void(int, double)> on_step;
};

struct StageResult {
  std::vector<double> losses;  // steps start_step+1 .. plan.steps
};

// Step s draws all of its randomness from Rng::derive(seed, stage, s), so a
// resumed run repeats the losses of an uninterrupted one.
StageResult run_stage(UniVidModel& model, const TrainingData& data, const RunConfig& rc, TrainingStage stage,
                      OptimizerState& opt, const RunOptions& options);

// Checkpoint with config.resolved, vocab.txt, optimizer state and run extras.
void save_training_checkpoint(const std::filesystem::path& dir, const UniVidModel& model, const OptimizerState& opt,
                              const RunConfig& rc, const DataGeometry& g, const Vocabulary& vocab,
                              TrainingStage stage, int step);

struct LoadedRun {
  RunConfig config;
  DataGeometry geometry;
  Vocabulary vocab;
  std::unique_ptr<UniVidModel> model;
  OptimizerState optimizer;
  TrainingStage stage = TrainingStage::kT2V;
  int step = 0;
};
LoadedRun load_training_checkpoint(const std::filesystem::path& dir);

}  // namespace univid
