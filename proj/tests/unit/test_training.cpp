#include <string>
#include <vector>

#include "doctest.h"
#include "helpers.hpp"
#include "univid/error.hpp"
#include "univid/training.hpp"

using namespace univid;

namespace {

RunConfig tiny_run(int steps = 4) {
  RunConfig rc;
  rc.seed = 3;
  rc.widths = {8, 16, 16, 16};
  rc.heads = 2;
  rc.cond_dim = 8;
  rc.text_max_len = 8;
  rc.image_patch = 8;
  rc.timesteps = 50;
  rc.beta_min = 1e-3;
  rc.beta_max = 0.05;
  for (auto s : {TrainingStage::kT2V, TrainingStage::kAdapters, TrainingStage::kJoint}) {
    StagePlan p;
    p.stage = s;
    p.steps = steps;
    p.lr = 0.05;
    p.grad_clip = 1.0;
    if (s == TrainingStage::kJoint) {
      p.image_fraction = 0.5;
      p.video_fraction = 0.5;
    }
    rc.stages[s] = p;
  }
  return rc;
}

TrainingData tiny_data(int frames) {
  TrainingData d;
  d.vocab = Vocabulary::synthetic();
  d.geometry = {frames, 3, 16, 16};
  for (uint64_t seed : {1u, 2u}) {
    ClipSpec spec;
    spec.frames = frames;
    spec.height = spec.width = 16;
    spec.color = seed == 1 ? "red" : "blue";
    const Clip c = gen_clip(spec, seed);
    d.clips.push_back(c.video);
    d.captions.push_back(d.vocab.encode(c.caption));
  }
  return d;
}

std::vector<std::string> changed(const std::map<std::string, Tensor>& before, const ParameterStore& store) {
  std::vector<std::string> out;
  for (const auto& p : store.params())
    if (!p.var.value().bitwise_equal(before.at(p.name))) out.push_back(p.name);
  return out;
}

Batch fixed_batch(const TrainingData& d, InputKind kind) {
  StagePlan p;
  p.image_fraction = kind == InputKind::kImage ? 1.0 : 0.0;
  p.video_fraction = 1.0 - p.image_fraction;
  Rng rng(9);
  return sample_batch(d, p, rng);
}

}  // namespace

TEST_CASE("train_step: image batches leave temporal and conditioning weights untouched") {
  const RunConfig rc = tiny_run();
  const TrainingData d = tiny_data(4);
  UniVidModel m(model_config(rc, d.geometry, d.vocab.size()), 1);
  OptimizerState opt;
  Rng rng(4);
  // Build up momentum on every group first.
  StagePlan joint = rc.plan(TrainingStage::kJoint);
  train_step(m, fixed_batch(d, InputKind::kVideo), joint, opt, rc.schedule(), rc.codec, rng);

  for (auto stage : {TrainingStage::kT2V, TrainingStage::kJoint}) {
    const auto before = m.store().snapshot();
    StagePlan p = rc.plan(stage);
    const Batch b = fixed_batch(d, InputKind::kImage);
    REQUIRE(b.pixels.dim(1) == 1);
    const StepResult r = train_step(m, b, p, opt, rc.schedule(), rc.codec, rng);
    CHECK(r.kind == InputKind::kImage);
    const auto moved = changed(before, m.store());
    CHECK_FALSE(moved.empty());
    for (const auto& n : moved) CHECK(m.store().get(n).group == ParamGroup::kSpatial);
  }
}

TEST_CASE("train_step: the adapters stage moves only conditioning weights") {
  const RunConfig rc = tiny_run();
  const TrainingData d = tiny_data(4);
  UniVidModel m(model_config(rc, d.geometry, d.vocab.size()), 2);
  OptimizerState opt;
  Rng rng(5);
  train_step(m, fixed_batch(d, InputKind::kVideo), rc.plan(TrainingStage::kJoint), opt, rc.schedule(), rc.codec, rng);
  StagePlan p = rc.plan(TrainingStage::kAdapters);
  p.p_drop_text = p.p_drop_image = 0.0;
  const auto before = m.store().snapshot();
  train_step(m, fixed_batch(d, InputKind::kVideo), p, opt, rc.schedule(), rc.codec, rng);
  const auto moved = changed(before, m.store());
  CHECK_FALSE(moved.empty());
  for (const auto& n : moved) CHECK(m.store().get(n).group == ParamGroup::kConditioning);

  CHECK_THROWS_AS(train_step(m, fixed_batch(d, InputKind::kImage), p, opt, rc.schedule(), rc.codec, rng), ConfigError);
  StagePlan bad = p;
  bad.image_fraction = 0.2;
  bad.video_fraction = 0.8;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  RunConfig images_only = tiny_run();
  CHECK_THROWS_AS(run_stage(m, tiny_data(1), images_only, TrainingStage::kAdapters, opt, RunOptions{}), ConfigError);
}

TEST_CASE("train_step: t2v video steps leave conditioning weights untouched") {
  const RunConfig rc = tiny_run();
  const TrainingData d = tiny_data(4);
  UniVidModel m(model_config(rc, d.geometry, d.vocab.size()), 3);
  OptimizerState opt;
  Rng rng(6);
  const auto before = m.store().snapshot();
  train_step(m, fixed_batch(d, InputKind::kVideo), rc.plan(TrainingStage::kT2V), opt, rc.schedule(), rc.codec, rng);
  bool temporal_moved = false;
  for (const auto& n : changed(before, m.store())) {
    CHECK(m.store().get(n).group != ParamGroup::kConditioning);
    temporal_moved = temporal_moved || m.store().get(n).group == ParamGroup::kTemporal;
  }
  CHECK(temporal_moved);
}

TEST_CASE("train_step: condition dropout frequency") {
  const RunConfig rc = tiny_run();
  const TrainingData d = tiny_data(1);
  UniVidModel m(model_config(rc, d.geometry, d.vocab.size()), 4);
  OptimizerState opt;
  StagePlan p = rc.plan(TrainingStage::kJoint);
  p.p_drop_text = 0.3;
  p.p_drop_image = 0.6;
  p.lr = 1e-4;
  const int n = 400;
  int text = 0, image = 0;
  Rng rng(7);
  for (int i = 0; i < n; ++i) {
    const Batch b = sample_batch(d, p, rng);
    const StepResult r = train_step(m, b, p, opt, rc.schedule(), rc.codec, rng);
    text += r.dropped_text;
    image += r.dropped_image;
  }
  auto near = [&](int count, double prob) {
    return std::abs(count - n * prob) <= 4.0 * std::sqrt(n * prob * (1.0 - prob));
  };
  CHECK(near(text, 0.3));
  CHECK(near(image, 0.6));
}

TEST_CASE("run_stage: resuming from a checkpoint repeats the uninterrupted run") {
  const RunConfig rc = tiny_run(6);
  const TrainingData d = tiny_data(4);
  const auto dir = testutil::temp_dir("resume");

  UniVidModel full(model_config(rc, d.geometry, d.vocab.size()), rc.seed);
  OptimizerState opt_full;
  const StageResult all = run_stage(full, d, rc, TrainingStage::kT2V, opt_full, RunOptions{});

  RunConfig half_rc = rc;
  half_rc.stages[TrainingStage::kT2V].steps = 3;
  UniVidModel half(model_config(rc, d.geometry, d.vocab.size()), rc.seed);
  OptimizerState opt_half;
  RunOptions first;
  first.out = dir / "a";
  const StageResult head = run_stage(half, d, half_rc, TrainingStage::kT2V, opt_half, first);
  REQUIRE(head.losses.size() == 3);

  LoadedRun loaded = load_training_checkpoint(dir / "a" / "ckpt-3");
  CHECK(loaded.step == 3);
  CHECK(loaded.stage == TrainingStage::kT2V);
  CHECK(loaded.geometry.frames == 4);
  CHECK(loaded.vocab.tokens() == d.vocab.tokens());
  RunOptions rest;
  rest.start_step = 3;
  const StageResult tail = run_stage(*loaded.model, d, rc, TrainingStage::kT2V, loaded.optimizer, rest);
  REQUIRE(tail.losses.size() == 3);
  for (int i = 0; i < 3; ++i) {
    CHECK(head.losses[static_cast<size_t>(i)] == all.losses[static_cast<size_t>(i)]);
    CHECK(tail.losses[static_cast<size_t>(i)] == all.losses[static_cast<size_t>(i + 3)]);
  }
  for (const auto& p : full.store().params())
    CHECK(loaded.model->store().get(p.name).var.value().bitwise_equal(p.var.value()));

  const std::string metrics = read_text(dir / "a" / "metrics.csv");
  CHECK(metrics.rfind("step,loss,stage\n1,", 0) == 0);
}

TEST_CASE("run config: round trip and errors that name the key") {
  const RunConfig rc = tiny_run();
  const Config c = rc.to_config();
  CHECK(c.values().size() == RunConfig::keys().size());
  CHECK(RunConfig::from_config(c).to_config().resolved() == c.resolved());
  CHECK(RunConfig::from_config(c).to_config().hash() == c.hash());

  auto message = [](const Config& cfg) {
    try {
      (void)RunConfig::from_config(cfg);
    } catch (const ConfigError& e) {
      return std::string(e.what());
    }
    return std::string();
  };
  Config missing = Config::parse(c.resolved());
  std::map<std::string, std::string> kept = missing.values();
  kept.erase("diffusion.beta_max");
  std::string text;
  for (const auto& [k, v] : kept) text += k + "=" + v + "\n";
  CHECK(message(Config::parse(text)).find("diffusion.beta_max") != std::string::npos);

  Config extra = c;
  extra.set("model.depth", "3");
  CHECK(message(extra).find("model.depth") != std::string::npos);

  Config bad_stage = c;
  bad_stage.set("train.joint.image_fraction", "0.9");
  CHECK(message(bad_stage).find("joint") != std::string::npos);

  Config bad_output = c;
  bad_output.set("model.output", "velocity");
  CHECK(message(bad_output).find("model.output") != std::string::npos);

  Config bad_width = c;
  bad_width.set("model.width.f2", "15");
  CHECK(message(bad_width).find("model.width") != std::string::npos);

  Config bad_pyramid = c;
  bad_pyramid.set("pyramid.f2.k", "2");
  CHECK(message(bad_pyramid).find("pyramid.f2") != std::string::npos);

  Config bad_beta = c;
  bad_beta.set("diffusion.beta_max", "1.5");
  CHECK(message(bad_beta).find("diffusion") != std::string::npos);
}

TEST_CASE("sample_batch: kinds, references and geometry") {
  const TrainingData d = tiny_data(4);
  StagePlan p;
  p.image_fraction = 0.5;
  p.video_fraction = 0.5;
  p.batch = 2;
  Rng rng(8);
  int images = 0;
  for (int i = 0; i < 200; ++i) {
    const Batch b = sample_batch(d, p, rng);
    CHECK(b.pixels.dim(0) == 2);
    CHECK(b.captions.size() == 2);
    if (b.kind == InputKind::kImage) {
      ++images;
      CHECK(b.pixels.dim(1) == 1);
      CHECK(std::equal(b.references.data(), b.references.data() + b.references.numel(), b.pixels.data()));
    } else {
      CHECK(b.pixels.dim(1) == 4);
      const int64_t frame = 3 * 16 * 16;
      CHECK(std::equal(b.references.data(), b.references.data() + frame, b.pixels.data()));
    }
  }
  CHECK(images > 60);
  CHECK(images < 140);
  CHECK_THROWS_AS(sample_batch(TrainingData{}, p, rng), ShapeError);
}
