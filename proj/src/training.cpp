#include "univid/training.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include "univid/error.hpp"
#include "univid/ops.hpp"

namespace univid {
namespace {

constexpr std::array<TrainingStage, 3> kStages{TrainingStage::kT2V, TrainingStage::kAdapters, TrainingStage::kJoint};
const char* const kStageFields[] = {"steps",       "lr",           "momentum", "image_fraction",   "video_fraction",
                                    "p_drop_text", "p_drop_image", "batch",    "checkpoint_every", "grad_clip"};

std::string num(double v) {
  char buf[32];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

int stage_index(TrainingStage s) { return static_cast<int>(s) + 1; }

bool in_unit(double p) { return p >= 0.0 && p <= 1.0; }

std::string key_of(TrainingStage s, const char* field) { return "train." + stage_name(s) + "." + field; }

}  // namespace

void StagePlan::validate() const {
  const std::string where = "stage " + stage_name(stage) + ": ";
  if (steps < 0) throw ConfigError(where + "steps must be >= 0");
  if (!(lr > 0.0)) throw ConfigError(where + "lr must be positive");
  if (!in_unit(momentum) || momentum >= 1.0) throw ConfigError(where + "momentum must be in [0, 1)");
  if (!in_unit(image_fraction) || !in_unit(video_fraction) || std::abs(image_fraction + video_fraction - 1.0) > 1e-9) {
    throw ConfigError(where + "image_fraction and video_fraction must lie in [0, 1] and sum to 1");
  }
  if (!in_unit(p_drop_text) || !in_unit(p_drop_image)) throw ConfigError(where + "drop probabilities must lie in [0, 1]");
  if (batch < 1) throw ConfigError(where + "batch must be >= 1");
  if (checkpoint_every < 0) throw ConfigError(where + "checkpoint_every must be >= 0");
  if (grad_clip < 0.0) throw ConfigError(where + "grad_clip must be >= 0");
  if (stage == TrainingStage::kAdapters && image_fraction > 0.0) {
    throw ConfigError(where + "the adapters stage trains on video batches only (image_fraction must be 0)");
  }
}

std::set<std::string> RunConfig::keys() {
  std::set<std::string> k = {"seed",           "codec",          "model.width.f1",     "model.width.f2",
                             "model.width.f4", "model.width.f8", "model.heads",        "model.cond_dim",
                             "model.text_max_len", "model.image_patch", "model.output", "diffusion.timesteps", "diffusion.beta_min",
                             "diffusion.beta_max"};
  for (int f : kPyramidFactors) {
    k.insert("pyramid.f" + std::to_string(f) + ".r");
    k.insert("pyramid.f" + std::to_string(f) + ".k");
  }
  for (auto s : kStages)
    for (const char* field : kStageFields) k.insert(key_of(s, field));
  return k;
}

RunConfig RunConfig::from_config(const Config& c) {
  c.require_exactly(keys());
  RunConfig rc;
  rc.seed = static_cast<uint64_t>(c.get_int("seed"));
  rc.codec = parse_codec(c.get_string("codec"));
  for (size_t i = 0; i < 4; ++i) rc.widths[i] = c.get_int("model.width.f" + std::to_string(kPyramidFactors[i]));
  rc.heads = static_cast<int>(c.get_int("model.heads"));
  rc.cond_dim = c.get_int("model.cond_dim");
  rc.text_max_len = c.get_int("model.text_max_len");
  rc.image_patch = c.get_int("model.image_patch");
  if (rc.heads < 1) throw ConfigError("model.heads must be >= 1");
  for (int64_t w : rc.widths)
    if (w < 1 || w % rc.heads != 0) throw ConfigError("model.width.* must be positive multiples of model.heads");
  if (rc.cond_dim < 1 || rc.cond_dim % rc.heads != 0) throw ConfigError("model.cond_dim must be a positive multiple of model.heads");
  if (rc.text_max_len < 1) throw ConfigError("model.text_max_len must be >= 1");
  if (rc.image_patch < 1) throw ConfigError("model.image_patch must be >= 1");
  try {
    rc.output = parse_output_kind(c.get_string("model.output"));
  } catch (const RangeError& e) {
    throw ConfigError(std::string("model.output: ") + e.what());
  }
  for (int f : kPyramidFactors) {
    const std::string base = "pyramid.f" + std::to_string(f);
    const int64_t r = c.get_int(base + ".r"), k = c.get_int(base + ".k");
    try {
      rc.pyramid.set(f, {static_cast<int>(r), static_cast<int>(k)});
    } catch (const Error& e) {
      throw ConfigError(base + ": " + e.what());
    }
  }
  rc.timesteps = static_cast<int>(c.get_int("diffusion.timesteps"));
  rc.beta_min = c.get_double("diffusion.beta_min");
  rc.beta_max = c.get_double("diffusion.beta_max");
  try {
    (void)rc.schedule();
  } catch (const Error& e) {
    throw ConfigError(std::string("diffusion: ") + e.what());
  }
  for (auto s : kStages) {
    StagePlan p;
    p.stage = s;
    p.steps = static_cast<int>(c.get_int(key_of(s, "steps")));
    p.lr = c.get_double(key_of(s, "lr"));
    p.momentum = c.get_double(key_of(s, "momentum"));
    p.image_fraction = c.get_double(key_of(s, "image_fraction"));
    p.video_fraction = c.get_double(key_of(s, "video_fraction"));
    p.p_drop_text = c.get_double(key_of(s, "p_drop_text"));
    p.p_drop_image = c.get_double(key_of(s, "p_drop_image"));
    p.batch = static_cast<int>(c.get_int(key_of(s, "batch")));
    p.checkpoint_every = static_cast<int>(c.get_int(key_of(s, "checkpoint_every")));
    p.grad_clip = c.get_double(key_of(s, "grad_clip"));
    p.validate();
    rc.stages[s] = p;
  }
  return rc;
}

Config RunConfig::to_config() const {
  Config c;
  c.set("seed", std::to_string(seed));
  c.set("codec", codec_name(codec));
  for (size_t i = 0; i < 4; ++i) c.set("model.width.f" + std::to_string(kPyramidFactors[i]), std::to_string(widths[i]));
  c.set("model.heads", std::to_string(heads));
  c.set("model.cond_dim", std::to_string(cond_dim));
  c.set("model.text_max_len", std::to_string(text_max_len));
  c.set("model.image_patch", std::to_string(image_patch));
  c.set("model.output", output_kind_name(output));
  for (int f : kPyramidFactors) {
    const std::string base = "pyramid.f" + std::to_string(f);
    c.set(base + ".r", std::to_string(pyramid.at(f).step));
    c.set(base + ".k", std::to_string(pyramid.at(f).kernel));
  }
  c.set("diffusion.timesteps", std::to_string(timesteps));
  c.set("diffusion.beta_min", num(beta_min));
  c.set("diffusion.beta_max", num(beta_max));
  for (auto s : kStages) {
    const StagePlan& p = plan(s);
    c.set(key_of(s, "steps"), std::to_string(p.steps));
    c.set(key_of(s, "lr"), num(p.lr));
    c.set(key_of(s, "momentum"), num(p.momentum));
    c.set(key_of(s, "image_fraction"), num(p.image_fraction));
    c.set(key_of(s, "video_fraction"), num(p.video_fraction));
    c.set(key_of(s, "p_drop_text"), num(p.p_drop_text));
    c.set(key_of(s, "p_drop_image"), num(p.p_drop_image));
    c.set(key_of(s, "batch"), std::to_string(p.batch));
    c.set(key_of(s, "checkpoint_every"), std::to_string(p.checkpoint_every));
    c.set(key_of(s, "grad_clip"), num(p.grad_clip));
  }
  return c;
}

NoiseSchedule RunConfig::schedule() const { return make_schedule(timesteps, beta_min, beta_max); }

const StagePlan& RunConfig::plan(TrainingStage s) const {
  auto it = stages.find(s);
  if (it == stages.end()) throw ConfigError("no plan for stage " + stage_name(s));
  return it->second;
}

UNetConfig model_config(const RunConfig& rc, const DataGeometry& g, int64_t vocab_size) {
  UNetConfig m;
  const Shape latent = latent_shape({g.channels, g.height, g.width}, rc.codec);
  m.latent_channels = latent[0];
  m.channels = rc.widths;
  m.heads = rc.heads;
  m.cond_dim = rc.cond_dim;
  m.vocab_size = vocab_size;
  m.text_max_len = rc.text_max_len;
  m.image_channels = g.channels;
  m.image_height = g.height;
  m.image_width = g.width;
  m.image_patch = rc.image_patch;
  m.pyramid = rc.pyramid;
  m.output = rc.output;
  m.alpha_bar = rc.schedule().alpha_bar;
  return m;
}

TrainingData TrainingData::from_dataset(const Dataset& ds) {
  TrainingData d;
  d.vocab = ds.vocab();
  for (size_t i = 0; i < ds.size(); ++i) {
    Tensor clip = ds.clip(i);
    if (i == 0) {
      d.geometry = {static_cast<int>(clip.dim(0)), static_cast<int>(clip.dim(1)), static_cast<int>(clip.dim(2)),
                    static_cast<int>(clip.dim(3))};
    } else if (clip.dim(0) != d.geometry.frames || clip.dim(2) != d.geometry.height ||
               clip.dim(3) != d.geometry.width) {
      throw ShapeError("dataset clips must share one geometry; clip " + std::to_string(i) + " is " +
                       shape_str(clip.shape()));
    }
    d.clips.push_back(std::move(clip));
    d.captions.push_back(d.vocab.encode(ds.caption(i)));
  }
  return d;
}

Batch sample_batch(const TrainingData& data, const StagePlan& plan, Rng& rng) {
  if (data.clips.empty()) throw ShapeError("training data holds no clips");
  const bool image = data.geometry.frames == 1 || rng.bernoulli(plan.image_fraction);
  const int64_t B = plan.batch, C = data.geometry.channels, H = data.geometry.height, W = data.geometry.width;
  const int64_t F = image ? 1 : data.geometry.frames;
  Batch b;
  b.kind = image ? InputKind::kImage : InputKind::kVideo;
  b.pixels = Tensor({B, F, C, H, W});
  b.references = Tensor({B, C, H, W});
  const int64_t frame = C * H * W;
  for (int64_t i = 0; i < B; ++i) {
    const auto idx = static_cast<size_t>(rng.uniform_int(0, static_cast<int64_t>(data.clips.size()) - 1));
    const Tensor& clip = data.clips[idx];
    const int64_t first = image ? rng.uniform_int(0, clip.dim(0) - 1) : 0;
    std::copy_n(clip.data() + first * frame, F * frame, b.pixels.data() + i * F * frame);
    std::copy_n(clip.data() + first * frame, frame, b.references.data() + i * frame);
    b.captions.push_back(data.captions[idx]);
  }
  const size_t len = b.captions[0].size();
  for (const auto& c : b.captions)
    if (c.size() != len) throw ShapeError("captions in one batch must have equal length");
  return b;
}

StepResult train_step(UniVidModel& model, const Batch& batch, const StagePlan& plan, OptimizerState& opt,
                      const NoiseSchedule& schedule, CodecKind codec, Rng& rng) {
  if (batch.pixels.empty() || batch.pixels.dim(0) < 1) throw ShapeError("train_step: empty batch");
  if (plan.stage == TrainingStage::kAdapters && batch.kind == InputKind::kImage) {
    throw ConfigError("the adapters stage needs video batches, got an image batch");
  }
  ParameterStore& store = model.store();
  const std::vector<std::string> names = select_trainable(store, batch.kind, plan.stage);
  store.set_trainable(names);
  store.zero_grad();

  StepResult res;
  res.kind = batch.kind;
  res.dropped_text = rng.bernoulli(plan.p_drop_text);
  res.dropped_image = rng.bernoulli(plan.p_drop_image);
  const bool use_text = !res.dropped_text;
  const bool use_image = plan.stage != TrainingStage::kT2V && !res.dropped_image;
  ConditionBundle cond = model.condition(use_text ? batch.captions : std::vector<std::vector<int64_t>>{},
                                         use_image ? batch.references : Tensor(), use_text ? 1.0f : 0.0f,
                                         use_image ? 1.0f : 0.0f);

  const Tensor z0 = codec_encode(to_signed(batch.pixels), codec);
  ForwardOptions fo{ReferenceMode::kTrainRandom, &rng};
  NoisePredictor predict = [&](const ag::Var& z, const ConditionBundle& c, std::span<const int> t) {
    return model.forward(z, t, c, fo);
  };
  DenoisingLoss dl = denoising_loss(predict, z0, cond, schedule, rng);
  res.loss = dl.loss.value()[0];
  if (!std::isfinite(res.loss)) {
    std::ostringstream msg;
    msg << "non-finite loss in stage " << stage_name(plan.stage) << " (t =";
    for (int t : dl.t) msg << ' ' << t;
    msg << ", " << (batch.kind == InputKind::kImage ? "image" : "video") << " batch)";
    store.set_trainable({});
    throw Error(msg.str());
  }
  ag::backward(dl.loss);

  double scale = 1.0;
  if (plan.grad_clip > 0.0) {
    double sq = 0.0;
    for (const auto& n : names) sq += squared_norm(store.get(n).var.grad());
    const double norm = std::sqrt(sq);
    if (norm > plan.grad_clip) scale = plan.grad_clip / norm;
  }
  const float mu = static_cast<float>(plan.momentum), lr = static_cast<float>(plan.lr), gs = static_cast<float>(scale);
  for (const auto& n : names) {
    ag::Var& v = store.get(n).var;
    const Tensor g = v.grad();
    Tensor& vel = opt.velocity[n];
    if (vel.empty()) vel = Tensor(g.shape());
    Tensor& w = v.mutable_value();
    for (int64_t i = 0; i < w.numel(); ++i) {
      vel[i] = mu * vel[i] + gs * g[i];
      w[i] -= lr * vel[i];
    }
  }
  store.zero_grad();
  store.set_trainable({});
  return res;
}

StageResult run_stage(UniVidModel& model, const TrainingData& data, const RunConfig& rc, TrainingStage stage,
                      OptimizerState& opt, const RunOptions& options) {
  const StagePlan& plan = rc.plan(stage);
  plan.validate();
  if (stage == TrainingStage::kAdapters && data.geometry.frames == 1) {
    throw ConfigError("the adapters stage needs video data; this dataset holds single images");
  }
  const NoiseSchedule schedule = rc.schedule();
  const bool files = !options.out.empty();
  std::ofstream metrics;
  if (files) {
    std::error_code ec;
    fs::create_directories(options.out, ec);
    if (ec) throw IoError("cannot create run directory " + options.out.string() + ": " + ec.message());
    const Config resolved = rc.to_config();
    write_text(options.out / "config.resolved", resolved.resolved());
    const fs::path mpath = options.out / "metrics.csv";
    std::string kept = "step,loss,stage\n";
    if (options.start_step > 0 && fs::exists(mpath)) {
      std::istringstream old(read_text(mpath));
      std::string line;
      std::getline(old, line);
      while (std::getline(old, line)) {
        const auto comma = line.find(',');
        if (comma == std::string::npos) continue;
        if (std::stoi(line.substr(0, comma)) <= options.start_step) kept += line + "\n";
      }
    }
    write_text(mpath, kept);
    metrics.open(mpath, std::ios::app);
    if (!metrics) throw IoError("cannot append to " + mpath.string());
  }

  StageResult result;
  for (int step = options.start_step + 1; step <= plan.steps; ++step) {
    Rng rng = Rng::derive(rc.seed, static_cast<uint64_t>(stage_index(stage)), static_cast<uint64_t>(step));
    const Batch batch = sample_batch(data, plan, rng);
    const StepResult sr = train_step(model, batch, plan, opt, schedule, rc.codec, rng);
    result.losses.push_back(sr.loss);
    if (files) {
      char buf[64];
      std::snprintf(buf, sizeof buf, "%.9g", sr.loss);
      metrics << step << ',' << buf << ',' << stage_name(stage) << '\n' << std::flush;
      const bool due = plan.checkpoint_every > 0 && step % plan.checkpoint_every == 0;
      if (due || step == plan.steps) {
        save_training_checkpoint(options.out / ("ckpt-" + std::to_string(step)), model, opt, rc, data.geometry,
                                 data.vocab, stage, step);
      }
    }
    if (options.on_step) options.on_step(step, sr.loss);
  }
  if (files && plan.steps == options.start_step && plan.steps == 0) {
    save_training_checkpoint(options.out / "ckpt-0", model, opt, rc, data.geometry, data.vocab, stage, 0);
  }
  return result;
}

void save_training_checkpoint(const fs::path& dir, const UniVidModel& model, const OptimizerState& opt,
                              const RunConfig& rc, const DataGeometry& g, const Vocabulary& vocab,
                              TrainingStage stage, int step) {
  const Config resolved = rc.to_config();
  std::map<std::string, std::string> extras = {
      {"stage", stage_name(stage)},         {"step", std::to_string(step)},
      {"data.frames", std::to_string(g.frames)}, {"data.channels", std::to_string(g.channels)},
      {"data.height", std::to_string(g.height)}, {"data.width", std::to_string(g.width)}};
  save_checkpoint(dir, model.store(), resolved.hash(), extras);
  write_text(dir / "config.resolved", resolved.resolved());
  vocab.save((dir / "vocab.txt").string());
  ParameterStore vel;
  for (const auto& [name, t] : opt.velocity) vel.add(name, model.store().get(name).group, t);
  save_checkpoint(dir / "optim", vel, resolved.hash());
}

LoadedRun load_training_checkpoint(const fs::path& dir) {
  Checkpoint ck = load_checkpoint(dir);
  const Config cfg = Config::load(dir / "config.resolved");
  if (cfg.hash() != ck.config_hash) {
    throw FormatError("checkpoint " + dir.string() + ": config.resolved does not match the manifest config hash");
  }
  LoadedRun run;
  run.config = RunConfig::from_config(cfg);
  auto extra = [&](const std::string& key) {
    auto it = ck.extras.find(key);
    if (it == ck.extras.end()) throw FormatError("checkpoint " + dir.string() + " lacks extra '" + key + "'");
    return it->second;
  };
  run.geometry = {std::stoi(extra("data.frames")), std::stoi(extra("data.channels")), std::stoi(extra("data.height")),
                  std::stoi(extra("data.width"))};
  run.stage = parse_stage(extra("stage"));
  run.step = std::stoi(extra("step"));
  run.vocab = Vocabulary::load((dir / "vocab.txt").string());
  run.model = std::make_unique<UniVidModel>(model_config(run.config, run.geometry, run.vocab.size()), run.config.seed);
  run.model->store().assign(ck.store);
  if (fs::exists(dir / "optim" / "manifest.txt")) {
    Checkpoint oc = load_checkpoint(dir / "optim");
    for (const auto& p : oc.store.params()) {
      const auto& target = run.model->store().get(p.name);
      if (target.var.shape() != p.var.shape()) throw ShapeError("optimizer state for '" + p.name + "' has the wrong shape");
      run.optimizer.velocity[p.name] = p.var.value();
    }
  }
  return run;
}

}  // namespace univid
