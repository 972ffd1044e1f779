// univid command-line front end.
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "univid/config.hpp"
#include "univid/dataio.hpp"
#include "univid/error.hpp"
#include "univid/eval.hpp"
#include "univid/gradcheck.hpp"
#include "univid/parallel.hpp"
#include "univid/sampling.hpp"
#include "univid/training.hpp"

namespace fs = std::filesystem;
using namespace univid;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitRuntime = 2;

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

bool has_suffix(const fs::path& p, const std::string& ext) { return p.extension() == ext; }

// [3, H, W] pixels from a .uvt tensor ([3,H,W] or a clip, whose frame 0 is used) or a one-frame .ppm.
Tensor load_image(const fs::path& path) {
  if (has_suffix(path, ".ppm")) {
    Tensor t = read_ppm_grid(path, 1);
    return t.reshape({3, t.dim(2), t.dim(3)});
  }
  if (!has_suffix(path, ".uvt")) throw UsageError("--image must be a .uvt or .ppm file: " + path.string());
  Tensor t = read_tensor(path);
  if (t.rank() == 3 && t.dim(0) == 3) return t;
  if (t.rank() == 4 && t.dim(1) == 3) {
    Tensor frame({3, t.dim(2), t.dim(3)});
    std::copy_n(t.data(), frame.numel(), frame.data());
    return frame;
  }
  throw ShapeError("--image " + path.string() + ": expected [3,H,W] or [F,3,H,W], got " + shape_str(t.shape()));
}

void write_video(const fs::path& out, const Tensor& video) {
  if (has_suffix(out, ".ppm")) {
    write_ppm_grid(out, video);
  } else if (has_suffix(out, ".uvt")) {
    write_tensor(out, video);
  } else {
    throw UsageError("--out must end in .uvt or .ppm: " + out.string());
  }
}

// ---- gen-data

struct GenDataArgs {
  fs::path out;
  int clips = 16;
  int frames = 8;
  std::vector<int> size{32, 32};
  uint64_t seed = 0;
};

int cmd_gen_data(const GenDataArgs& a) {
  const auto entries = plan_dataset(a.clips, a.frames, a.size[0], a.size[1], a.seed);
  write_dataset(a.out, entries);
  std::printf("wrote %zu clips to %s\n", entries.size(), a.out.string().c_str());
  return kExitOk;
}

// ---- train / init

struct TrainArgs {
  fs::path config;
  std::string stage;
  fs::path data;
  fs::path out;
  fs::path resume;
  fs::path init;
};

struct Prepared {
  RunConfig rc;
  std::string hash;
  TrainingData data;
};

Prepared prepare(const fs::path& config, const fs::path& data_dir) {
  Prepared p;
  const Config cfg = Config::load(config);
  p.rc = RunConfig::from_config(cfg);
  p.hash = p.rc.to_config().hash();
  p.data = TrainingData::from_dataset(Dataset::open(data_dir));
  return p;
}

std::unique_ptr<UniVidModel> restore(const fs::path& ckpt, const Prepared& p, OptimizerState* opt,
                                     LoadedRun* info) {
  LoadedRun run = load_training_checkpoint(ckpt);
  if (run.config.to_config().hash() != p.hash) {
    throw ConfigError("checkpoint " + ckpt.string() + " was written with a different config");
  }
  const DataGeometry& g = p.data.geometry;
  if (run.geometry.frames != g.frames || run.geometry.height != g.height || run.geometry.width != g.width) {
    throw ShapeError("checkpoint " + ckpt.string() + " was trained on a different clip geometry");
  }
  if (run.vocab.tokens() != p.data.vocab.tokens()) {
    throw ConfigError("checkpoint " + ckpt.string() + " uses a different vocabulary");
  }
  if (opt) *opt = std::move(run.optimizer);
  if (info) {
    info->stage = run.stage;
    info->step = run.step;
  }
  return std::move(run.model);
}

int cmd_train(const TrainArgs& a) {
  const TrainingStage stage = parse_stage(a.stage);
  if (!a.resume.empty() && !a.init.empty()) throw UsageError("--resume and --init are exclusive");
  Prepared p = prepare(a.config, a.data);
  OptimizerState opt;
  RunOptions ro;
  ro.out = a.out;
  std::unique_ptr<UniVidModel> model;
  if (!a.resume.empty()) {
    LoadedRun info;
    model = restore(a.resume, p, &opt, &info);
    if (info.stage != stage) {
      throw ConfigError("cannot resume a " + stage_name(info.stage) + " checkpoint as stage " + stage_name(stage));
    }
    ro.start_step = info.step;
  } else if (!a.init.empty()) {
    model = restore(a.init, p, nullptr, nullptr);
  } else {
    model = std::make_unique<UniVidModel>(model_config(p.rc, p.data.geometry, p.data.vocab.size()), p.rc.seed);
  }
  const int total = p.rc.plan(stage).steps;
  ro.on_step = [&](int step, double loss) {
    if (step % 50 == 0 || step == total) std::printf("%s step %d loss %.6f\n", stage_name(stage).c_str(), step, loss);
    std::fflush(stdout);
  };
  run_stage(*model, p.data, p.rc, stage, opt, ro);
  std::printf("run directory %s\n", a.out.string().c_str());
  return kExitOk;
}

struct InitArgs {
  fs::path config;
  fs::path data;
  fs::path out;
};

int cmd_init(const InitArgs& a) {
  Prepared p = prepare(a.config, a.data);
  UniVidModel model(model_config(p.rc, p.data.geometry, p.data.vocab.size()), p.rc.seed);
  save_training_checkpoint(a.out, model, OptimizerState{}, p.rc, p.data.geometry, p.data.vocab, TrainingStage::kT2V,
                           0);
  std::printf("wrote initial checkpoint %s\n", a.out.string().c_str());
  return kExitOk;
}

// ---- sample

struct SampleArgs {
  fs::path ckpt;
  std::string mode;
  std::optional<std::string> prompt;
  std::optional<fs::path> image;
  std::optional<float> lambda_t;
  std::optional<float> lambda_v;
  int steps = 50;
  float scale = 1.0f;
  uint64_t seed = 0;
  std::vector<fs::path> out;
};

int cmd_sample(const SampleArgs& a) {
  const GenerationMode mode = parse_mode(a.mode);
  const bool wants_text = mode != GenerationMode::kI2V;
  const bool wants_image = mode != GenerationMode::kT2V;
  if (wants_text && !a.prompt) throw UsageError("--mode " + a.mode + " needs --prompt");
  if (wants_image && !a.image) throw UsageError("--mode " + a.mode + " needs --image");
  if (!wants_text && a.prompt) throw UsageError("--mode i2v takes no --prompt");
  if (!wants_image && a.image) throw UsageError("--mode t2v takes no --image");
  for (const auto& o : a.out) {
    if (!has_suffix(o, ".uvt") && !has_suffix(o, ".ppm")) throw UsageError("--out must end in .uvt or .ppm");
  }

  LoadedRun run = load_training_checkpoint(a.ckpt);
  GenerateRequest req;
  req.mode = mode;
  const auto [dt, dv] = default_lambdas(mode);
  req.lambda_t = a.lambda_t.value_or(dt);
  req.lambda_v = a.lambda_v.value_or(dv);
  req.steps = a.steps;
  req.scale = a.scale;
  req.seed = a.seed;
  req.frames = run.geometry.frames;
  if (a.prompt) req.prompt = run.vocab.encode(*a.prompt);
  if (a.image) req.image = load_image(*a.image);
  const Tensor video = generate(*run.model, run.config.schedule(), run.config.codec, req);
  for (const auto& o : a.out) {
    write_video(o, video);
    std::printf("wrote %s\n", o.string().c_str());
  }
  return kExitOk;
}

// ---- gradcheck

struct GradcheckArgs {
  std::string module;
  double eps = 1e-3;
  double tol = -1.0;
  uint64_t seed = 0;
  int samples = 0;
};

int cmd_gradcheck(const GradcheckArgs& a) {
  GradcheckOptions o;
  o.eps = a.eps;
  o.tol = a.tol;
  o.seed = a.seed;
  o.samples = a.samples;
  const GradcheckReport r = run_gradcheck(a.module, o);
  std::printf("%s: checked %lld coordinates, max relative error %.3e at %s (tol %.1e) -> %s\n", r.module.c_str(),
              static_cast<long long>(r.checked), r.max_error, r.worst.c_str(), r.tol, r.passed ? "PASS" : "FAIL");
  return r.passed ? kExitOk : kExitRuntime;
}

// ---- inspect

double l2_norm(const Tensor& t) {
  double s = 0.0;
  for (float v : t.values()) s += static_cast<double>(v) * v;
  return std::sqrt(s);
}

int cmd_inspect(const fs::path& ckpt) {
  LoadedRun run = load_training_checkpoint(ckpt);
  const ParameterStore& store = run.model->store();
  std::printf("checkpoint %s: stage %s, step %d, %zu tensors\n", ckpt.string().c_str(),
              stage_name(run.stage).c_str(), run.step, store.size());
  std::printf("clips %dx%dx%dx%d, codec %s\n", run.geometry.frames, run.geometry.channels, run.geometry.height,
              run.geometry.width, codec_name(run.config.codec).c_str());
  std::printf("\n%-14s %12s\n", "group", "parameters");
  for (ParamGroup g : {ParamGroup::kSpatial, ParamGroup::kTemporal, ParamGroup::kConditioning}) {
    std::printf("%-14s %12lld\n", std::string(group_name(g)).c_str(), static_cast<long long>(store.count(g)));
  }
  std::printf("%-14s %12lld\n", "total", static_cast<long long>(store.total_count()));

  std::printf("\n%-8s %6s %6s %10s\n", "factor", "step", "kernel", "references");
  for (const auto& [f, level] : run.config.pyramid.entries()) {
    std::printf("%-8d %6d %6d %10d\n", f, level.step, level.kernel,
                run.config.pyramid.reference_count(f, run.geometry.frames));
  }

  std::printf("\nnovel-branch output projections (L2 norm)\n");
  for (const auto& name : run.model->novel_output_names()) {
    std::printf("  %-44s %.6g\n", name.c_str(), l2_norm(store.get(name).var.value()));
  }
  const NoiseSchedule s = run.config.schedule();
  std::printf("\ndiffusion: T=%d beta %.3g..%.3g, alpha_bar[T]=%.4g\n", s.T, run.config.beta_min,
              run.config.beta_max, s.alpha_bar[static_cast<size_t>(s.T)]);
  return kExitOk;
}

// ---- eval

struct EvalArgs {
  fs::path ckpt;
  fs::path data;
  fs::path out;
  int steps = 50;
  float scale = 1.0f;
  uint64_t seed = 0;
  int clips = 0;
};

int cmd_eval(const EvalArgs& a) {
  LoadedRun run = load_training_checkpoint(a.ckpt);
  const Dataset ds = Dataset::open(a.data);
  const NoiseSchedule schedule = run.config.schedule();
  const size_t n = a.clips > 0 ? std::min<size_t>(static_cast<size_t>(a.clips), ds.size()) : ds.size();
  std::string csv = "clip_id,psnr_db_proxy,first_frame_db_proxy,smoothness_proxy\n";
  for (size_t i = 0; i < n; ++i) {
    const Tensor clip = ds.clip(i);
    GenerateRequest req;
    req.mode = GenerationMode::kTI2V;
    std::tie(req.lambda_t, req.lambda_v) = default_lambdas(req.mode);
    req.prompt = run.vocab.encode(ds.caption(i));
    req.image = Tensor({clip.dim(1), clip.dim(2), clip.dim(3)});
    std::copy_n(clip.data(), req.image.numel(), req.image.data());
    req.steps = a.steps;
    req.scale = a.scale;
    req.seed = a.seed;
    req.frames = static_cast<int>(clip.dim(0));
    const Tensor video = generate(*run.model, schedule, run.config.codec, req);
    char row[160];
    std::snprintf(row, sizeof row, "%d,%.4f,%.4f,%.6f\n", ds.entries()[i].id, psnr(video, clip).mean,
                  first_frame_fidelity(video, req.image), clip.dim(0) > 1 ? temporal_smoothness(video) : 0.0);
    csv += row;
    std::fputs(row, stdout);
  }
  write_text(a.out, csv);
  std::printf("wrote %s (desk-scale proxies, not FVD/IS/FID)\n", a.out.string().c_str());
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  if (const char* env = std::getenv("UNIVID_THREADS")) {
    const int n = std::atoi(env);
    if (n > 0) set_num_threads(n);
  }

  CLI::App app{"univid: unified text/image-to-video diffusion at desk scale"};
  app.require_subcommand(1);

  GenDataArgs gd;
  auto* gen = app.add_subcommand("gen-data", "Generate a synthetic moving-shapes dataset");
  gen->add_option("--out", gd.out, "Dataset directory")->required();
  gen->add_option("--clips", gd.clips, "Number of clips")->check(CLI::PositiveNumber);
  gen->add_option("--frames", gd.frames, "Frames per clip")->check(CLI::PositiveNumber);
  gen->add_option("--size", gd.size, "Frame height and width")->expected(2)->check(CLI::PositiveNumber);
  gen->add_option("--seed", gd.seed, "Corpus seed");

  TrainArgs tr;
  auto* train = app.add_subcommand("train", "Run one training stage");
  train->add_option("--config", tr.config, "Config file")->required()->check(CLI::ExistingFile);
  train->add_option("--stage", tr.stage, "Stage")->required()->check(CLI::IsMember({"t2v", "adapters", "joint"}));
  train->add_option("--data", tr.data, "Dataset directory")->required()->check(CLI::ExistingDirectory);
  train->add_option("--out", tr.out, "Run directory")->required();
  train->add_option("--resume", tr.resume, "Continue this stage from a checkpoint")->check(CLI::ExistingDirectory);
  train->add_option("--init", tr.init, "Start from a checkpoint's weights")->check(CLI::ExistingDirectory);

  InitArgs in;
  auto* init = app.add_subcommand("init", "Write the initial (identity-init) checkpoint");
  init->add_option("--config", in.config, "Config file")->required()->check(CLI::ExistingFile);
  init->add_option("--data", in.data, "Dataset directory")->required()->check(CLI::ExistingDirectory);
  init->add_option("--out", in.out, "Checkpoint directory")->required();

  SampleArgs sa;
  auto* sample = app.add_subcommand("sample", "Generate a video from a checkpoint");
  sample->add_option("--ckpt", sa.ckpt, "Checkpoint directory")->required()->check(CLI::ExistingDirectory);
  sample->add_option("--mode", sa.mode, "Generation mode")->required()->check(CLI::IsMember({"t2v", "i2v", "ti2v"}));
  sample->add_option("--prompt", sa.prompt, "Caption");
  sample->add_option("--image", sa.image, "Reference image (.uvt or .ppm)")->check(CLI::ExistingFile);
  sample->add_option("--lambda-t", sa.lambda_t, "Text stream weight");
  sample->add_option("--lambda-v", sa.lambda_v, "Image stream weight");
  sample->add_option("--steps", sa.steps, "Reverse steps")->check(CLI::PositiveNumber);
  sample->add_option("--scale", sa.scale, "Guidance scale");
  sample->add_option("--seed", sa.seed, "Sampling seed");
  sample->add_option("--out", sa.out, "Output file(s), .uvt or .ppm")->required();

  GradcheckArgs gc;
  auto* grad = app.add_subcommand("gradcheck", "Finite-difference gradient check");
  grad->add_option("--module", gc.module, "pstattn, pstconv, dualca, temattn or unet")
      ->required()
      ->check(CLI::IsMember(gradcheck_modules()));
  grad->add_option("--eps", gc.eps, "Finite-difference step");
  grad->add_option("--tol", gc.tol, "Tolerance (default per module)");
  grad->add_option("--seed", gc.seed, "Seed");
  grad->add_option("--samples", gc.samples, "Coordinates to check (0 = module default)");

  fs::path inspect_ckpt;
  auto* inspect = app.add_subcommand("inspect", "Summarise a checkpoint");
  inspect->add_option("--ckpt", inspect_ckpt, "Checkpoint directory")->required()->check(CLI::ExistingDirectory);

  EvalArgs ev;
  auto* eval = app.add_subcommand("eval", "Proxy metrics of ti2v generations against a dataset");
  eval->add_option("--ckpt", ev.ckpt, "Checkpoint directory")->required()->check(CLI::ExistingDirectory);
  eval->add_option("--data", ev.data, "Dataset directory")->required()->check(CLI::ExistingDirectory);
  eval->add_option("--out", ev.out, "CSV path")->required();
  eval->add_option("--steps", ev.steps, "Reverse steps")->check(CLI::PositiveNumber);
  eval->add_option("--scale", ev.scale, "Guidance scale");
  eval->add_option("--seed", ev.seed, "Sampling seed");
  eval->add_option("--clips", ev.clips, "Evaluate the first N clips (0 = all)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*gen) return cmd_gen_data(gd);
    if (*train) return cmd_train(tr);
    if (*init) return cmd_init(in);
    if (*sample) return cmd_sample(sa);
    if (*grad) return cmd_gradcheck(gc);
    if (*inspect) return cmd_inspect(inspect_ckpt);
    if (*eval) return cmd_eval(ev);
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitUsage;
}
