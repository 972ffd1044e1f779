// Acceptance suite: one PASS/FAIL line per criterion, exit status 1 if any fail.
// usage: univid_acceptance <smoke.cfg> [--only N]
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "univid/dataio.hpp"
#include "univid/diffusion.hpp"
#include "univid/error.hpp"
#include "univid/eval.hpp"
#include "univid/gradcheck.hpp"
#include "univid/pyramid.hpp"
#include "univid/sampling.hpp"
#include "univid/training.hpp"

using namespace univid;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, double a) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

void jitter(ParameterStore& store, Rng& rng, float amount) {
  for (const auto& p : store.params()) {
    Tensor& v = const_cast<ag::Var&>(p.var).mutable_value();
    for (float& x : v.values()) x += amount * rng.normal();
  }
}

// 1. Gradient suite.
Outcome gradients() {
  const auto t0 = Clock::now();
  Outcome o{true, ""};
  for (const std::string m : {"pstattn", "pstconv", "dualca", "temattn", "unet"}) {
    GradcheckOptions opts;
    opts.eps = 1e-3;
    opts.tol = m == "unet" ? 1e-2 : 1e-3;
    opts.samples = m == "unet" ? 128 : 0;
    const GradcheckReport r = run_gradcheck(m, opts);
    const bool ok = r.passed && r.max_error < opts.tol && (m != "unet" || r.checked >= 100);
    o.pass = o.pass && ok;
    o.detail += m + " " + fmt("%.1e", r.max_error) + "/" + std::to_string(r.checked) + (ok ? "" : "(!)") + ", ";
  }
  const double secs = seconds_since(t0);
  o.pass = o.pass && secs < 120.0;
  o.detail += fmt("%.1f s (< 120 s)", secs);
  return o;
}

// 2. Oracle equivalence.
std::vector<double> dense_attention(const Tensor& x, const AttentionParams& p, int64_t F, int64_t C, int64_t H,
                                    int64_t W) {
  const int64_t L = F * H * W, dh = C / p.heads;
  auto token = [&](int64_t n, int64_t c) { return static_cast<double>(x[((n / (H * W)) * C + c) * H * W + n % (H * W)]); };
  auto project = [&](const Tensor& w) {
    std::vector<double> out(static_cast<size_t>(L * C), 0.0);
    for (int64_t n = 0; n < L; ++n)
      for (int64_t j = 0; j < C; ++j)
        for (int64_t c = 0; c < C; ++c) out[static_cast<size_t>(n * C + j)] += token(n, c) * w[c * C + j];
    return out;
  };
  const auto q = project(p.wq.value()), k = project(p.wk.value()), v = project(p.wv.value());
  std::vector<double> heads(static_cast<size_t>(L * C), 0.0);
  for (int h = 0; h < p.heads; ++h)
    for (int64_t i = 0; i < L; ++i) {
      std::vector<double> logit(static_cast<size_t>(L));
      for (int64_t j = 0; j < L; ++j) {
        double d = 0.0;
        for (int64_t c = h * dh; c < (h + 1) * dh; ++c) d += q[i * C + c] * k[j * C + c];
        logit[j] = d / std::sqrt(static_cast<double>(dh));
      }
      const double mx = *std::max_element(logit.begin(), logit.end());
      double z = 0.0;
      for (double& l : logit) z += (l = std::exp(l - mx));
      for (int64_t j = 0; j < L; ++j)
        for (int64_t c = h * dh; c < (h + 1) * dh; ++c) heads[i * C + c] += logit[j] / z * v[j * C + c];
    }
  std::vector<double> out(static_cast<size_t>(L * C));
  for (int64_t n = 0; n < L; ++n)
    for (int64_t j = 0; j < C; ++j) {
      double acc = p.bo.value()[j];
      for (int64_t c = 0; c < C; ++c) acc += heads[n * C + c] * p.wo.value()[c * C + j];
      out[static_cast<size_t>(((n / (H * W)) * C + j) * H * W + n % (H * W))] = acc + token(n, j);
    }
  return out;
}

Outcome oracles() {
  double worst = 0.0;
  for (int F : {1, 2, 4, 8}) {
    ParameterStore store;
    Rng rng(static_cast<uint64_t>(500 + F));
    AttentionParams p = make_attention(store, "attn", ParamGroup::kTemporal, 4, 4, 2, false, rng, false);
    jitter(store, rng, 0.3f);
    const Tensor x = rng.normal_tensor({1, F, 4, 4, 4});
    const Tensor got = pst_attention(ag::Var(x), build_reference_set(F, 1, ReferenceMode::kInferMid), p).value();
    const auto want = dense_attention(x, p, F, 4, 4, 4);
    for (int64_t i = 0; i < got.numel(); ++i) worst = std::max(worst, std::abs(got[i] - want[static_cast<size_t>(i)]));
  }
  int cases = 0, mismatches = 0;
  for (int F = 1; F <= 16; ++F)
    for (int r = 1; r <= F; ++r) {
      if (F % r != 0) continue;
      ++cases;
      std::vector<int> mid;
      for (int lo = 1; lo <= F; lo += r) mid.push_back((2 * lo + r - 1) / 2);
      if (build_reference_set(F, r, ReferenceMode::kInferMid).frames != mid) ++mismatches;
      Rng rng(static_cast<uint64_t>(F * 100 + r));
      for (int trial = 0; trial < 50; ++trial) {
        const auto g = build_reference_set(F, r, ReferenceMode::kTrainRandom, &rng).frames;
        bool ok = g.size() == static_cast<size_t>(F / r);
        for (size_t s = 0; ok && s < g.size(); ++s) ok = g[s] >= static_cast<int>(s) * r + 1 && g[s] <= static_cast<int>(s + 1) * r;
        mismatches += !ok;
      }
    }
  return {worst <= 1e-5 && mismatches == 0,
          "dense max |diff| " + fmt("%.2e", worst) + " (<= 1e-5), reference sets " + std::to_string(cases) +
              " (F, r) pairs, " + std::to_string(mismatches) + " mismatches"};
}

UNetConfig small_unet() {
  UNetConfig c;
  c.latent_channels = 12;
  c.channels = {8, 16, 16, 16};
  c.heads = 2;
  c.cond_dim = 8;
  c.image_height = c.image_width = 16;
  return c;
}

// 3. Identity at init.
Outcome identity_at_init() {
  const UniVidModel m(small_unet(), 21);
  Rng rng(22);
  Tensor img({1, 3, 16, 16});
  rng.fill_uniform(img, 0.0f, 1.0f);
  const ConditionBundle c = m.condition({{2, 4, 6}}, img, 1.0f, 1.0f);
  const int64_t F = 8, per = 12 * 8 * 8;
  const Tensor video = rng.normal_tensor({1, F, 12, 8, 8});
  const std::vector<int> t{123};
  const Tensor joint = m.forward(ag::Var(video), t, c).value();
  int equal = 0;
  for (int64_t f = 0; f < F; ++f) {
    Tensor frame({1, 1, 12, 8, 8});
    std::copy_n(video.data() + f * per, per, frame.data());
    const Tensor single = m.forward(ag::Var(frame), t, c).value();
    equal += std::equal(single.data(), single.data() + per, joint.data() + f * per);
  }
  return {equal == F, std::to_string(equal) + "/8 frames bitwise equal"};
}

// 4. Dual-stream algebra.
Outcome dual_stream() {
  Rng rng(31);
  int exact = 0;
  for (int inst = 0; inst < 100; ++inst) {
    ParameterStore store;
    DualCrossAttentionParams p = make_dual_cross_attention(store, "x", 4, 6, 2, false, rng);
    jitter(store, rng, 0.3f);
    const ag::Var z(rng.normal_tensor({1, 2, 4, 2, 2}));
    ConditionBundle c;
    c.text = ag::Var(rng.normal_tensor({1, 3, 6}));
    c.image = ag::Var(rng.normal_tensor({1, 4, 6}));
    auto eval = [&](float lt, float lv) {
      c.lambda_t = lt;
      c.lambda_v = lv;
      return dual_cross_attention_update(z, c, p).value();
    };
    const float lt = static_cast<float>(2.0 * rng.uniform()), lv = static_cast<float>(2.0 * rng.uniform());
    const Tensor a = eval(1.0f, 0.0f), b = eval(0.0f, 1.0f), u = eval(lt, lv);
    bool ok = true;
    for (int64_t i = 0; i < u.numel() && ok; ++i) {
      const float ta = lt * a[i], tb = lv * b[i];
      ok = u[i] == ta + tb;
    }
    exact += ok;
  }

  UniVidModel m(small_unet(), 32);
  jitter(m.store(), rng, 0.05f);
  const NoiseSchedule s = make_schedule(20, 1e-3, 0.1);
  Tensor image({3, 16, 16});
  rng.fill_uniform(image, 0.0f, 1.0f);
  auto run = [&](GenerationMode mode, float lt, float lv) {
    GenerateRequest r;
    r.mode = mode;
    if (mode != GenerationMode::kI2V) r.prompt = {3, 5, 7};
    if (mode != GenerationMode::kT2V) r.image = image;
    r.lambda_t = lt;
    r.lambda_v = lv;
    r.steps = 4;
    r.frames = 8;
    r.seed = 33;
    return generate_latent(m, s, CodecKind::kPatchify2, r);
  };
  int reductions = 0;
  reductions += run(GenerationMode::kTI2V, 0.7f, 0.0f).bitwise_equal(run(GenerationMode::kT2V, 0.7f, 0.0f));
  reductions += run(GenerationMode::kTI2V, 0.0f, 0.9f).bitwise_equal(run(GenerationMode::kI2V, 0.0f, 0.9f));
  return {exact == 100 && reductions == 2, std::to_string(exact) + "/100 bilinear instances exact, " +
                                               std::to_string(reductions) + "/2 mode reductions bitwise"};
}

// 5. Diffusion statistics.
Outcome diffusion_stats() {
  const NoiseSchedule s = make_schedule(1000, 1e-4, 0.02);
  const int n = 100000;
  bool ok = true;
  double worst_se = 0.0;
  for (int t : {1, 250, 1000}) {
    Rng rng(static_cast<uint64_t>(40 + t));
    const Tensor eps = rng.normal_tensor({n});
    const Tensor zt = q_sample(Tensor({n}, 0.6f), t, eps, s);
    double m = 0.0, v = 0.0;
    for (int64_t i = 0; i < n; ++i) m += zt[i];
    m /= n;
    for (int64_t i = 0; i < n; ++i) v += (zt[i] - m) * (zt[i] - m);
    v /= n - 1;
    const double ab = s.alpha_bar[t], var = 1.0 - ab;
    const double se_m = std::abs(m - std::sqrt(ab) * 0.6) / std::sqrt(var / n);
    const double se_v = std::abs(v - var) / (var * std::sqrt(2.0 / (n - 1)));
    worst_se = std::max({worst_se, se_m, se_v});
    ok = ok && se_m < 3.0 && se_v < 3.0;
  }
  const NoiseSchedule c = make_schedule(200, 1e-4, 0.05);
  Rng rng(41);
  const Tensor z0 = rng.normal_tensor({2, 4, 3, 4, 4}, 0.5f);
  Tensor z = q_sample(z0, c.T, rng.normal_tensor(z0.shape()), c);
  for (int t = c.T; t >= 1; --t) {
    const double ab = c.alpha_bar[t];
    Tensor e(z.shape());
    for (int64_t i = 0; i < z.numel(); ++i) e[i] = static_cast<float>((z[i] - std::sqrt(ab) * z0[i]) / std::sqrt(1.0 - ab));
    z = reverse_step(z, e, t, c, rng.normal_tensor(z.shape()));
  }
  double err = 0.0;
  for (int64_t i = 0; i < z.numel(); ++i) err += (z[i] - z0[i]) * static_cast<double>(z[i] - z0[i]);
  const double rel = std::sqrt(err / squared_norm(z0));
  ok = ok && rel <= 1e-4;
  return {ok, "moments within " + fmt("%.2f", worst_se) + " SE (< 3), oracle chain relative error " + fmt("%.2e", rel) +
                  " (<= 1e-4)"};
}

// 6. End-to-end smoke run.
Outcome smoke(const fs::path& config_path) {
  const RunConfig rc = RunConfig::from_config(Config::load(config_path));
  const auto dir = fs::temp_directory_path() / "univid-acceptance-smoke";
  fs::remove_all(dir);
  write_dataset(dir / "data", plan_dataset(1, 8, 32, 32, rc.seed));
  const Dataset ds = Dataset::open(dir / "data");
  const TrainingData data = TrainingData::from_dataset(ds);

  const auto t0 = Clock::now();
  UniVidModel model(model_config(rc, data.geometry, data.vocab.size()), rc.seed);
  OptimizerState opt;
  std::vector<double> losses;
  RunOptions ro;
  ro.on_step = [&](int, double l) { losses.push_back(l); };
  int steps = 0;
  for (auto stage : {TrainingStage::kT2V, TrainingStage::kAdapters, TrainingStage::kJoint}) {
    run_stage(model, data, rc, stage, opt, ro);
    steps += rc.plan(stage).steps;
  }
  if (losses.size() < 110) return {false, "too few steps to measure the loss drop"};
  double first = 0.0, last = 0.0;
  for (size_t i = 0; i < 10; ++i) first += losses[i] / 10.0;
  for (size_t i = losses.size() - 100; i < losses.size(); ++i) last += losses[i] / 100.0;
  const double drop = 1.0 - last / first;

  const Tensor clip = ds.clip(0);
  GenerateRequest req;
  req.mode = GenerationMode::kTI2V;
  req.prompt = data.captions[0];
  req.image = Tensor({3, 32, 32}, std::vector<float>(clip.data(), clip.data() + 3 * 32 * 32));
  std::tie(req.lambda_t, req.lambda_v) = default_lambdas(GenerationMode::kTI2V);
  req.steps = rc.timesteps;
  req.seed = 1;
  const Tensor video = generate(model, rc.schedule(), rc.codec, req);
  const double secs = seconds_since(t0);
  const double p = psnr(video, clip).mean;
  const double ff = first_frame_fidelity(video, req.image);
  fs::remove_all(dir);
  const bool ok = steps <= 2000 && secs < 900.0 && drop >= 0.90 && p > 25.0 && ff > 25.0;
  return {ok, std::to_string(steps) + " steps (<= 2000), " + fmt("%.0f s", secs) + " (< 900 s), loss drop " +
                  fmt("%.1f%%", 100.0 * drop) + " (>= 90%), psnr " + fmt("%.2f dB", p) + " (> 25), first frame " +
                  fmt("%.2f dB", ff) + " (> 25)"};
}

// 7. Parameter-group discipline.
Outcome groups() {
  RunConfig rc;
  rc.widths = {8, 16, 16, 16};
  rc.heads = 2;
  rc.cond_dim = 8;
  rc.timesteps = 50;
  TrainingData d;
  d.vocab = Vocabulary::synthetic();
  d.geometry = {8, 3, 16, 16};
  ClipSpec spec;
  spec.height = spec.width = 16;
  const Clip clip = gen_clip(spec, 3);
  d.clips.push_back(clip.video);
  d.captions.push_back(d.vocab.encode(clip.caption));
  UniVidModel m(model_config(rc, d.geometry, d.vocab.size()), 4);
  OptimizerState opt;
  Rng rng(5);
  StagePlan video;
  video.stage = TrainingStage::kJoint;
  video.lr = 0.05;
  StagePlan image = video;
  image.image_fraction = 1.0;
  image.video_fraction = 0.0;
  const NoiseSchedule s = rc.schedule();
  train_step(m, sample_batch(d, video, rng), video, opt, s, rc.codec, rng);

  int violations = 0, image_steps = 0;
  for (auto stage : {TrainingStage::kT2V, TrainingStage::kJoint}) {
    image.stage = stage;
    const auto before = m.store().snapshot();
    const Batch b = sample_batch(d, image, rng);
    if (b.kind != InputKind::kImage) return {false, "image batch expected"};
    train_step(m, b, image, opt, s, rc.codec, rng);
    ++image_steps;
    for (const auto& p : m.store().params())
      if (p.group == ParamGroup::kTemporal && !p.var.value().bitwise_equal(before.at(p.name))) ++violations;
  }
  StagePlan adapters = video;
  adapters.stage = TrainingStage::kAdapters;
  adapters.p_drop_text = adapters.p_drop_image = 0.0;
  const auto before = m.store().snapshot();
  train_step(m, sample_batch(d, adapters, rng), adapters, opt, s, rc.codec, rng);
  int moved_cond = 0;
  for (const auto& p : m.store().params()) {
    const bool moved = !p.var.value().bitwise_equal(before.at(p.name));
    if (moved && p.group != ParamGroup::kConditioning) ++violations;
    moved_cond += moved && p.group == ParamGroup::kConditioning;
  }
  return {violations == 0 && moved_cond > 0, std::to_string(image_steps) + " image steps and 1 adapters step, " +
                                                 std::to_string(violations) + " out-of-group changes, " +
                                                 std::to_string(moved_cond) + " conditioning tensors moved"};
}

// 8. Format stability.
Outcome formats() {
  const auto dir = fs::temp_directory_path() / "univid-acceptance-formats";
  fs::remove_all(dir);
  fs::create_directories(dir);
  Rng rng(61);
  int ok = 0, total = 0;
  const Tensor t = rng.normal_tensor({2, 3, 4});
  write_tensor(dir / "t.uvt", t);
  ok += read_tensor(dir / "t.uvt").bitwise_equal(t) && read_tensor(dir / "t.uvt").shape() == t.shape();
  ++total;

  ParameterStore store;
  store.add("a", ParamGroup::kSpatial, rng.normal_tensor({3, 3}));
  store.add("b", ParamGroup::kTemporal, rng.normal_tensor({5}));
  store.add("c", ParamGroup::kConditioning, rng.normal_tensor({2, 2, 2}));
  save_checkpoint(dir / "ck", store, "0123456789abcdef");
  const Checkpoint ck = load_checkpoint(dir / "ck");
  bool same = ck.store.size() == store.size() && ck.config_hash == "0123456789abcdef";
  for (const auto& p : store.params())
    same = same && ck.store.get(p.name).var.value().bitwise_equal(p.var.value()) && ck.store.get(p.name).group == p.group;
  ok += same;
  ++total;

  Tensor v({2, 3, 4, 5});
  rng.fill_uniform(v, 0.0f, 1.0f);
  write_ppm_grid(dir / "v.ppm", v);
  const Tensor q = read_ppm_grid(dir / "v.ppm", 2);
  write_ppm_grid(dir / "w.ppm", q);
  ok += read_file(dir / "v.ppm") == read_file(dir / "w.ppm") && read_ppm_grid(dir / "w.ppm", 2).bitwise_equal(q);
  ++total;

  write_tensor(dir / "zero.uvt", Tensor({1}));
  const std::vector<uint8_t> golden{'U', 'V', 'T', 'F', 1, 1, 1, 0, 1, 0, 0, 0, 0, 0, 0, 0};
  const auto bytes = read_file(dir / "zero.uvt");
  const bool golden_ok = bytes == golden;
  fs::remove_all(dir);
  return {ok == total && golden_ok, std::to_string(ok) + "/" + std::to_string(total) +
                                        " round trips bitwise (tensor, checkpoint, ppm), golden [1] zero tensor " +
                                        std::to_string(bytes.size()) + " bytes " + (golden_ok ? "match" : "MISMATCH")};
}

}  // namespace

int main(int argc, char** argv) {
  if (argc < 2) {
    std::fprintf(stderr, "usage: %s <smoke.cfg> [--only N]\n", argv[0]);
    return 2;
  }
  int only = 0;
  if (argc >= 4 && std::strcmp(argv[2], "--only") == 0) only = std::atoi(argv[3]);
  const fs::path cfg = argv[1];
  const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria = {
      {"gradient suite", gradients},
      {"oracle equivalence", oracles},
      {"identity at init", identity_at_init},
      {"dual-stream algebra", dual_stream},
      {"diffusion statistics", diffusion_stats},
      {"end-to-end smoke", [&] { return smoke(cfg); }},
      {"parameter-group discipline", groups},
      {"format stability", formats},
  };
  int failed = 0;
  for (size_t i = 0; i < criteria.size(); ++i) {
    if (only != 0 && static_cast<int>(i + 1) != only) continue;
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("error: ") + e.what()};
    }
    failed += !o.pass;
    std::printf("[%s] %zu %s: %s\n", o.pass ? "PASS" : "FAIL", i + 1, criteria[i].first, o.detail.c_str());
    std::fflush(stdout);
  }
  return failed == 0 ? 0 : 1;
}
