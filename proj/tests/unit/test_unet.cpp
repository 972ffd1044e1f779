#include <cmath>
#include <string>
#include <vector>

#include "doctest.h"
#include "helpers.hpp"
#include "univid/error.hpp"
#include "univid/unet.hpp"

using namespace univid;

namespace {

UNetConfig tiny_config() {
  UNetConfig c;
  c.latent_channels = 4;
  c.channels = {8, 16, 16, 16};
  c.heads = 2;
  c.cond_dim = 8;
  c.vocab_size = 32;
  c.text_max_len = 8;
  c.image_channels = 3;
  c.image_height = 16;
  c.image_width = 16;
  c.image_patch = 8;
  return c;
}

ConditionBundle both_streams(const UniVidModel& m, uint64_t seed) {
  Rng rng(seed);
  Tensor img({1, 3, 16, 16});
  rng.fill_uniform(img, 0.0f, 1.0f);
  return m.condition({{3, 5, 7}}, img, 1.0f, 0.5f);
}

bool contains(const std::string& s, const char* part) { return s.find(part) != std::string::npos; }

}  // namespace

TEST_CASE("unet: output shape and input validation") {
  const UniVidModel m(tiny_config(), 1);
  const ConditionBundle c = both_streams(m, 2);
  const std::vector<int> t{5};
  const ag::Var z(testutil::random_tensor({1, 4, 4, 8, 8}, 3));
  CHECK(m.forward(z, t, c).shape() == z.shape());
  CHECK_THROWS_AS(m.forward(ag::Var(Tensor({1, 4, 3, 8, 8})), t, c), ShapeError);
  CHECK_THROWS_AS(m.forward(ag::Var(Tensor({1, 4, 4, 12, 8})), t, c), DivisibilityError);
  CHECK_THROWS_AS(m.forward(ag::Var(Tensor({4, 4, 8, 8})), t, c), ShapeError);
  CHECK_THROWS_AS(m.forward(z, std::vector<int>{1, 2}, c), ShapeError);
  CHECK_THROWS_AS(m.forward(ag::Var(Tensor({1, 6, 4, 8, 8})), t, c), DivisibilityError);
}

TEST_CASE("unet: novel branches start at zero and temporal taps at Dirac") {
  const UniVidModel m(tiny_config(), 4);
  const auto names = m.novel_output_names();
  CHECK(names.size() == 3 * m.blocks().size());
  for (const auto& n : names) {
    const Tensor& v = m.store().get(n).var.value();
    for (float x : v.values()) CHECK(x == 0.0f);
  }
  for (const auto& b : m.blocks()) {
    const Tensor& w = b.conv.temporal_w.value();
    const int64_t k = w.dim(0), c = w.dim(1);
    for (int64_t j = 0; j < k; ++j)
      for (int64_t i = 0; i < c; ++i)
        for (int64_t o = 0; o < c; ++o) CHECK(w[(j * c + i) * c + o] == (j == k / 2 && i == o ? 1.0f : 0.0f));
  }
}

TEST_CASE("unet: a video forward equals independent frame forwards at init") {
  const UniVidModel m(tiny_config(), 5);
  const ConditionBundle c = both_streams(m, 6);
  const int64_t F = 8, C = 4, H = 8, W = 8, per = C * H * W;
  const Tensor video = testutil::random_tensor({1, F, C, H, W}, 7);
  const std::vector<int> t{17};
  const Tensor joint = m.forward(ag::Var(video), t, c).value();
  for (int64_t f = 0; f < F; ++f) {
    Tensor frame({1, 1, C, H, W});
    std::copy_n(video.data() + f * per, per, frame.data());
    const Tensor single = m.forward(ag::Var(frame), t, c).value();
    CHECK(std::equal(single.data(), single.data() + per, joint.data() + f * per));
  }
}

TEST_CASE("unet: batch entries are independent") {
  const UniVidModel m(tiny_config(), 8);
  ConditionBundle c = m.condition({{3, 5}, {3, 5}}, Tensor(), 1.0f, 0.0f);
  const Tensor a = testutil::random_tensor({1, 4, 4, 8, 8}, 9), b = testutil::random_tensor({1, 4, 4, 8, 8}, 10);
  Tensor ab({2, 4, 4, 8, 8});
  std::copy_n(a.data(), a.numel(), ab.data());
  std::copy_n(b.data(), b.numel(), ab.data() + a.numel());
  const Tensor both = m.forward(ag::Var(ab), std::vector<int>{3, 40}, c).value();
  ConditionBundle c1 = m.condition({{3, 5}}, Tensor(), 1.0f, 0.0f);
  const Tensor first = m.forward(ag::Var(a), std::vector<int>{3}, c1).value();
  const Tensor second = m.forward(ag::Var(b), std::vector<int>{40}, c1).value();
  CHECK(testutil::max_abs_diff(first, Tensor({1, 4, 4, 8, 8}, std::vector<float>(both.data(), both.data() + a.numel()))) <
        1e-5);
  CHECK(testutil::max_abs_diff(second, Tensor({1, 4, 4, 8, 8}, std::vector<float>(both.data() + a.numel(),
                                                                                  both.data() + both.numel()))) < 1e-5);
}

TEST_CASE("unet: clean and residual outputs are converted to a noise estimate") {
  UNetConfig noise_cfg = tiny_config();
  UNetConfig clean_cfg = tiny_config();
  clean_cfg.output = OutputKind::kClean;
  clean_cfg.alpha_bar = {1.0, 0.9, 0.5, 0.01};
  const UniVidModel a(noise_cfg, 11), b(clean_cfg, 11);
  const ConditionBundle c = a.condition({{4}}, Tensor(), 1.0f, 0.0f);
  const Tensor z = testutil::random_tensor({1, 4, 4, 8, 8}, 12);
  for (int t : {1, 2, 3}) {
    const std::vector<int> ts{t};
    const Tensor raw = a.forward(ag::Var(z), ts, c).value();
    const Tensor eps = b.forward(ag::Var(z), ts, c).value();
    const double ab = clean_cfg.alpha_bar[static_cast<size_t>(t)];
    double worst = 0.0;
    for (int64_t i = 0; i < z.numel(); ++i) {
      const double want = (z[i] - std::sqrt(ab) * raw[i]) / std::sqrt(1.0 - ab);
      worst = std::max(worst, std::abs(eps[i] - want) / std::max(1.0, std::abs(want)));
    }
    CHECK(worst < 1e-5);
  }
  UNetConfig residual_cfg = clean_cfg;
  residual_cfg.output = OutputKind::kResidual;
  const UniVidModel r(residual_cfg, 11);
  for (int t : {1, 3}) {
    const std::vector<int> ts{t};
    const Tensor raw = a.forward(ag::Var(z), ts, c).value();
    const Tensor eps = r.forward(ag::Var(z), ts, c).value();
    const double sd = std::sqrt(1.0 - residual_cfg.alpha_bar[static_cast<size_t>(t)]);
    double worst = 0.0;
    for (int64_t i = 0; i < z.numel(); ++i) worst = std::max(worst, std::abs(eps[i] - (sd * z[i] + raw[i])));
    CHECK(worst < 1e-5);
  }
  CHECK_THROWS_AS(b.forward(ag::Var(z), std::vector<int>{4}, c), RangeError);
  CHECK_THROWS_AS(b.forward(ag::Var(z), std::vector<int>{0}, c), RangeError);
  CHECK(parse_output_kind("clean") == OutputKind::kClean);
  CHECK(output_kind_name(OutputKind::kNoise) == "noise");
  CHECK(parse_output_kind(output_kind_name(OutputKind::kResidual)) == OutputKind::kResidual);
  CHECK_THROWS_AS(parse_output_kind("velocity"), RangeError);
}

TEST_CASE("select_trainable: groups by input kind and stage") {
  const UniVidModel m(tiny_config(), 13);
  const ParameterStore& s = m.store();
  auto groups_of = [&](const std::vector<std::string>& names) {
    std::vector<int> seen(3, 0);
    for (const auto& n : names) seen[static_cast<int>(s.get(n).group)]++;
    return seen;
  };
  int per_group[3] = {0, 0, 0};
  for (const auto& p : s.params()) per_group[static_cast<int>(p.group)]++;
  for (int g = 0; g < 3; ++g) CHECK(per_group[g] > 0);

  for (auto stage : {TrainingStage::kT2V, TrainingStage::kAdapters, TrainingStage::kJoint}) {
    const auto img = groups_of(select_trainable(s, InputKind::kImage, stage));
    CHECK(img == std::vector<int>{per_group[0], 0, 0});
  }
  CHECK(groups_of(select_trainable(s, InputKind::kVideo, TrainingStage::kT2V)) ==
        std::vector<int>{per_group[0], per_group[1], 0});
  CHECK(groups_of(select_trainable(s, InputKind::kVideo, TrainingStage::kAdapters)) ==
        std::vector<int>{0, 0, per_group[2]});
  CHECK(select_trainable(s, InputKind::kVideo, TrainingStage::kJoint).size() == s.size());

  for (const auto& p : s.params()) {
    const bool temporal = contains(p.name, ".temporal.") || contains(p.name, ".pstattn.") || contains(p.name, ".temattn.");
    const bool cond = contains(p.name, ".crossattn.") || p.name.rfind("encoder.", 0) == 0;
    if (temporal) CHECK(p.group == ParamGroup::kTemporal);
    else if (cond) CHECK(p.group == ParamGroup::kConditioning);
    else CHECK(p.group == ParamGroup::kSpatial);
  }
  CHECK(parse_stage("adapters") == TrainingStage::kAdapters);
  CHECK(stage_name(TrainingStage::kJoint) == "joint");
  CHECK_THROWS_AS(parse_stage("finetune"), RangeError);
}
