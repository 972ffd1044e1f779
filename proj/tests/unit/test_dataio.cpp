#include <cstring>
#include <filesystem>
#include <string>
#include <vector>

#include "doctest.h"
#include "helpers.hpp"
#include "univid/dataio.hpp"
#include "univid/error.hpp"

using namespace univid;
namespace fs = std::filesystem;

TEST_CASE("tensor file: golden bytes of a one-element zero tensor") {
  // magic 4 + version 1 + dtype 1 + ndim 1 + pad 1 + one u32 dim + one f32.
  const std::vector<uint8_t> bytes = encode_tensor(Tensor({1}));
  const std::vector<uint8_t> want{'U', 'V', 'T', 'F', 1, 1, 1, 0, 1, 0, 0, 0, 0, 0, 0, 0};
  CHECK(bytes == want);

  const auto dir = testutil::temp_dir("golden");
  write_tensor(dir / "zero.uvt", Tensor({1}));
  CHECK(fs::file_size(dir / "zero.uvt") == 16);
  CHECK(read_file(dir / "zero.uvt") == want);
}

TEST_CASE("tensor file: little-endian dims and payload") {
  const std::vector<uint8_t> bytes = encode_tensor(Tensor({2, 1}, std::vector<float>{1.0f, -2.0f}));
  REQUIRE(bytes.size() == 8 + 2 * 4 + 2 * 4);
  CHECK(bytes[6] == 2);
  CHECK(bytes[8] == 2);
  CHECK(bytes[12] == 1);
  // 1.0f = 0x3f800000, -2.0f = 0xc0000000
  CHECK(bytes[16] == 0x00);
  CHECK(bytes[19] == 0x3f);
  CHECK(bytes[18] == 0x80);
  CHECK(bytes[23] == 0xc0);
}

TEST_CASE("tensor file: round trip and corruption") {
  const Tensor t = testutil::random_tensor({2, 3, 4}, 1);
  const auto bytes = encode_tensor(t);
  CHECK(decode_tensor(bytes).bitwise_equal(t));
  CHECK(decode_tensor(bytes).shape() == t.shape());

  auto bad = bytes;
  bad[0] = 'X';
  CHECK_THROWS_AS(decode_tensor(bad), FormatError);
  bad = bytes;
  bad[4] = 2;
  CHECK_THROWS_AS(decode_tensor(bad), FormatError);
  bad = bytes;
  bad[5] = 7;
  CHECK_THROWS_AS(decode_tensor(bad), FormatError);
  bad = bytes;
  bad.pop_back();
  CHECK_THROWS_AS(decode_tensor(bad), FormatError);
  bad = bytes;
  bad.push_back(0);
  CHECK_THROWS_AS(decode_tensor(bad), FormatError);
  CHECK_THROWS_AS(decode_tensor(std::vector<uint8_t>{'U', 'V'}), FormatError);
}

TEST_CASE("checkpoint: round trip, groups and missing files") {
  Rng rng(2);
  ParameterStore store;
  store.add("a.weight", ParamGroup::kSpatial, rng.normal_tensor({3, 2}));
  store.add("b.taps", ParamGroup::kTemporal, rng.normal_tensor({3, 1, 1}));
  store.add("c.proj", ParamGroup::kConditioning, rng.normal_tensor({4}));
  const auto dir = testutil::temp_dir("ckpt");
  save_checkpoint(dir / "ck", store, "abc123", {{"stage", "t2v"}});
  const Checkpoint ck = load_checkpoint(dir / "ck");
  CHECK(ck.config_hash == "abc123");
  CHECK(ck.extras.at("stage") == "t2v");
  REQUIRE(ck.store.size() == 3);
  for (const auto& p : store.params()) {
    const Parameter& q = ck.store.get(p.name);
    CHECK(q.group == p.group);
    CHECK(q.var.value().bitwise_equal(p.var.value()));
  }
  CHECK(ck.store.count(ParamGroup::kSpatial) + ck.store.count(ParamGroup::kTemporal) +
            ck.store.count(ParamGroup::kConditioning) ==
        ck.store.total_count());

  fs::remove(dir / "ck" / "b.taps.uvt");
  try {
    load_checkpoint(dir / "ck");
    FAIL("expected a missing-file error");
  } catch (const Error& e) {
    CHECK(std::string(e.what()).find("b.taps") != std::string::npos);
  }
}

TEST_CASE("checkpoint: shape disagreement with the manifest") {
  ParameterStore store;
  store.add("w", ParamGroup::kSpatial, Tensor({2, 2}, 1.0f));
  const auto dir = testutil::temp_dir("ckpt-shape");
  save_checkpoint(dir, store, "h");
  write_tensor(dir / "w.uvt", Tensor({4}, 1.0f));
  CHECK_THROWS_AS(load_checkpoint(dir), ShapeError);
}

TEST_CASE("codec: identity and patchify2") {
  const Tensor x = testutil::random_tensor({3, 4, 4}, 3);
  CHECK(codec_encode(x, CodecKind::kIdentity).bitwise_equal(x));
  const Tensor z = codec_encode(x, CodecKind::kPatchify2);
  CHECK(z.shape() == Shape{12, 2, 2});
  CHECK(codec_decode(z, CodecKind::kPatchify2).bitwise_equal(x));
  // Channel 4c + 2dy + dx holds pixel (2y + dy, 2x + dx) of channel c.
  CHECK(z.at({4 * 1 + 2 * 1 + 0, 1, 0}) == x.at({1, 3, 0}));
  CHECK(latent_shape({1, 8, 3, 32, 32}, CodecKind::kPatchify2) == Shape{1, 8, 12, 16, 16});
  CHECK_THROWS_AS(codec_encode(Tensor({3, 5, 4}), CodecKind::kPatchify2), DivisibilityError);
  const Tensor v = testutil::random_tensor({2, 8, 3, 6, 6}, 4);
  CHECK(codec_decode(codec_encode(v, CodecKind::kPatchify2), CodecKind::kPatchify2).bitwise_equal(v));
  CHECK(parse_codec("patchify2") == CodecKind::kPatchify2);
  CHECK(codec_name(CodecKind::kIdentity) == "identity");
}

TEST_CASE("codec: signed range conversion") {
  const Tensor u({3}, std::vector<float>{0.0f, 0.5f, 1.0f});
  const Tensor s = to_signed(u);
  CHECK(s[0] == -1.0f);
  CHECK(s[1] == 0.0f);
  CHECK(s[2] == 1.0f);
  CHECK(to_unit(s).bitwise_equal(u));
}

TEST_CASE("synthetic clips: motion, colour and determinism") {
  ClipSpec spec;
  spec.shape = ShapeKind::kCircle;
  spec.color = "red";
  spec.motion = Motion::kRight;
  spec.speed = Speed::kSlow;
  const auto plan = plan_motion(spec, 5);
  for (size_t f = 1; f < plan.size(); ++f) {
    CHECK(plan[f].cx == plan[f - 1].cx + 1);
    CHECK(plan[f].cy == plan[f - 1].cy);
  }
  const Clip a = gen_clip(spec, 5), b = gen_clip(spec, 5);
  CHECK(a.video.bitwise_equal(b.video));
  CHECK(a.caption == std::vector<std::string>{"red", "circle", "moving", "right", "slow"});
  CHECK(a.video.shape() == Shape{8, 3, 32, 32});
  int inside = 0;
  for (int f = 0; f < 8; ++f)
    for (int y = 0; y < 32; ++y)
      for (int x = 0; x < 32; ++x) {
        const bool in = shape_covers(spec.shape, plan[static_cast<size_t>(f)], x, y);
        inside += in;
        CHECK(a.video.at({f, 0, y, x}) == (in ? 1.0f : 0.0f));
        CHECK(a.video.at({f, 1, y, x}) == 0.0f);
        CHECK(a.video.at({f, 2, y, x}) == 0.0f);
      }
  CHECK(inside > 0);
  for (int64_t i = 0; i < a.reference.numel(); ++i) CHECK(a.reference[i] == a.video[i]);

  ClipSpec fast = spec;
  fast.speed = Speed::kFast;
  fast.motion = Motion::kDiagonal;
  const auto p2 = plan_motion(fast, 6);
  for (size_t f = 1; f < p2.size(); ++f) {
    CHECK(p2[f].cx == p2[f - 1].cx + 2);
    CHECK(p2[f].cy == p2[f - 1].cy + 2);
  }
}

TEST_CASE("synthetic clips: object stays inside the frame") {
  Rng rng(7);
  for (int i = 0; i < 200; ++i) {
    const ClipSpec spec = random_clip_spec(rng, 8, 32, 32);
    const auto plan = plan_motion(spec, rng.next_u64());
    for (const Placement& p : plan) {
      CHECK(p.cx - p.radius >= 0);
      CHECK(p.cy - p.radius >= 0);
      CHECK(p.cx + p.radius <= 31);
      CHECK(p.cy + p.radius <= 31);
    }
  }
  ClipSpec tiny;
  tiny.width = tiny.height = 6;
  tiny.speed = Speed::kFast;
  CHECK_THROWS_AS(gen_clip(tiny, 1), RangeError);
}

TEST_CASE("dataset: deterministic directory contents") {
  const auto dir = testutil::temp_dir("dataset");
  write_dataset(dir / "a", plan_dataset(3, 8, 32, 32, 42));
  write_dataset(dir / "b", plan_dataset(3, 8, 32, 32, 42));
  for (const auto& entry : fs::directory_iterator(dir / "a")) {
    const auto name = entry.path().filename();
    CHECK(read_file(entry.path()) == read_file(dir / "b" / name));
  }
  const Dataset ds = Dataset::open(dir / "a");
  REQUIRE(ds.size() == 3);
  for (size_t i = 0; i < ds.size(); ++i) {
    CHECK(ds.clip(i).shape() == Shape{8, 3, 32, 32});
    CHECK(ds.caption(i).size() == 5);
    const Clip c = gen_clip(ds.entries()[i].spec, ds.entries()[i].seed);
    CHECK(ds.clip(i).bitwise_equal(c.video));
  }
  const std::string manifest = read_text(dir / "a" / "manifest.csv");
  CHECK(manifest.rfind("id,shape,color,motion,speed,frames,height,width,seed,caption\n", 0) == 0);
}

TEST_CASE("ppm grid: header, quantisation and round trip") {
  Tensor v({2, 3, 2, 3});
  Rng rng(8);
  rng.fill_uniform(v, -0.2f, 1.2f);
  const auto bytes = encode_ppm_grid(v);
  const std::string header = "P6\n6 2\n255\n";
  REQUIRE(bytes.size() == header.size() + 2 * 6 * 3);
  CHECK(std::memcmp(bytes.data(), header.data(), header.size()) == 0);
  // Pixel (y=1, x=4) is frame 1, column 1.
  const size_t off = header.size() + (1 * 6 + 4) * 3;
  for (int c = 0; c < 3; ++c) {
    const float x = std::min(1.0f, std::max(0.0f, v.at({1, c, 1, 1})));
    CHECK(bytes[off + c] == static_cast<uint8_t>(std::lround(255.0f * x)));
  }
  const Tensor back = decode_ppm_grid(bytes, 2);
  CHECK(encode_ppm_grid(back) == bytes);

  const auto dir = testutil::temp_dir("ppm");
  write_ppm_grid(dir / "v.ppm", back);
  CHECK(read_ppm_grid(dir / "v.ppm", 2).bitwise_equal(back));
  CHECK_THROWS_AS(decode_ppm_grid(std::vector<uint8_t>{'P', '3'}, 1), FormatError);
}
