// Copyright 2026 The lvg Authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <thread>

#include "lvg/editing.hpp"
#include "lvg/error.hpp"
#include "lvg/synthetic.hpp"
#include "support/support.hpp"

using namespace lvg;

namespace {

std::vector<Image> clip(std::uint64_t seed, int n, int size = 32) {
  std::vector<Image> out;
  for (int i = 0; i < n; ++i) out.push_back(synthetic_frame(seed, i * 2, size));
  return out;
}

EditConfig config(int steps, std::vector<HookSpec> hooks, int resolution = 32) {
  EditConfig c;
  c.steps = steps;
  c.hooks = std::move(hooks);
  c.resolution = resolution;
  return c;
}

// Constant predictor whose encoder fails from the given call on.
class FlakyBackend final : public DiffusionBackend {
 public:
  explicit FlakyBackend(int fail_at) : fail_at_(fail_at) {}
  std::string kind() const override { return "flaky"; }
  Shape3 latent_shape(int s) const override { return inner_.latent_shape(s); }
  Latent predict_noise(const Latent& z, StepInfo st, const Condition& c, const Latent* ctl) const override {
    return inner_.predict_noise(z, st, c, ctl);
  }
  Latent encode(const Image& image) const override {
    if (calls_++ >= fail_at_) throw Error(Errc::kIo, "encoder offline");
    return inner_.encode(image);
  }
  Image decode(const Latent& z) const override { return inner_.decode(z); }
  Condition encode_text(std::string_view t) const override { return inner_.encode_text(t); }
  int condition_dim() const override { return inner_.condition_dim(); }
  const ParamSet& parameters() const override { return inner_.parameters(); }
  std::vector<std::string> adaptable_layers() const override { return {}; }
  std::unique_ptr<DiffusionBackend> with_parameters(ParamSet) const override { return nullptr; }
  double denoising_loss(const Latent&, StepInfo, const Condition&, const Latent*, const Latent&,
                        ParamSet*) const override {
    return 0.0;
  }
  TensorArchive to_archive() const override { return {}; }

 private:
  ConstantNoiseBackend inner_{ConstantNoiseConfig{}};
  int fail_at_;
  mutable int calls_ = 0;
};

}  // namespace

TEST_CASE("leading levels and config validation") {
  CHECK(leading_levels(20, 0.8) == LevelRange{4, 20});
  CHECK(leading_levels(10, 0.8) == LevelRange{2, 10});
  CHECK(leading_levels(5, 0.0) == LevelRange{5, 5});
  CHECK(leading_levels(5, 1.0) == LevelRange{0, 5});
  EditConfig c;
  CHECK_NOTHROW(c.validate());
  c.hooks[0].weight = 1.5;
  CHECK_THROWS_AS(c.validate(), Error);
  c.hooks[0].weight = 0.5;
  c.hooks[0].levels = LevelRange{0, c.steps + 1};
  CHECK_THROWS_AS(c.validate(), Error);
}

TEST_CASE("edit config json round trip") {
  EditConfig c = config(7, {{std::string(kPreframeInjection), 0.25, LevelRange{1, 6}}});
  c.control = ControlKind::kEdge;
  c.ddim.guidance_scale = 2.0;
  const EditConfig back = edit_config_from_json(edit_config_to_json(c));
  CHECK(back.steps == 7);
  CHECK(back.hooks == c.hooks);
  CHECK(back.control == ControlKind::kEdge);
  CHECK(back.ddim.guidance_scale == 2.0);
  CHECK(edit_config_from_json("{}").hooks.size() == 1);
  CHECK_THROWS_AS(edit_config_from_json("{\"steps\": \"x\"}"), Error);
  CHECK_THROWS_AS(edit_config_from_json("{\"control\": \"depth\"}"), Error);
}

TEST_CASE("hook registry") {
  CHECK(make_hook({}, 10)->name() == kPreframeInjection);
  try {
    make_hook({"cross_window_attention", 0.5, std::nullopt}, 10);
    FAIL("expected unsupported");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::kUnsupported);
  }
  try {
    make_hook({"warp", 0.5, std::nullopt}, 10);
    FAIL("expected unknown");
  } catch (const Error& e) {
    CHECK(std::string(e.what()).find("preframe_injection") != std::string::npos);
  }
}

TEST_CASE("control maps") {
  const Shape3 lat{4, 4, 4};
  const auto flat = make_control({Image(16, 16, 90)}, ControlKind::kEdge, lat);
  REQUIRE(flat.size() == 1);
  CHECK(flat[0].values().isZero(0.0));

  Image step(16, 16, 0);
  for (int y = 0; y < 16; ++y)
    for (int x = 8; x < 16; ++x)
      for (int c = 0; c < 3; ++c) step.at(x, y, c) = 200;
  const auto e = make_control({step}, ControlKind::kEdge, lat)[0];
  CHECK(e.shape() == Shape3{1, 4, 4});
  for (int y = 0; y < 4; ++y) {
    CHECK(e.at(0, y, 0) == 0.0);
    CHECK(e.at(0, y, 1) > 0.0);
    CHECK(e.at(0, y, 2) > 0.0);
    CHECK(e.at(0, y, 3) == 0.0);
  }
  CHECK(make_control({step}, ControlKind::kNone, lat).empty());
  try {
    parse_control_kind("depth");
    FAIL("expected unsupported");
  } catch (const Error& e2) {
    CHECK(std::string(e2.what()).find("none, edge") != std::string::npos);
  }
}

TEST_CASE("identity edit with a state-independent predictor") {
  const ConstantNoiseBackend b(ConstantNoiseConfig{});
  const auto frames = clip(4, 3);
  const auto seg = edit_segment(frames, "a person walks", "a person walks", config(20, {}), b);
  REQUIRE(seg.edited_latents.size() == 3);
  for (std::size_t i = 0; i < 3; ++i) CHECK(relative_error(seg.edited_latents[i], seg.source_latents[i]) <= 1e-5);
  CHECK(seg.frames.size() == frames.size());
  for (const auto& f : seg.frames) CHECK(f.width == 32);
}

TEST_CASE("single frame segment and resolution change") {
  const auto& b = test::toy_backend();
  const auto seg = edit_segment({synthetic_frame(1, 0, 48)}, "a", "b", config(5, {HookSpec{}}, 16), b);
  REQUIRE(seg.frames.size() == 1);
  CHECK(seg.frames[0].width == 16);
  const auto plain = edit_segment({synthetic_frame(1, 0, 48)}, "a", "b", config(5, {}, 16), b);
  CHECK(seg.edited_latents[0] == plain.edited_latents[0]);
  CHECK_THROWS_AS(edit_segment({}, "a", "b", config(5, {}), b), Error);
}

TEST_CASE("edited query changes the toy output") {
  const auto& b = test::toy_backend();
  const auto frames = clip(5, 3);
  const auto same = edit_segment(frames, "a person walks", "a person walks", config(10, {}), b);
  const auto diff = edit_segment(frames, "a person walks", "a robot dances", config(10, {}), b);
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK((same.edited_latents[i].values() - diff.edited_latents[i].values()).norm() > 0.0);
  }
}

TEST_CASE("injection weight 0 is a no-op and weight 1 copies frame 0") {
  const auto& b = test::toy_backend();
  const auto frames = clip(6, 4);
  const auto none = edit_segment(frames, "a", "b", config(8, {}), b);
  const auto zero = edit_segment(frames, "a", "b", config(8, {{std::string(kPreframeInjection), 0.0, std::nullopt}}), b);
  for (std::size_t i = 0; i < 4; ++i) CHECK(none.edited_latents[i] == zero.edited_latents[i]);
  const auto full = edit_segment(frames, "a", "b", config(8, {{std::string(kPreframeInjection), 1.0, LevelRange{0, 8}}}), b);
  for (std::size_t i = 1; i < 4; ++i) {
    CHECK(full.edited_latents[i] == full.edited_latents[0]);
    CHECK(full.frames[i] == full.frames[0]);
  }
  CHECK(full.edited_latents[0] == none.edited_latents[0]);
}

TEST_CASE("adjacent-frame distance is monotone in the injection weight") {
  const auto& b = test::toy_backend();
  const auto frames = clip(7, 8);
  double prev = 1e300;
  for (double lambda : {0.0, 0.25, 0.5, 0.75, 1.0}) {
    const auto seg =
        edit_segment(frames, "a", "b", config(10, {{std::string(kPreframeInjection), lambda, LevelRange{0, 10}}}), b);
    const double d = test::mean_adjacent_distance(seg.edited_latents);
    CHECK(d <= prev);
    prev = d;
  }
}

TEST_CASE("segments edited concurrently equal serial results") {
  const auto& b = test::toy_backend();
  const auto a = clip(8, 3), c = clip(9, 3);
  const auto cfg = config(6, {HookSpec{}});
  const auto sa = edit_segment(a, "x", "y", cfg, b);
  const auto sc = edit_segment(c, "p", "q", cfg, b);
  EditedSegment pa, pc;
  {
    std::jthread t1([&] { pa = edit_segment(a, "x", "y", cfg, b); });
    std::jthread t2([&] { pc = edit_segment(c, "p", "q", cfg, b); });
  }
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(pa.edited_latents[i] == sa.edited_latents[i]);
    CHECK(pc.edited_latents[i] == sc.edited_latents[i]);
  }
}

TEST_CASE("control changes the toy edit and failures name the frame") {
  const auto& b = test::toy_backend();
  const auto frames = clip(10, 2);
  auto cfg = config(5, {});
  const auto plain = edit_segment(frames, "a", "b", cfg, b);
  cfg.control = ControlKind::kEdge;
  const auto edged = edit_segment(frames, "a", "b", cfg, b);
  CHECK_FALSE(plain.edited_latents[0] == edged.edited_latents[0]);

  const auto audit = segment_audit_json(edged, cfg);
  CHECK(audit.find("noise_digest") != std::string::npos);

  FlakyBackend flaky(2);
  try {
    edit_segment(clip(10, 4), "a", "b", config(5, {}), flaky);
    FAIL("expected StepError");
  } catch (const StepError& e) {
    CHECK(e.index() == 2);
    CHECK(std::string(e.what()).find("frame 2") != std::string::npos);
  }
}
