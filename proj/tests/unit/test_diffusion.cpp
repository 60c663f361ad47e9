// Copyright 2026 The lvg Authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include "lvg/diffusion.hpp"
#include "lvg/error.hpp"
#include "lvg/synthetic.hpp"
#include "lvg/toy_backend.hpp"
#include "support/support.hpp"

using namespace lvg;

TEST_CASE("schedule examples and invariants") {
  const auto one = make_schedule(1, ScheduleKind::kLinear, 0.2);
  REQUIRE(one.alphas.size() == 2);
  CHECK(one.alpha(0) == 1.0);
  CHECK(one.alpha(1) == doctest::Approx(0.2).epsilon(1e-15));
  CHECK(make_schedule(50, ScheduleKind::kLinear, 0.01).alpha(25) == doctest::Approx(0.505).epsilon(1e-14));
  for (auto kind : {ScheduleKind::kLinear, ScheduleKind::kCosine}) {
    for (int T : {1, 2, 7, 50, 1000}) {
      const auto s = make_schedule(T, kind, 0.01);
      CHECK(s.steps() == T);
      CHECK(s.alpha(0) == 1.0);
      CHECK(s.alpha(T) == doctest::Approx(0.01).epsilon(1e-12));
      for (int t = 0; t < T; ++t) CHECK(s.alpha(t + 1) < s.alpha(t));
      CHECK_NOTHROW(validate_schedule(s));
    }
  }
  CHECK_THROWS_AS(make_schedule(0, ScheduleKind::kLinear, 0.01), Error);
  CHECK_THROWS_AS(make_schedule(5, ScheduleKind::kLinear, 0.0), Error);
  CHECK_THROWS_AS(make_schedule(5, ScheduleKind::kLinear, 1.0), Error);
  CHECK_THROWS_AS(validate_schedule({{1.0, 0.5, 0.5}}), Error);
  CHECK_THROWS_AS(validate_schedule({{1.0, -0.1}}), Error);
  CHECK(parse_schedule_kind("cosine") == ScheduleKind::kCosine);
  CHECK_THROWS_AS(parse_schedule_kind("sigmoid"), Error);
}

TEST_CASE("state-independent predictors round trip to float precision") {
  const ConstantNoiseBackend zero(ConstantNoiseConfig{.magnitude = 0.0});
  const ConstantNoiseBackend constant(ConstantNoiseConfig{});
  const ConstantNoiseBackend frozen(ConstantNoiseConfig{.time_varying = false});
  for (const DiffusionBackend* b : {static_cast<const DiffusionBackend*>(&zero), static_cast<const DiffusionBackend*>(&constant),
                                    static_cast<const DiffusionBackend*>(&frozen)}) {
    for (int T : {1, 10, 50}) {
      for (auto kind : {ScheduleKind::kLinear, ScheduleKind::kCosine}) {
        const auto s = make_schedule(T, kind, 0.01);
        const Latent z = test::random_latent({4, 8, 8}, static_cast<std::uint64_t>(T));
        CHECK(test::round_trip_error(*b, z, b->encode_text("x"), s) <= 1e-6);
      }
    }
  }
}

TEST_CASE("invert and sample trajectories") {
  const ConstantNoiseBackend b(ConstantNoiseConfig{});
  const auto s = make_schedule(5, ScheduleKind::kLinear, 0.05);
  const Latent z = test::random_latent({4, 4, 4}, 1);
  std::vector<Latent> up, down;
  const Latent zT = ddim_invert(z, b.encode_text("a"), s, b, nullptr, &up);
  REQUIRE(up.size() == 6);
  CHECK(up.front() == z);
  CHECK(up.back() == zT);
  std::vector<int> levels;
  ddim_sample(zT, b.encode_text("a"), s, b, [&](int level, Latent&) { levels.push_back(level); }, nullptr, &down);
  CHECK(levels == std::vector<int>{5, 4, 3, 2, 1, 0});
  REQUIRE(down.size() == 6);
  for (int t = 0; t <= 5; ++t) CHECK(relative_error(down[static_cast<std::size_t>(t)], up[static_cast<std::size_t>(t)]) < 1e-12);
}

TEST_CASE("a single step matches the closed form") {
  const Latent z = test::random_latent({1, 2, 2}, 3);
  const Latent e = test::random_latent({1, 2, 2}, 4);
  const Latent out = ddim_step(z, e, 0.9, 0.4);
  for (int i = 0; i < 4; ++i) {
    const double expect = std::sqrt(0.4) * (z.values()(0, i) - std::sqrt(0.1) * e.values()(0, i)) / std::sqrt(0.9) +
                          std::sqrt(0.6) * e.values()(0, i);
    CHECK(out.values()(0, i) == doctest::Approx(expect).epsilon(1e-14));
  }
}

TEST_CASE("trained toy backend round trip stays under the frozen bound") {
  const auto& b = test::toy_backend();
  const Condition c = b.encode_text("a person walks in a park");
  const auto lin = make_schedule(50, ScheduleKind::kLinear, 0.01);
  const auto cos = make_schedule(50, ScheduleKind::kCosine, 0.01);
  for (std::uint64_t k = 0; k < 8; ++k) {
    const Latent z = test::random_latent(b.latent_shape(64), k);
    CHECK(test::round_trip_error(b, z, c, lin) <= test::kToyRoundTripLinear50);
    CHECK(test::round_trip_error(b, z, c, cos) <= test::kToyRoundTripCosine50);
  }
}

TEST_CASE("toy backend depends on latent, condition, time and control") {
  const auto& b = test::toy_backend();
  const Latent z = test::random_latent(b.latent_shape(32), 9);
  const Latent ctrl = test::random_latent({1, 8, 8}, 10);
  const Condition c1 = b.encode_text("a dog"), c2 = b.encode_text("a cat");
  const Latent base = b.predict_noise(z, {3, 0.7}, c1);
  CHECK(base == b.predict_noise(z, {3, 0.7}, c1));
  CHECK((base.values() - b.predict_noise(z, {3, 0.7}, c2).values()).norm() > 0);
  CHECK((base.values() - b.predict_noise(z, {3, 0.3}, c1).values()).norm() > 0);
  CHECK((base.values() - b.predict_noise(z, {3, 0.7}, c1, &ctrl).values()).norm() > 0);
  CHECK((base.values() - b.predict_noise(test::random_latent(z.shape(), 11), {3, 0.7}, c1).values()).norm() > 0);
  CHECK_THROWS_AS(b.predict_noise(z, {3, 0.7}, Condition::Zero(3)), Error);
}

TEST_CASE("toy backend gradients agree with central differences") {
  const auto b = ToyConvBackend::initialize(ToyConfig{.hidden = 5, .latent_gain = 0.7, .condition_dim = 6}, 17);
  const Latent z = test::random_latent({4, 5, 6}, 1);
  const Latent target = test::random_latent({4, 5, 6}, 2);
  const Latent ctrl = test::random_latent({1, 5, 6}, 3);
  const Condition c = b->encode_text("a b c");
  const StepInfo step{2, 0.6};
  ParamSet grads;
  b->denoising_loss(z, step, c, &ctrl, target, &grads);
  Rng pick(5);
  for (const auto& [name, g] : grads) {
    for (int k = 0; k < 6; ++k) {
      const Eigen::Index r = static_cast<Eigen::Index>(pick.below(static_cast<std::uint64_t>(g.rows())));
      const Eigen::Index col = static_cast<Eigen::Index>(pick.below(static_cast<std::uint64_t>(g.cols())));
      const double h = 1e-6;
      ParamSet plus = b->parameters(), minus = b->parameters();
      plus.at(name)(r, col) += h;
      minus.at(name)(r, col) -= h;
      const double fd = (b->with_parameters(plus)->denoising_loss(z, step, c, &ctrl, target, nullptr) -
                         b->with_parameters(minus)->denoising_loss(z, step, c, &ctrl, target, nullptr)) /
                        (2 * h);
      CHECK(g(r, col) == doctest::Approx(fd).epsilon(1e-5).scale(1e-8));
    }
  }
  CHECK(grads.size() == b->parameters().size());
}

TEST_CASE("constant backend offset gradient agrees with central differences") {
  ConstantNoiseConfig cfg;
  ParamSet p;
  p["offset"] = Matrix::Random(4, ConstantNoiseBackend::kOffsetCols);
  const ConstantNoiseBackend b(cfg, p);
  const Latent z = test::random_latent({4, 4, 8}, 1), target = test::random_latent({4, 4, 8}, 2);
  ParamSet grads;
  b.denoising_loss(z, {1, 0.5}, b.encode_text("x"), nullptr, target, &grads);
  for (Eigen::Index r = 0; r < 4; ++r) {
    for (Eigen::Index c = 0; c < 16; c += 5) {
      ParamSet plus = p, minus = p;
      plus.at("offset")(r, c) += 1e-6;
      minus.at("offset")(r, c) -= 1e-6;
      const double fd = (ConstantNoiseBackend(cfg, plus).denoising_loss(z, {1, 0.5}, b.encode_text("x"), nullptr, target, nullptr) -
                         ConstantNoiseBackend(cfg, minus).denoising_loss(z, {1, 0.5}, b.encode_text("x"), nullptr, target, nullptr)) /
                        2e-6;
      CHECK(grads.at("offset")(r, c) == doctest::Approx(fd).epsilon(1e-6).scale(1e-8));
    }
  }
}

TEST_CASE("codec: exact on block-constant images, shapes, errors") {
  const PatchCodec codec(1);
  Image img(16, 8);
  for (int y = 0; y < 8; ++y)
    for (int x = 0; x < 16; ++x)
      for (int c = 0; c < 3; ++c) img.at(x, y, c) = static_cast<std::uint8_t>(((x / 4) * 40 + (y / 4) * 90 + c * 20) % 256);
  const Latent z = codec.encode(img);
  CHECK(z.shape() == Shape3{4, 2, 4});
  CHECK(codec.decode(z) == img);
  const Image smooth = synthetic_frame(3, 0, 32);
  const Image back = codec.decode(codec.encode(smooth));
  CHECK(back.width == 32);
  CHECK(back.height == 32);
  CHECK_THROWS_AS(codec.encode(Image(10, 8)), Error);
}

TEST_CASE("backend archives round trip") {
  test::TempDir dir("backend");
  const auto& b = test::toy_backend();
  save_backend(b, dir.path() / "toy.archive");
  const auto l = load_backend(dir.path() / "toy.archive");
  CHECK(l->kind() == "toy_conv");
  CHECK(same_values(l->parameters(), b.parameters()));
  const Latent z = test::random_latent(b.latent_shape(16), 2);
  CHECK(l->predict_noise(z, {1, 0.9}, b.encode_text("q")) == b.predict_noise(z, {1, 0.9}, b.encode_text("q")));

  const ConstantNoiseBackend cb(ConstantNoiseConfig{.magnitude = 0.3});
  save_backend(cb, dir.path() / "c.archive");
  const auto cl = load_backend(dir.path() / "c.archive");
  CHECK(cl->predict_noise(z, {4, 0.5}, cb.encode_text("q")) == cb.predict_noise(z, {4, 0.5}, cb.encode_text("q")));
}

TEST_CASE("full fine-tuning: zero steps copies, descent, immutability") {
  const auto& b = test::toy_backend();
  const auto s = make_schedule(20, ScheduleKind::kCosine, 0.01);
  std::vector<DenoisingExample> ex{{b.encode(synthetic_frame(1, 0, 32)), b.encode_text("a"), std::nullopt}};
  const auto before = b.parameters();
  const auto copy = finetune_full(b, ex, s, {.steps = 0});
  CHECK(same_values(copy->parameters(), b.parameters()));
  TrainingReport rep;
  const auto tuned = finetune_full(b, ex, s, {.steps = 100, .batch = 2, .learning_rate = 0.1, .seed = 3, .fixed_noise = true}, &rep);
  CHECK(rep.losses.size() == 100);
  CHECK(rep.window() == 10);
  CHECK(rep.final_running_loss() < rep.initial_running_loss());
  CHECK(same_values(b.parameters(), before));
  CHECK_FALSE(same_values(tuned->parameters(), before));
  CHECK_THROWS_AS(finetune_full(b, {}, s, {.steps = 1}), Error);
}

TEST_CASE("non-finite inputs raise step errors") {
  const ConstantNoiseBackend b(ConstantNoiseConfig{});
  const auto s = make_schedule(3, ScheduleKind::kLinear, 0.1);
  Latent z = test::random_latent({4, 2, 2}, 1);
  z.at(0, 0, 0) = std::nan("");
  CHECK_THROWS_AS(ddim_invert(z, b.encode_text("a"), s, b), StepError);
  const Latent ok = test::random_latent({4, 2, 2}, 1);
  try {
    ddim_sample(ok, b.encode_text("a"), s, b, [](int level, Latent& zz) {
      if (level == 1) zz.at(0, 0, 0) = INFINITY;
    });
    FAIL("expected StepError");
  } catch (const StepError& e) {
    CHECK(e.code() == Errc::kNonFinite);
  }
}

TEST_CASE("guidance against the zero condition") {
  const auto& b = test::toy_backend();
  const auto s = make_schedule(4, ScheduleKind::kCosine, 0.05);
  const Latent z = test::random_latent(b.latent_shape(16), 5);
  const Condition c = b.encode_text("a dog");
  CHECK(ddim_invert(z, c, s, b, nullptr, nullptr, {.guidance_scale = 1.0}) == ddim_invert(z, c, s, b));
  CHECK_FALSE(ddim_invert(z, c, s, b, nullptr, nullptr, {.guidance_scale = 3.0}) == ddim_invert(z, c, s, b));
}

TEST_CASE("noise sampler pool replays draws") {
  const auto s = make_schedule(10, ScheduleKind::kLinear, 0.1);
  std::vector<DenoisingExample> ex{{test::random_latent({4, 2, 2}, 1), Condition::Zero(2), std::nullopt}};
  NoiseSampler pooled(s, 3, 3);
  std::vector<NoiseSampler::Draw> first;
  for (int i = 0; i < 3; ++i) first.push_back(pooled.draw(ex));
  for (int i = 0; i < 6; ++i) {
    const auto d = pooled.draw(ex);
    CHECK(d.eps == first[static_cast<std::size_t>(i % 3)].eps);
    CHECK(d.step.t == first[static_cast<std::size_t>(i % 3)].step.t);
  }
  NoiseSampler fresh(s, 3);
  CHECK(fresh.draw(ex).eps == first[0].eps);
  CHECK_FALSE(fresh.draw(ex).eps == fresh.draw(ex).eps);
}
