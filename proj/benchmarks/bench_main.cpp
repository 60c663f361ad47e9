// Copyright 2026 The lvg Authors
// SPDX-License-Identifier: Apache-2.0

#include <benchmark/benchmark.h>

#include "lvg/editing.hpp"
#include "lvg/grounding.hpp"
#include "lvg/morphing.hpp"
#include "lvg/synthetic.hpp"
#include "lvg/toy_backend.hpp"

namespace {

void BM_Retrieve(benchmark::State& state) {
  lvg::SyntheticCorpusOptions o;
  o.videos = static_cast<int>(state.range(0));
  const auto store = lvg::synthetic_manifest(o);
  const lvg::HashTextEncoder enc(32, 0);
  const auto model = lvg::GroundingModel::initialize(32, 32, 0);
  const std::vector<std::string> q{"a person walks a dog in the park"};
  for (auto _ : state) benchmark::DoNotOptimize(lvg::retrieve(q, store, enc, model, {5, 1}));
  state.SetItemsProcessed(state.iterations() * o.videos);
}
BENCHMARK(BM_Retrieve)->Arg(20)->Arg(200);

const lvg::ToyConvBackend& backend() {
  static const auto b = lvg::train_toy_backend(lvg::ToyConfig{}, lvg::ToyTrainOptions{}, 42);
  return *b;
}

void BM_DdimRoundTrip(benchmark::State& state) {
  const auto& b = backend();
  const auto s = lvg::make_schedule(static_cast<int>(state.range(0)), lvg::ScheduleKind::kCosine, 0.01);
  const lvg::Latent z0 = b.encode(lvg::synthetic_frame(1, 0, 64));
  const lvg::Condition c = b.encode_text("a cat");
  for (auto _ : state) benchmark::DoNotOptimize(lvg::ddim_sample(lvg::ddim_invert(z0, c, s, b), c, s, b));
}
BENCHMARK(BM_DdimRoundTrip)->Arg(20)->Arg(50)->Unit(benchmark::kMillisecond);

void BM_Slerp(benchmark::State& state) {
  lvg::Rng rng(3);
  lvg::Latent a({4, 16, 16}), b({4, 16, 16});
  for (Eigen::Index i = 0; i < a.values().size(); ++i) {
    a.values().data()[i] = rng.normal();
    b.values().data()[i] = rng.normal();
  }
  for (auto _ : state) benchmark::DoNotOptimize(lvg::slerp(a, b, 0.37));
}
BENCHMARK(BM_Slerp);

void BM_EditSegment(benchmark::State& state) {
  std::vector<lvg::Image> frames;
  for (int i = 0; i < 8; ++i) frames.push_back(lvg::synthetic_frame(5, i, 64));
  lvg::EditConfig cfg;
  for (auto _ : state) benchmark::DoNotOptimize(lvg::edit_segment(frames, "a horse", "a zebra", cfg, backend()));
}
BENCHMARK(BM_EditSegment)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
