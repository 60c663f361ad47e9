// Copyright 2026 The lvg Authors
// SPDX-License-Identifier: Apache-2.0

// Acceptance gate: one PASS/FAIL line per criterion, nonzero exit on failure.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <numbers>
#include <sstream>
#include <string>

#include "lvg/editing.hpp"
#include "lvg/error.hpp"
#include "lvg/metrics.hpp"
#include "lvg/morphing.hpp"
#include "lvg/personalization.hpp"
#include "lvg/pipeline.hpp"
#include "lvg/synthetic.hpp"
#include "support/support.hpp"

using namespace lvg;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(const char* f, double a, double b = 0.0, double c = 0.0) {
  char buf[256];
  std::snprintf(buf, sizeof(buf), f, a, b, c);
  return buf;
}

double max_score_diff(const std::vector<QueryResult>& a, const std::vector<QueryResult>& b) {
  double m = 0.0;
  for (std::size_t q = 0; q < a.size() && q < b.size(); ++q)
    for (std::size_t k = 0; k < a[q].candidates.size() && k < b[q].candidates.size(); ++k)
      m = std::max(m, std::abs(a[q].candidates[k].score - b[q].candidates[k].score));
  return m;
}

// Rankings (videos, spans, order, ties) must agree exactly; scores agree to
// rounding since the oracle sums in a different order.
Outcome retrieval_oracle() {
  const auto t0 = Clock::now();
  const std::vector<std::string> queries{"a person walks a dog", "a red car on a road", "children play in snow",
                                         "a cooking show", "planted moment query"};
  int corpora = 0, mismatched = 0;
  double worst = 0.0;
  auto compare = [&](const std::vector<QueryResult>& got, const std::vector<QueryResult>& want) {
    worst = std::max(worst, max_score_diff(got, want));
    return test::same_ranking(got, want, 1e-12);
  };
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    SyntheticCorpusOptions o;  // 20 videos x 16 clips, d = 32
    o.seed = seed;
    o.text_seed = seed;
    o.planted = {{"planted moment query", static_cast<int>(seed % 20), {2, 9}}};
    const auto store = synthetic_manifest(o);
    const int joint = seed % 2 ? 16 : 32;
    const HashTextEncoder enc(joint, seed);
    const auto model = GroundingModel::initialize(32, joint, seed);
    bool ok = true;
    for (int k : {1, 5, 20, 25}) {
      const auto got = retrieve(queries, store, enc, model, {k, 1 + static_cast<int>(seed % 3)});
      ok = compare(got, test::brute_force_retrieve(queries, store, enc, model, k)) && ok;
    }
    if (!ok) ++mismatched;
    ++corpora;
  }
  // A corpus of duplicated videos forces exact ties across videos.
  {
    SyntheticCorpusOptions o;
    o.videos = 5;
    o.seed = 99;
    auto store = synthetic_manifest(o);
    auto copies = store.records;
    for (auto& r : copies) r.video_id = "dup_" + r.video_id;
    store.records.insert(store.records.begin(), copies.begin(), copies.end());
    const HashTextEncoder enc(32, 1);
    const auto model = GroundingModel::initialize(32, 32, 1);
    const auto got = retrieve(queries, store, enc, model, {10, 2});
    if (!compare(got, test::brute_force_retrieve(queries, store, enc, model, 10))) ++mismatched;
    ++corpora;
  }
  const double secs = seconds_since(t0);
  return {mismatched == 0 && corpora >= 21 && secs < 10.0,
          std::to_string(corpora) + " corpora, " + std::to_string(mismatched) + " ranking mismatches" +
              fmt(", max score diff %.1e, %.2f s", worst, secs)};
}

Outcome ddim_round_trip() {
  double worst_exact = 0.0, worst_lin = 0.0, worst_cos = 0.0;
  const ConstantNoiseBackend zero(ConstantNoiseConfig{.magnitude = 0.0});
  const ConstantNoiseBackend constant(ConstantNoiseConfig{.magnitude = 1.0, .time_varying = false});
  const ConstantNoiseBackend varying(ConstantNoiseConfig{});
  for (int T : {1, 10, 50}) {
    for (const DiffusionBackend* b : {static_cast<const DiffusionBackend*>(&zero), static_cast<const DiffusionBackend*>(&constant),
                                      static_cast<const DiffusionBackend*>(&varying)}) {
      for (auto kind : {ScheduleKind::kLinear, ScheduleKind::kCosine}) {
        const auto s = make_schedule(T, kind, 0.01);
        for (std::uint64_t seed = 0; seed < 4; ++seed) {
          const Latent z = test::random_latent(b->latent_shape(16), seed);
          worst_exact = std::max(worst_exact, test::round_trip_error(*b, z, b->encode_text("a"), s));
        }
      }
    }
  }
  const auto& toy = test::toy_backend();
  const auto lin = make_schedule(50, ScheduleKind::kLinear, 0.01);
  const auto cos = make_schedule(50, ScheduleKind::kCosine, 0.01);
  for (std::uint64_t seed = 0; seed < 8; ++seed) {
    const Latent z = test::random_latent(toy.latent_shape(64), 1000 + seed);
    const Condition c = toy.encode_text("a dog runs on the beach");
    worst_lin = std::max(worst_lin, test::round_trip_error(toy, z, c, lin));
    worst_cos = std::max(worst_cos, test::round_trip_error(toy, z, c, cos));
  }
  const bool ok = worst_exact <= 1e-6 && worst_lin <= test::kToyRoundTripLinear50 && worst_cos <= test::kToyRoundTripCosine50;
  return {ok, fmt("state-independent max %.2e; toy T=50 linear %.4f, cosine %.4f", worst_exact, worst_lin, worst_cos)};
}

Outcome slerp_suite() {
  double worst_angle = 0.0, worst_norm = 0.0, worst_mid = 0.0, worst_end = 0.0;
  for (std::uint64_t p = 0; p < 100; ++p) {
    Latent a = test::random_latent({4, 8, 8}, 2 * p), b = test::random_latent({4, 8, 8}, 2 * p + 1);
    a.values() /= a.norm();
    b.values() /= b.norm();
    const double phi = test::angle_between(a, b);
    for (int k = 0; k <= 12; ++k) {
      const double t = k / 12.0;
      const Latent z = slerp(a, b, t);
      worst_angle = std::max(worst_angle, std::abs(test::angle_between(a, z) - t * phi));
      worst_norm = std::max(worst_norm, std::abs(z.norm() - 1.0));
    }
    worst_end = std::max({worst_end, relative_error(slerp(a, b, 0.0), a), relative_error(slerp(a, b, 1.0), b)});
    // Gram-Schmidt gives an orthogonal unit pair.
    Latent o = b;
    o.values() -= a.values().cwiseProduct(b.values()).sum() * a.values();
    o.values() /= o.norm();
    const Latent mid = slerp(a, o, 0.5);
    worst_mid = std::max(worst_mid, (mid.values() - (a.values() + o.values()) / std::numbers::sqrt2).cwiseAbs().maxCoeff());
  }
  const bool ok = worst_end <= 1e-12 && worst_mid <= 1e-6 && worst_angle <= 1e-4 && worst_norm <= 1e-6;
  return {ok, fmt("100 pairs x 13 alphas: angle %.2e rad, norm %.2e, midpoint %.2e", worst_angle, worst_norm, worst_mid)};
}

LoraDelta random_delta(const DiffusionBackend& backend, int rank, std::uint64_t seed) {
  LoraDelta d = zero_lora(backend, rank, 0.3, seed);
  Rng rng(seed ^ 0xabcdef);
  for (auto& [name, l] : d.layers)
    for (Eigen::Index i = 0; i < l.b.size(); ++i) l.b.data()[i] = rng.normal();
  return d;
}

double max_diff(const std::map<std::string, Matrix>& a, const std::map<std::string, Matrix>& b) {
  double m = 0.0;
  for (const auto& [name, x] : a) m = std::max(m, (x - b.at(name)).cwiseAbs().maxCoeff());
  return m;
}

bool same_layers(const LoraDelta& a, const LoraDelta& b) {
  if (a.layers.size() != b.layers.size()) return false;
  for (auto i = a.layers.begin(), j = b.layers.begin(); i != a.layers.end(); ++i, ++j)
    if (i->first != j->first) return false;
  return true;
}

Outcome lora_interpolation() {
  const auto& toy = test::toy_backend();
  double worst_end = 0.0, worst_const = 0.0;
  bool layers_ok = true;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const LoraDelta di = random_delta(toy, 1 + static_cast<int>(seed % 4), seed);
    const LoraDelta dj = random_delta(toy, 1 + static_cast<int>((seed + 2) % 4), seed + 50);
    const LoraDelta d0 = lora_interpolate(di, dj, 0.0), d1 = lora_interpolate(di, dj, 1.0);
    layers_ok = layers_ok && same_layers(d0, di) && same_layers(d1, dj);
    worst_end = std::max({worst_end, max_diff(d0.effective(), di.effective()), max_diff(d1.effective(), dj.effective())});
    const auto ei = di.effective();
    for (int k = 0; k <= 10; ++k) {
      const LoraDelta dk = lora_interpolate(di, di, k / 10.0);
      layers_ok = layers_ok && same_layers(dk, di);
      worst_const = std::max(worst_const, max_diff(dk.effective(), ei));
    }
  }
  return {layers_ok && worst_end <= 1e-6 && worst_const <= 1e-6,
          fmt("endpoints %.2e, equal deltas over alpha %.2e", worst_end, worst_const) +
              (layers_ok ? ", layer sets identical" : ", LAYER SETS DIFFER")};
}

Outcome finetune_descent() {
  const auto& toy = test::toy_backend();
  const auto s = make_schedule(20, ScheduleKind::kCosine, 0.01);
  std::string detail;
  bool ok = true;
  for (std::uint64_t seed : {0, 1, 2}) {
    const DenoisingExample ex{toy.encode(synthetic_frame(10 + seed, 0, 64)), toy.encode_text("a person rides a bike"),
                              std::nullopt};
    LoraOptions o;
    o.sgd.seed = seed;
    TrainingReport rep;
    lora_finetune(toy, ex, s, o, &rep);
    const bool down = rep.losses.size() == 200 && rep.final_running_loss() < rep.initial_running_loss();
    ok = ok && down;
    detail += fmt("lora[%.0f] %.4f->%.4f ", static_cast<double>(seed), rep.initial_running_loss(), rep.final_running_loss());
  }
  for (std::uint64_t seed : {0, 1}) {
    SubjectSpec spec;
    spec.token = "[V]";
    spec.class_name = "dog";
    for (int i = 0; i < 4; ++i) spec.images.push_back(synthetic_frame(500 + seed, 3 * i, 64));
    spec.sgd.seed = seed;
    TrainingReport rep;
    personalize(toy, spec, s, &rep);
    const bool down = rep.losses.size() == 300 && rep.final_running_loss() < rep.initial_running_loss();
    ok = ok && down;
    detail += fmt("subject[%.0f] %.4f->%.4f ", static_cast<double>(seed), rep.initial_running_loss(), rep.final_running_loss());
  }
  detail.pop_back();
  return {ok, detail};
}

Outcome transition_counts() {
  const auto& toy = test::toy_backend();
  const auto s = make_schedule(10, ScheduleKind::kCosine, 0.01);
  bool ok = true;
  std::string detail;
  for (int n : {15, 2}) {
    TransitionSpec spec;
    spec.n = n;
    spec.prev_frame = synthetic_frame(1, 0, 64);
    spec.next_frame = synthetic_frame(2, 0, 64);
    spec.prev_query = "a cat on a sofa";
    spec.next_query = "a dog in a park";
    spec.seed = 3;
    const auto t = generate_transition(spec, toy, s);
    bool grid = t.alphas.size() == static_cast<std::size_t>(n - 1);
    for (int k = 1; grid && k < n; ++k) grid = t.alphas[static_cast<std::size_t>(k - 1)] == static_cast<double>(k) / n;
    ok = ok && grid && t.frames.size() == static_cast<std::size_t>(n - 1);
    detail += "n=" + std::to_string(n) + ": " + std::to_string(t.frames.size()) + " frames" + (grid ? "" : " (BAD GRID)") + "; ";
  }
  detail.resize(detail.size() - 2);
  return {ok, detail};
}

std::vector<Image> clip(std::uint64_t seed, int n) {
  std::vector<Image> out;
  for (int i = 0; i < n; ++i) out.push_back(synthetic_frame(seed, 2 * i, 64));
  return out;
}

Outcome identity_edit() {
  double worst = 0.0;
  for (const auto& cfg : {ConstantNoiseConfig{.magnitude = 0.0}, ConstantNoiseConfig{}}) {
    const ConstantNoiseBackend b(cfg);
    for (int T : {1, 10, 50}) {
      EditConfig e;
      e.steps = T;
      e.hooks.clear();
      const auto seg = edit_segment(clip(21, 8), "a man surfs", "a man surfs", e, b);
      for (std::size_t i = 0; i < seg.source_latents.size(); ++i)
        worst = std::max(worst, relative_error(seg.edited_latents[i], seg.source_latents[i]));
    }
  }
  return {worst <= 1e-5, fmt("max relative latent error %.2e", worst)};
}

Outcome injection_effect() {
  const auto& toy = test::toy_backend();
  const auto frames = clip(31, 8);
  EditConfig off, on;
  off.hooks = {HookSpec{std::string(kPreframeInjection), 0.0, std::nullopt}};
  on.hooks = {HookSpec{std::string(kPreframeInjection), 0.5, std::nullopt}};
  const double d0 = test::mean_adjacent_distance(edit_segment(frames, "a horse", "a zebra", off, toy).edited_latents);
  const double d5 = test::mean_adjacent_distance(edit_segment(frames, "a horse", "a zebra", on, toy).edited_latents);
  return {d5 < d0, fmt("mean adjacent distance %.4f (lambda 0.5) vs %.4f (lambda 0)", d5, d0)};
}

Outcome flickering() {
  const Image still = synthetic_frame(4, 0, 32);
  const double s_static = temporal_flickering(std::vector<Image>(6, still));
  std::vector<Image> alt;
  for (int i = 0; i < 6; ++i) alt.emplace_back(32, 32, i % 2 ? 255 : 0);
  const double s_alt = temporal_flickering(alt);
  double lo = 100.0, hi = 0.0;
  for (std::uint64_t seed = 0; seed < 30; ++seed) {
    Rng rng(seed);
    std::vector<Image> frames;
    for (int i = 0; i < 5; ++i) {
      if (seed % 2) {
        frames.push_back(synthetic_frame(seed, i * static_cast<int>(seed), 16));
      } else {
        Image img(16, 16);
        for (auto& p : img.pixels) p = static_cast<std::uint8_t>(rng.below(256));
        frames.push_back(std::move(img));
      }
    }
    const double s = temporal_flickering(frames);
    lo = std::min(lo, s);
    hi = std::max(hi, s);
  }
  return {s_static == 100.0 && s_alt == 0.0 && lo >= 0.0 && hi <= 100.0,
          fmt("static %.4f, alternating %.4f, 30 clips in [%.2f, ", s_static, s_alt, lo) + fmt("%.2f]", hi)};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

Outcome end_to_end() {
  test::TempDir dir("acceptance_e2e");
  SyntheticCorpusOptions o;
  o.seed = 8;
  o.planted = {{"a surfer rides a wave", 2, {4, 7}}, {"a skier jumps", 11, {1, 4}}};
  write_synthetic_store(o, dir.path() / "store", 2, 64);
  const std::string story = R"({"segments": [{"query": "a surfer rides a wave", "edited_query": "a surfer at sunset"},
      {"query": "a skier jumps", "edited_query": "a skier in fresh snow"}],
    "store": "store", "seed": 2026, "edit": {"steps": 20}, "transition": {"n": 5},
    "backend": {"kind": "toy_conv"}})";
  const auto cfg = storyboard_from_json(story, dir.path());
  const auto t0 = Clock::now();
  const auto m1 = generate(cfg, dir.path() / "run1");
  const double secs = seconds_since(t0);
  const auto m2 = generate(cfg, dir.path() / "run2", {.jobs = 2});
  bool same = slurp(dir.path() / "run1" / "manifest.json") == slurp(dir.path() / "run2" / "manifest.json");
  for (int i = 0; same && i < m1.total_frames; ++i) {
    const auto name = frame_filename(static_cast<std::size_t>(i));
    same = slurp(dir.path() / "run1" / name) == slurp(dir.path() / "run2" / name);
  }
  const bool segs8 = m1.segments.size() == 2 && m1.segments[0].source_frames == 8 && m1.segments[1].source_frames == 8;
  const bool counts = m1.counts_consistent() && m2.counts_consistent() && m1.total_frames == 8 + 4 + 8;
  return {same && segs8 && counts && secs < 300.0,
          std::string(same ? "runs identical" : "RUNS DIFFER") + ", " + std::to_string(m1.total_frames) +
              " frames" + (counts ? " conserved" : " NOT CONSERVED") + fmt(", first run %.1f s", secs)};
}

}  // namespace

int main() {
  const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria{
      {"retrieval oracle equivalence", retrieval_oracle},
      {"DDIM round trip", ddim_round_trip},
      {"slerp suite", slerp_suite},
      {"LoRA interpolation", lora_interpolation},
      {"fine-tuning descent", finetune_descent},
      {"transition counts", transition_counts},
      {"identity edit", identity_edit},
      {"injection hook effect", injection_effect},
      {"temporal flickering", flickering},
      {"end-to-end determinism", end_to_end},
  };
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Outcome r;
    try {
      r = criteria[i].second();
    } catch (const std::exception& e) {
      r = {false, std::string("exception: ") + e.what()};
    }
    if (!r.pass) ++failed;
    std::printf("[%s] %zu %s: %s\n", r.pass ? "PASS" : "FAIL", i + 1, criteria[i].first, r.detail.c_str());
    std::fflush(stdout);
  }
  std::printf("%d/%zu criteria passed\n", static_cast<int>(criteria.size()) - failed, criteria.size());
  return failed == 0 ? 0 : 1;
}
