// Copyright 2026 The lvg Authors
// SPDX-License-Identifier: Apache-2.0

#include "lvg/pipeline.hpp"

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <json.hpp>
#include <regex>
#include <sstream>

#include "lvg/error.hpp"
#include "lvg/metrics.hpp"
#include "lvg/parallel.hpp"
#include "lvg/personalization.hpp"
#include "lvg/random.hpp"
#include "lvg/text_encoder.hpp"
#include "lvg/toy_backend.hpp"

namespace lvg {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

std::string hex64(std::uint64_t v) {
  char buf[20];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

fs::path resolve(const fs::path& base, const fs::path& p) {
  if (p.empty() || p.is_absolute() || base.empty()) return p;
  return base / p;
}

std::uint64_t params_digest(const ParamSet& params) {
  std::uint64_t h = fnv1a64("");
  for (const auto& [name, m] : params) {
    h = fnv1a64(name, h);
    for (Eigen::Index c = 0; c < m.cols(); ++c)
      for (Eigen::Index r = 0; r < m.rows(); ++r) {
        const double v = m(r, c);
        h = fnv1a64(std::string_view(reinterpret_cast<const char*>(&v), sizeof(v)), h);
      }
  }
  return h;
}

template <typename T>
void read_opt(const json& j, const char* key, T& out) {
  if (j.contains(key) && !j.at(key).is_null()) out = j.at(key).get<T>();
}

bool has_path(const json& j, const char* key) { return j.contains(key) && !j.at(key).is_null(); }

void write_text_atomic(const fs::path& path, const std::string& text) {
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(Errc::kIo, "cannot write " + tmp.string());
    out << text;
    if (!out) throw Error(Errc::kIo, "write failed for " + tmp.string());
  }
  fs::rename(tmp, path);
}

}  // namespace

void StoryboardConfig::validate() const {
  if (segments.empty()) throw Error(Errc::kInvalidArgument, "storyboard needs at least one segment");
  for (std::size_t i = 0; i < segments.size(); ++i) {
    const auto& s = segments[i];
    if (tokenize(s.query).empty()) {
      throw Error(Errc::kInvalidArgument, "segment " + std::to_string(i) + ": query is empty");
    }
    if (tokenize(s.edited_query).empty()) {
      throw Error(Errc::kInvalidArgument, "segment " + std::to_string(i) + ": edited_query is empty");
    }
    if (s.rank < 0) throw Error(Errc::kInvalidArgument, "segment " + std::to_string(i) + ": rank must be >= 0");
  }
  if (top_k < 1) throw Error(Errc::kInvalidArgument, "top_k must be >= 1");
  if (transition.n < 2) throw Error(Errc::kInvalidArgument, "transition n must be >= 2");
  if (backend.kind != "toy_conv" && backend.kind != "constant_noise") {
    throw Error(Errc::kUnsupported, "unknown backend kind '" + backend.kind + "' (available: toy_conv, constant_noise)");
  }
  edit.validate();
}

StoryboardConfig storyboard_from_json(const std::string& text, const fs::path& base_dir) {
  StoryboardConfig c;
  try {
    const json j = json::parse(text);
    if (!j.is_object() || !j.contains("segments")) throw Error(Errc::kParse, "storyboard needs a \"segments\" array");
    for (const auto& sj : j.at("segments")) {
      SegmentQuery s;
      s.query = sj.at("query").get<std::string>();
      s.edited_query = sj.at("edited_query").get<std::string>();
      read_opt(sj, "rank", s.rank);
      c.segments.push_back(std::move(s));
    }
    if (has_path(j, "store")) c.store = resolve(base_dir, j.at("store").get<std::string>());
    read_opt(j, "seed", c.seed);
    read_opt(j, "top_k", c.top_k);
    read_opt(j, "frame_list", c.frame_list);
    if (j.contains("edit")) c.edit = edit_config_from_json(j.at("edit").dump());
    if (j.contains("transition")) {
      const auto& t = j.at("transition");
      read_opt(t, "n", c.transition.n);
      read_opt(t, "rank", c.transition.lora.rank);
      read_opt(t, "steps", c.transition.lora.sgd.steps);
      read_opt(t, "batch", c.transition.lora.sgd.batch);
      read_opt(t, "learning_rate", c.transition.lora.sgd.learning_rate);
    }
    if (j.contains("grounding")) {
      const auto& g = j.at("grounding");
      if (has_path(g, "weights")) c.grounding.weights = resolve(base_dir, g.at("weights").get<std::string>());
      if (g.contains("joint_dim") && !g.at("joint_dim").is_null()) c.grounding.joint_dim = g.at("joint_dim").get<int>();
      read_opt(g, "text_seed", c.grounding.text_seed);
      if (g.contains("min_score") && !g.at("min_score").is_null()) c.grounding.min_score = g.at("min_score").get<double>();
    }
    if (j.contains("backend")) {
      const auto& b = j.at("backend");
      read_opt(b, "kind", c.backend.kind);
      if (has_path(b, "weights")) c.backend.weights = resolve(base_dir, b.at("weights").get<std::string>());
      if (b.contains("train_seed") && !b.at("train_seed").is_null()) c.backend.train_seed = b.at("train_seed").get<std::uint64_t>();
    }
    if (j.contains("personalization") && !j.at("personalization").is_null()) {
      const auto& p = j.at("personalization");
      PersonalizationConfig pc;
      pc.images_dir = resolve(base_dir, p.at("images").get<std::string>());
      pc.token = p.at("token").get<std::string>();
      pc.class_name = p.at("class").get<std::string>();
      read_opt(p, "steps", pc.steps);
      read_opt(p, "learning_rate", pc.learning_rate);
      c.personalization = std::move(pc);
    }
  } catch (const json::exception& e) {
    throw Error(Errc::kParse, std::string("storyboard: ") + e.what());
  }
  c.validate();
  return c;
}

StoryboardConfig load_storyboard(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::kIo, "cannot open storyboard " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  try {
    return storyboard_from_json(ss.str(), path.parent_path());
  } catch (const Error& e) {
    throw Error(e.code(), path.string() + ": " + e.what());
  }
}

std::string storyboard_to_json(const StoryboardConfig& c) {
  json j;
  j["segments"] = json::array();
  for (const auto& s : c.segments) {
    j["segments"].push_back({{"query", s.query}, {"edited_query", s.edited_query}, {"rank", s.rank}});
  }
  j["store"] = c.store.string();
  j["seed"] = c.seed;
  j["top_k"] = c.top_k;
  j["frame_list"] = c.frame_list;
  j["edit"] = json::parse(edit_config_to_json(c.edit));
  j["transition"] = {{"n", c.transition.n},
                     {"rank", c.transition.lora.rank},
                     {"steps", c.transition.lora.sgd.steps},
                     {"batch", c.transition.lora.sgd.batch},
                     {"learning_rate", c.transition.lora.sgd.learning_rate}};
  j["grounding"] = {{"weights", c.grounding.weights.string()},
                    {"joint_dim", c.grounding.joint_dim ? json(*c.grounding.joint_dim) : json(nullptr)},
                    {"text_seed", c.grounding.text_seed},
                    {"min_score", c.grounding.min_score ? json(*c.grounding.min_score) : json(nullptr)}};
  j["backend"] = {{"kind", c.backend.kind},
                  {"weights", c.backend.weights.string()},
                  {"train_seed", c.backend.train_seed ? json(*c.backend.train_seed) : json(nullptr)}};
  if (c.personalization) {
    const auto& p = *c.personalization;
    j["personalization"] = {{"images", p.images_dir.string()},
                            {"token", p.token},
                            {"class", p.class_name},
                            {"steps", p.steps},
                            {"learning_rate", p.learning_rate}};
  } else {
    j["personalization"] = nullptr;
  }
  return j.dump(2);
}

std::string config_hash(const StoryboardConfig& config) { return hex64(fnv1a64(storyboard_to_json(config))); }

bool RunManifest::counts_consistent() const {
  long expected = 0;
  for (const auto& s : segments) expected += s.output_frames;
  for (const auto& t : transitions) expected += t.n - 1;
  return expected == total_frames;
}

std::string RunManifest::to_json() const {
  json j;
  j["config_hash"] = config_hash;
  j["seed"] = seed;
  j["backend"] = {{"kind", backend_kind}, {"digest", backend_digest}, {"personalized", personalized}};
  j["segments"] = json::array();
  for (std::size_t i = 0; i < segments.size(); ++i) {
    const auto& s = segments[i];
    json digests = json::array();
    for (auto d : s.noise_digests) digests.push_back(hex64(d));
    j["segments"].push_back({{"index", i},
                             {"query", s.query},
                             {"edited_query", s.edited_query},
                             {"candidate",
                              {{"video_id", s.candidate.video_id},
                               {"start_clip", s.candidate.span.start},
                               {"end_clip", s.candidate.span.end},
                               {"score", s.candidate.score}}},
                             {"source_frames", s.source_frames},
                             {"output_frames", s.output_frames},
                             {"first_output_frame", s.first_output_frame},
                             {"noise_digests", digests}});
  }
  j["transitions"] = json::array();
  for (const auto& t : transitions) {
    j["transitions"].push_back({{"after_segment", t.after_segment},
                                {"n", t.n},
                                {"frames", t.n - 1},
                                {"alphas", t.alphas},
                                {"first_output_frame", t.first_output_frame},
                                {"seed", t.seed},
                                {"lora_final_loss", {t.lora_loss_prev, t.lora_loss_next}}});
  }
  j["schedule"] = {{"steps", schedule.steps()}, {"alphas", schedule.alphas}};
  j["total_frames"] = total_frames;
  j["metrics"] = {{"temporal_flickering", temporal_flickering ? json(*temporal_flickering) : json(nullptr)}};
  j["timing"] = "frames only; segment and transition frames are concatenated without frame-rate harmonization";
  return j.dump(2);
}

std::unique_ptr<DiffusionBackend> resolve_backend(const StoryboardConfig& config) {
  if (!config.backend.weights.empty()) {
    auto b = load_backend(config.backend.weights);
    if (b->kind() != config.backend.kind) {
      throw Error(Errc::kConflict, "backend archive " + config.backend.weights.string() + " is '" + b->kind() +
                                       "', config asks for '" + config.backend.kind + "'");
    }
    return b;
  }
  if (config.backend.kind == "constant_noise") return std::make_unique<ConstantNoiseBackend>(ConstantNoiseConfig{});
  ToyTrainOptions opt;
  opt.image_size = config.edit.resolution;
  const auto seed = config.backend.train_seed.value_or(derive_seed(config.seed, "backend.train"));
  return train_toy_backend(ToyConfig{}, opt, seed);
}

RunManifest generate(const StoryboardConfig& config, const fs::path& out_dir, const GenerateOptions& options) {
  config.validate();
  fs::path store_root = config.store;
  if (const char* env = std::getenv(kStoreRootEnv); env && *env) store_root = env;
  if (store_root.empty()) throw Error(Errc::kInvalidArgument, "no store configured");
  if (!fs::exists(store_root / "store.json")) throw Error(Errc::kNotFound, "no store at " + store_root.string());
  const FeatureStore store = FeatureStore::open(store_root);
  const NoiseSchedule schedule = config.edit.make_noise_schedule();

  RunManifest manifest;
  manifest.config_hash = config_hash(config);
  manifest.seed = config.seed;
  manifest.schedule = schedule;

  // Backend.
  std::shared_ptr<const DiffusionBackend> backend = options.backend;
  manifest.personalized = options.backend && options.backend_personalized;
  if (!backend) backend = resolve_backend(config);
  if (config.personalization && !options.backend) {
    const auto& pc = *config.personalization;
    SubjectSpec spec;
    spec.token = pc.token;
    spec.class_name = pc.class_name;
    for (const auto& f : list_png_files(pc.images_dir)) spec.images.push_back(read_png(f));
    spec.image_size = config.edit.resolution;
    spec.sgd.steps = pc.steps;
    spec.sgd.learning_rate = pc.learning_rate;
    spec.sgd.seed = derive_seed(config.seed, "personalize");
    backend = personalize(*backend, spec, schedule);
    manifest.personalized = true;
  }
  manifest.backend_kind = backend->kind();
  manifest.backend_digest = hex64(params_digest(backend->parameters()));

  // Grounding.
  const int dim = store.manifest().feature_dim.value_or(0);
  if (dim < 1) throw Error(Errc::kEmptyResult, "store at " + store_root.string() + " has no videos");
  const GroundingModel model = config.grounding.weights.empty()
                                   ? GroundingModel::initialize(dim, config.grounding.joint_dim.value_or(dim),
                                                                derive_seed(config.seed, "grounding.init"))
                                   : GroundingModel::load(config.grounding.weights);
  const HashTextEncoder encoder(model.feature_dim(), config.grounding.text_seed);
  std::vector<std::string> queries;
  int deepest = config.top_k;
  for (const auto& s : config.segments) {
    queries.push_back(s.query);
    deepest = std::max(deepest, s.rank + 1);
  }
  const auto results = retrieve(queries, store.manifest(), encoder, model, {.top_k = deepest, .jobs = options.jobs});

  std::vector<MomentCandidate> chosen;
  for (std::size_t i = 0; i < config.segments.size(); ++i) {
    const auto& seg = config.segments[i];
    std::vector<MomentCandidate> usable;
    for (const auto& c : results[i].candidates)
      if (!config.grounding.min_score || c.score >= *config.grounding.min_score) usable.push_back(c);
    if (usable.size() <= static_cast<std::size_t>(seg.rank)) {
      throw Error(Errc::kEmptyResult, "no video moment matches query '" + seg.query + "'" +
                                          (usable.empty() ? std::string()
                                                          : " at rank " + std::to_string(seg.rank)));
    }
    chosen.push_back(usable[static_cast<std::size_t>(seg.rank)]);
  }

  // Segment edits are independent of each other.
  std::vector<EditedSegment> edited(config.segments.size());
  parallel_for(edited.size(), options.jobs, [&](std::size_t i) {
    const auto& seg = config.segments[i];
    try {
      const auto frames = store.load_frames(chosen[i].video_id, chosen[i].span);
      edited[i] = edit_segment(frames, seg.query, seg.edited_query, config.edit, *backend);
      edited[i].video_id = chosen[i].video_id;
      edited[i].span = chosen[i].span;
    } catch (const Error& e) {
      throw Error(e.code(), "segment " + std::to_string(i) + " ('" + seg.query + "'): " + e.what());
    }
  });

  // Transitions need both neighbours.
  const std::size_t num_transitions = edited.size() - 1;
  std::vector<Transition> transitions(num_transitions);
  std::vector<std::uint64_t> transition_seeds(num_transitions);
  parallel_for(num_transitions, options.jobs, [&](std::size_t k) {
    TransitionSpec spec;
    spec.n = config.transition.n;
    spec.prev_frame = edited[k].frames.back();
    spec.next_frame = edited[k + 1].frames.front();
    spec.prev_query = config.segments[k].edited_query;
    spec.next_query = config.segments[k + 1].edited_query;
    spec.lora = config.transition.lora;
    spec.seed = transition_seeds[k] = derive_seed(config.seed, "transition", k);
    try {
      transitions[k] = generate_transition(spec, *backend, schedule);
    } catch (const Error& e) {
      throw Error(e.code(), "transition after segment " + std::to_string(k) + ": " + e.what());
    }
  });

  // Concatenation.
  fs::create_directories(out_dir);
  std::vector<const Image*> sequence;
  for (std::size_t i = 0; i < edited.size(); ++i) {
    SegmentRecord r;
    r.query = config.segments[i].query;
    r.edited_query = config.segments[i].edited_query;
    r.candidate = chosen[i];
    r.source_frames = static_cast<int>(edited[i].frames.size());
    r.output_frames = static_cast<int>(edited[i].frames.size());
    r.first_output_frame = static_cast<int>(sequence.size());
    r.noise_digests = edited[i].noise_digests;
    manifest.segments.push_back(std::move(r));
    for (const auto& f : edited[i].frames) sequence.push_back(&f);
    if (i < num_transitions) {
      TransitionRecord t;
      t.after_segment = static_cast<int>(i);
      t.n = config.transition.n;
      t.alphas = transitions[i].alphas;
      t.first_output_frame = static_cast<int>(sequence.size());
      t.seed = transition_seeds[i];
      t.lora_loss_prev = transitions[i].report_prev.final_running_loss();
      t.lora_loss_next = transitions[i].report_next.final_running_loss();
      manifest.transitions.push_back(std::move(t));
      for (const auto& f : transitions[i].frames) sequence.push_back(&f);
    }
  }
  manifest.total_frames = static_cast<int>(sequence.size());

  static const std::regex kFrameName(R"(\d{6}\.png)");
  for (const auto& p : list_png_files(out_dir)) {
    if (std::regex_match(p.filename().string(), kFrameName)) fs::remove(p);
  }
  std::string frame_list;
  for (std::size_t i = 0; i < sequence.size(); ++i) {
    write_png(*sequence[i], out_dir / frame_filename(i));
    frame_list += frame_filename(i) + "\n";
  }
  if (sequence.size() >= 2) {
    std::vector<Image> all;
    all.reserve(sequence.size());
    for (const auto* f : sequence) all.push_back(*f);
    manifest.temporal_flickering = temporal_flickering(all);
  }
  if (config.frame_list) write_text_atomic(out_dir / "frames.txt", frame_list);
  write_text_atomic(out_dir / "manifest.json", manifest.to_json());
  return manifest;
}

}  // namespace lvg
