// Copyright 2026 The lvg Authors
// SPDX-License-Identifier: Apache-2.0

// lvg: command-line front end for grounding, editing, morphing,
// personalization, the end-to-end pipeline and metrics.

#include <CLI11.hpp>
#include <fstream>
#include <iostream>
#include <json.hpp>
#include <sstream>

#include "lvg/diffusion.hpp"
#include "lvg/editing.hpp"
#include "lvg/error.hpp"
#include "lvg/feature_store.hpp"
#include "lvg/grounding.hpp"
#include "lvg/metrics.hpp"
#include "lvg/morphing.hpp"
#include "lvg/personalization.hpp"
#include "lvg/pipeline.hpp"
#include "lvg/synthetic.hpp"
#include "lvg/text_encoder.hpp"
#include "lvg/toy_backend.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string read_text(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw lvg::Error(lvg::Errc::kIo, "cannot open " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw lvg::Error(lvg::Errc::kIo, "cannot write " + path.string());
  out << text;
}

std::vector<lvg::Image> read_frames(const fs::path& dir) {
  const auto files = lvg::list_png_files(dir);
  if (files.empty()) throw lvg::Error(lvg::Errc::kNotFound, "no PNG frames in " + dir.string());
  std::vector<lvg::Image> frames;
  for (const auto& f : files) frames.push_back(lvg::read_png(f));
  return frames;
}

void write_frames(const std::vector<lvg::Image>& frames, const fs::path& dir) {
  fs::create_directories(dir);
  for (std::size_t i = 0; i < frames.size(); ++i) lvg::write_png(frames[i], dir / lvg::frame_filename(i));
}

// Shared backend selection: an archive, or a toy backend trained from a seed.
struct BackendArgs {
  std::string archive;
  std::uint64_t seed = 0;
  int resolution = 64;

  void add(CLI::App* app) {
    app->add_option("--backend", archive, "Backend archive (default: train the toy backend)");
    app->add_option("--backend-seed", seed, "Seed for training the toy backend");
  }
  std::unique_ptr<lvg::DiffusionBackend> load() const {
    if (!archive.empty()) return lvg::load_backend(archive);
    lvg::ToyTrainOptions opt;
    opt.image_size = resolution;
    return lvg::train_toy_backend(lvg::ToyConfig{}, opt, seed);
  }
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Grounding-based long video generation toolkit"};
  app.require_subcommand(1);

  // ingest
  auto* ingest = app.add_subcommand("ingest", "Add a video to a feature store");
  std::string ing_store, ing_id, ing_frames, ing_features;
  double ing_fps = 8.0;
  int ing_clips = 0;
  ingest->add_option("--store", ing_store, "Store directory")->required();
  ingest->add_option("--id", ing_id, "Video id")->required();
  ingest->add_option("--frames", ing_frames, "Directory of PNG frames")->required();
  ingest->add_option("--features", ing_features, "Clip feature matrix (text, or binary with .json sidecar)")->required();
  ingest->add_option("--fps", ing_fps, "Frame rate");
  ingest->add_option("--clips", ing_clips, "Number of clips (default: feature rows)");

  // synth-store
  auto* synth = app.add_subcommand("synth-store", "Write a seeded synthetic store");
  std::string syn_store;
  lvg::SyntheticCorpusOptions syn_opt;
  int syn_fpc = 1, syn_size = 64;
  std::vector<std::string> syn_plants;
  synth->add_option("--store", syn_store, "Store directory")->required();
  synth->add_option("--videos", syn_opt.videos, "Number of videos");
  synth->add_option("--clips", syn_opt.clips, "Clips per video");
  synth->add_option("--dim", syn_opt.feature_dim, "Feature dimension");
  synth->add_option("--seed", syn_opt.seed, "Corpus seed");
  synth->add_option("--text-seed", syn_opt.text_seed, "Query encoder seed used for planting");
  synth->add_option("--frames-per-clip", syn_fpc, "Frames per clip");
  synth->add_option("--size", syn_size, "Frame size in pixels");
  synth->add_option("--plant", syn_plants, "Planted moment QUERY:VIDEO:START:END");

  // train-toy
  auto* train = app.add_subcommand("train-toy", "Train the toy backend and save it");
  std::string train_out;
  std::uint64_t train_seed = 0;
  train->add_option("--out", train_out, "Archive path")->required();
  train->add_option("--seed", train_seed, "Training seed");

  // ground
  auto* ground = app.add_subcommand("ground", "Retrieve moments for text queries");
  std::string gr_queries, gr_store, gr_out, gr_weights;
  int gr_top_k = 1, gr_jobs = 1;
  std::uint64_t gr_text_seed = 0;
  ground->add_option("--queries", gr_queries, "Text file, one query per line")->required();
  ground->add_option("--store", gr_store, "Store directory")->required();
  ground->add_option("--top-k", gr_top_k, "Videos per query");
  ground->add_option("--out", gr_out, "Output JSON")->required();
  ground->add_option("--weights", gr_weights, "Grounding weight stem (default: identity model)");
  ground->add_option("--text-seed", gr_text_seed, "Query encoder seed");
  ground->add_option("--jobs", gr_jobs, "Worker threads");

  // edit
  auto* edit = app.add_subcommand("edit", "Edit one segment under a new query");
  std::string ed_segment, ed_query, ed_config, ed_out;
  BackendArgs ed_backend;
  edit->add_option("--segment", ed_segment,
                   "Segment JSON: {\"frames\": DIR} or {\"store\", \"video_id\", \"start_clip\", \"end_clip\"}, "
                   "plus \"query\"")
      ->required();
  edit->add_option("--query-edit", ed_query, "Edited query")->required();
  edit->add_option("--config", ed_config, "Edit config JSON");
  edit->add_option("--out", ed_out, "Output directory")->required();
  ed_backend.add(edit);

  // morph
  auto* morph = app.add_subcommand("morph", "Generate transition frames between two segments");
  std::string mo_prev, mo_next, mo_out, mo_prev_q, mo_next_q;
  int mo_n = 15, mo_steps = 20, mo_lora_steps = 200, mo_jobs = 1;
  std::uint64_t mo_seed = 0;
  BackendArgs mo_backend;
  morph->add_option("--prev", mo_prev, "Earlier segment directory (last frame used)")->required();
  morph->add_option("--next", mo_next, "Later segment directory (first frame used)")->required();
  morph->add_option("--n", mo_n, "Transition denominator; n - 1 frames are produced");
  morph->add_option("--out", mo_out, "Output directory")->required();
  morph->add_option("--prev-query", mo_prev_q, "Query of the earlier segment (default: its segment.json)");
  morph->add_option("--next-query", mo_next_q, "Query of the later segment (default: its segment.json)");
  morph->add_option("--steps", mo_steps, "DDIM steps");
  morph->add_option("--lora-steps", mo_lora_steps, "LoRA fine-tune steps");
  morph->add_option("--resolution", mo_backend.resolution, "Frame size");
  morph->add_option("--seed", mo_seed, "LoRA seed");
  morph->add_option("--jobs", mo_jobs, "Worker threads");
  mo_backend.add(morph);

  // personalize
  auto* pers = app.add_subcommand("personalize", "Bind a rare token to a subject");
  std::string pe_images, pe_token, pe_class, pe_out;
  int pe_steps = 300, pe_ddim_steps = 20;
  std::uint64_t pe_seed = 0;
  BackendArgs pe_backend;
  pers->add_option("--images", pe_images, "Directory with 3-5 subject images")->required();
  pers->add_option("--token", pe_token, "Identifier token, e.g. [V]")->required();
  pers->add_option("--class", pe_class, "Class noun")->required();
  pers->add_option("--steps", pe_steps, "Fine-tune steps");
  pers->add_option("--schedule-steps", pe_ddim_steps, "Noise levels used for training draws");
  pers->add_option("--seed", pe_seed, "Fine-tune seed");
  pers->add_option("--resolution", pe_backend.resolution, "Image size");
  pers->add_option("--out", pe_out, "Output backend archive")->required();
  pe_backend.add(pers);

  // generate
  auto* gen = app.add_subcommand("generate", "Run the full storyboard pipeline");
  std::string ge_config, ge_out, ge_personalize;
  int ge_jobs = 1;
  gen->add_option("--config", ge_config, "Storyboard JSON")->required();
  gen->add_option("--out", ge_out, "Output directory")->required();
  gen->add_option("--personalize", ge_personalize, "Personalized backend archive");
  gen->add_option("--jobs", ge_jobs, "Worker threads");

  // metrics
  auto* met = app.add_subcommand("metrics", "Score a frame directory");
  std::string me_frames;
  std::vector<std::string> me_plugins;
  bool me_json = false;
  met->add_option("--frames", me_frames, "Frame directory")->required();
  met->add_option("--plugin", me_plugins, "Plugin executable (run as PLUGIN FRAME_DIR)");
  met->add_flag("--json", me_json, "Print JSON instead of a table");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*ingest) {
      auto store = lvg::FeatureStore::open(ing_store);
      const auto& r = store.ingest(ing_id, ing_frames, ing_features, ing_fps,
                                   ing_clips > 0 ? std::optional<int>(ing_clips) : std::nullopt);
      std::cout << r.video_id << " " << r.num_clips << " clips " << r.total_frames() << " frames " << r.content_digest
                << "\n";
    } else if (*synth) {
      for (const auto& p : syn_plants) {
        std::vector<std::string> parts;
        std::stringstream ss(p);
        for (std::string part; std::getline(ss, part, ':');) parts.push_back(part);
        if (parts.size() != 4) throw lvg::Error(lvg::Errc::kParse, "--plant expects QUERY:VIDEO:START:END");
        syn_opt.planted.push_back({parts[0], std::stoi(parts[1]), {std::stoi(parts[2]), std::stoi(parts[3])}});
      }
      const auto store = lvg::write_synthetic_store(syn_opt, syn_store, syn_fpc, syn_size);
      std::cout << store.manifest().records.size() << " videos in " << syn_store << "\n";
    } else if (*train) {
      lvg::TrainingReport report;
      const auto b = lvg::train_toy_backend(lvg::ToyConfig{}, lvg::ToyTrainOptions{}, train_seed, &report);
      lvg::save_backend(*b, train_out);
      std::cout << "loss " << report.initial_running_loss() << " -> " << report.final_running_loss() << "\n";
    } else if (*ground) {
      std::vector<std::string> queries;
      std::istringstream in(read_text(gr_queries));
      for (std::string line; std::getline(in, line);)
        if (!lvg::tokenize(line).empty()) queries.push_back(line);
      const auto store = lvg::FeatureStore::open(gr_store);
      if (store.empty()) throw lvg::Error(lvg::Errc::kEmptyResult, "store " + gr_store + " has no videos");
      const int dim = *store.manifest().feature_dim;
      const auto model = gr_weights.empty() ? lvg::GroundingModel::initialize(dim, dim, 0)
                                            : lvg::GroundingModel::load(gr_weights);
      const lvg::HashTextEncoder encoder(model.feature_dim(), gr_text_seed);
      const auto results = lvg::retrieve(queries, store.manifest(), encoder, model, {gr_top_k, gr_jobs});
      write_text(gr_out, lvg::grounding_to_json(results));
      for (const auto& r : results) {
        std::cout << r.query << ":";
        for (const auto& c : r.candidates)
          std::cout << " " << c.video_id << "[" << c.span.start << "," << c.span.end << "]=" << c.score;
        std::cout << (r.truncated ? " (truncated)" : "") << "\n";
      }
    } else if (*edit) {
      const json seg = json::parse(read_text(ed_segment));
      const fs::path base = fs::path(ed_segment).parent_path();
      auto rel = [&](const std::string& p) { return fs::path(p).is_absolute() ? fs::path(p) : base / p; };
      std::vector<lvg::Image> frames;
      std::string video_id;
      lvg::ClipSpan span;
      if (seg.contains("frames")) {
        frames = read_frames(rel(seg.at("frames").get<std::string>()));
      } else {
        const auto store = lvg::FeatureStore::open(rel(seg.at("store").get<std::string>()));
        video_id = seg.at("video_id").get<std::string>();
        span = {seg.at("start_clip").get<int>(), seg.at("end_clip").get<int>()};
        frames = store.load_frames(video_id, span);
      }
      const lvg::EditConfig cfg = ed_config.empty() ? lvg::EditConfig{} : lvg::edit_config_from_json(read_text(ed_config));
      ed_backend.resolution = cfg.resolution;
      const auto backend = ed_backend.load();
      auto result = lvg::edit_segment(frames, seg.at("query").get<std::string>(), ed_query, cfg, *backend);
      result.video_id = video_id;
      result.span = span;
      write_frames(result.frames, ed_out);
      write_text(fs::path(ed_out) / "segment.json", lvg::segment_audit_json(result, cfg));
      std::cout << result.frames.size() << " frames written to " << ed_out << "\n";
    } else if (*morph) {
      auto query_of = [](const std::string& dir, bool edited) {
        const fs::path p = fs::path(dir) / "segment.json";
        if (!fs::exists(p)) {
          throw lvg::Error(lvg::Errc::kNotFound, "no query given and no segment.json in " + dir);
        }
        return json::parse(read_text(p)).at(edited ? "edited_query" : "source_query").get<std::string>();
      };
      lvg::TransitionSpec spec;
      spec.n = mo_n;
      spec.prev_frame = lvg::center_crop_resize(read_frames(mo_prev).back(), mo_backend.resolution);
      spec.next_frame = lvg::center_crop_resize(read_frames(mo_next).front(), mo_backend.resolution);
      spec.prev_query = mo_prev_q.empty() ? query_of(mo_prev, true) : mo_prev_q;
      spec.next_query = mo_next_q.empty() ? query_of(mo_next, true) : mo_next_q;
      spec.lora.sgd.steps = mo_lora_steps;
      spec.seed = mo_seed;
      spec.jobs = mo_jobs;
      const auto backend = mo_backend.load();
      const auto schedule = lvg::make_schedule(mo_steps, lvg::ScheduleKind::kCosine, 0.01);
      const auto t = lvg::generate_transition(spec, *backend, schedule);
      write_frames(t.frames, mo_out);
      lvg::save_lora(t.delta_prev, fs::path(mo_out) / "lora_prev.archive");
      lvg::save_lora(t.delta_next, fs::path(mo_out) / "lora_next.archive");
      json audit{{"n", spec.n}, {"alphas", t.alphas}, {"prev_query", spec.prev_query}, {"next_query", spec.next_query},
                 {"lora_loss_prev", {t.report_prev.initial_running_loss(), t.report_prev.final_running_loss()}},
                 {"lora_loss_next", {t.report_next.initial_running_loss(), t.report_next.final_running_loss()}}};
      write_text(fs::path(mo_out) / "transition.json", audit.dump(2));
      std::cout << t.frames.size() << " transition frames written to " << mo_out << "\n";
    } else if (*pers) {
      lvg::SubjectSpec spec;
      spec.token = pe_token;
      spec.class_name = pe_class;
      spec.images = read_frames(pe_images);
      spec.image_size = pe_backend.resolution;
      spec.sgd.steps = pe_steps;
      spec.sgd.seed = pe_seed;
      const auto backend = pe_backend.load();
      lvg::TrainingReport report;
      const auto tuned = lvg::personalize(*backend, spec, lvg::make_schedule(pe_ddim_steps, lvg::ScheduleKind::kCosine, 0.01),
                                          &report);
      lvg::save_backend(*tuned, pe_out);
      std::cout << "prompt \"" << spec.prompt() << "\" loss " << report.initial_running_loss() << " -> "
                << report.final_running_loss() << "\n";
    } else if (*gen) {
      const auto config = lvg::load_storyboard(ge_config);
      lvg::GenerateOptions opt;
      opt.jobs = ge_jobs;
      if (!ge_personalize.empty()) {
        opt.backend = lvg::load_backend(ge_personalize);
        opt.backend_personalized = true;
      }
      const auto m = lvg::generate(config, ge_out, opt);
      std::cout << m.total_frames << " frames (" << m.segments.size() << " segments, " << m.transitions.size()
                << " transitions) written to " << ge_out << "\n";
    } else if (*met) {
      std::vector<fs::path> plugins(me_plugins.begin(), me_plugins.end());
      const auto entries = lvg::metrics_report(me_frames, plugins);
      std::cout << (me_json ? lvg::metrics_json(entries) + "\n" : lvg::metrics_table(entries));
    }
  } catch (const lvg::Error& e) {
    std::cerr << "lvg: " << lvg::to_string(e.code()) << ": " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "lvg: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
