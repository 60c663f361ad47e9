// Copyright 2026 The lvg Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "lvg/diffusion.hpp"
#include "lvg/editing.hpp"
#include "lvg/grounding.hpp"
#include "lvg/morphing.hpp"

namespace lvg {

/// Overrides StoryboardConfig::store when set.
inline constexpr const char* kStoreRootEnv = "LVG_STORE_ROOT";

struct SegmentQuery {
  std::string query;
  std::string edited_query;
  /// 0-based rank of the retrieved candidate to edit.
  int rank = 0;
};

struct BackendConfig {
  /// "toy_conv" or "constant_noise".
  std::string kind = "toy_conv";
  /// Archive to load. When empty, a toy_conv backend is trained from
  /// `train_seed` (default: derived from the global seed).
  std::filesystem::path weights;
  std::optional<std::uint64_t> train_seed;
};

struct GroundingConfig {
  /// Stem written by GroundingModel::save. When empty, the model is
  /// initialized with joint_dim (default: the store's feature dimension).
  std::filesystem::path weights;
  std::optional<int> joint_dim;
  std::uint64_t text_seed = 0;
  /// Candidates scoring below this are dropped before ranking.
  std::optional<double> min_score;
};

struct TransitionConfig {
  int n = 15;
  LoraOptions lora;
};

struct PersonalizationConfig {
  std::filesystem::path images_dir;
  std::string token;
  std::string class_name;
  int steps = 300;
  double learning_rate = 0.05;
};

/// JSON schema (all keys but "segments" optional):
///   {"segments": [{"query", "edited_query", "rank"}], "store", "seed",
///    "top_k", "edit": {EditConfig}, "transition": {"n", "rank", "steps",
///    "learning_rate", "batch"}, "grounding": {"weights", "joint_dim",
///    "text_seed", "min_score"}, "backend": {"kind", "weights",
///    "train_seed"}, "personalization": {"images", "token", "class",
///    "steps", "learning_rate"}, "frame_list": bool}
/// Relative paths resolve against the config file's directory.
struct StoryboardConfig {
  std::vector<SegmentQuery> segments;
  std::filesystem::path store;
  std::uint64_t seed = 0;
  int top_k = 1;
  EditConfig edit;
  TransitionConfig transition;
  GroundingConfig grounding;
  BackendConfig backend;
  std::optional<PersonalizationConfig> personalization;
  bool frame_list = true;

  void validate() const;
};

StoryboardConfig storyboard_from_json(const std::string& text, const std::filesystem::path& base_dir = {});
StoryboardConfig load_storyboard(const std::filesystem::path& path);
std::string storyboard_to_json(const StoryboardConfig& config);
/// Hex FNV-1a of storyboard_to_json.
std::string config_hash(const StoryboardConfig& config);

struct SegmentRecord {
  std::string query;
  std::string edited_query;
  MomentCandidate candidate;
  int source_frames = 0;
  int output_frames = 0;
  int first_output_frame = 0;
  std::vector<std::uint64_t> noise_digests;
};

struct TransitionRecord {
  int after_segment = 0;
  int n = 0;
  std::vector<double> alphas;
  int first_output_frame = 0;
  std::uint64_t seed = 0;
  double lora_loss_prev = 0.0;
  double lora_loss_next = 0.0;
};

struct RunManifest {
  std::string config_hash;
  std::uint64_t seed = 0;
  std::string backend_kind;
  std::string backend_digest;
  bool personalized = false;
  std::vector<SegmentRecord> segments;
  std::vector<TransitionRecord> transitions;
  NoiseSchedule schedule;
  int total_frames = 0;
  /// Unset for a single output frame.
  std::optional<double> temporal_flickering;

  /// total_frames == sum of segment frames + sum of (n - 1).
  bool counts_consistent() const;
  std::string to_json() const;
};

struct GenerateOptions {
  int jobs = 1;
  /// Replaces the configured backend (e.g. a personalized archive).
  std::shared_ptr<const DiffusionBackend> backend;
  /// Recorded in the manifest for an override backend.
  bool backend_personalized = false;
};

/// Backend described by `config` (loaded, or trained from its seed).
std::unique_ptr<DiffusionBackend> resolve_backend(const StoryboardConfig& config);

/// Runs grounding, editing, morphing and concatenation. Writes numbered
/// frames, manifest.json and (optionally) frames.txt into `out_dir`.
/// A query without a usable candidate raises Errc::kEmptyResult citing it.
RunManifest generate(const StoryboardConfig& config, const std::filesystem::path& out_dir,
                     const GenerateOptions& options = {});

}  // namespace lvg
