// Copyright 2026 The lvg Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "lvg/feature_store.hpp"
#include "lvg/image.hpp"
#include "lvg/random.hpp"

namespace lvg {

/// Frame `index` of a seeded scene: a two-colour gradient background with a
/// disc moving along a straight line.
Image synthetic_frame(std::uint64_t scene_seed, int index, int size);

/// "a person <verb> <place>" from a fixed vocabulary.
std::string synthetic_caption(Rng& rng);

/// A query whose embedding is planted so that it scores 1 on exactly one
/// clip span of one video.
struct PlantedMoment {
  std::string query;
  int video_index = 0;
  ClipSpan span;
};

struct SyntheticCorpusOptions {
  int videos = 20;
  int clips = 16;
  int feature_dim = 32;
  std::uint64_t seed = 0;
  /// Seed of the HashTextEncoder used by retrieval; planting needs it.
  std::uint64_t text_seed = 0;
  std::vector<PlantedMoment> planted;
};

/// Video ids are "vid000", "vid001", ... Unplanted clips draw standard
/// normal features. For a planted span every coordinate of the query vector
/// q is owned by one clip of the span, which carries q there and q - 1
/// elsewhere; clips of that video outside the span carry q + u with u in
/// [0.5, 1.5]. Max-pooling over the exact span then reproduces q.
std::vector<Matrix> synthetic_features(const SyntheticCorpusOptions& options);

/// In-memory manifest (no frames on disk) with uniform clip ranges of
/// `frames_per_clip`.
StoreManifest synthetic_manifest(const SyntheticCorpusOptions& options, int frames_per_clip = 1);

/// Writes a store with synthetic frames through FeatureStore::ingest.
FeatureStore write_synthetic_store(const SyntheticCorpusOptions& options, const std::filesystem::path& root,
                                   int frames_per_clip, int frame_size, double fps = 8.0);

}  // namespace lvg
