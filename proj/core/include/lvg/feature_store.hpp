// Copyright 2026 The lvg Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "lvg/image.hpp"
#include "lvg/tensor.hpp"

namespace lvg {

inline constexpr int kStoreSchemaVersion = 1;

/// Inclusive frame interval covered by one clip.
struct ClipRange {
  int first_frame = 0;
  int last_frame = 0;

  int length() const { return last_frame - first_frame + 1; }
  bool operator==(const ClipRange&) const = default;
};

/// Inclusive clip interval (start_clip <= end_clip).
struct ClipSpan {
  int start = 0;
  int end = 0;

  bool operator==(const ClipSpan&) const = default;
};

struct VideoRecord {
  std::string video_id;
  int num_clips = 0;
  /// num_clips x D, one row per clip.
  Matrix clip_features;
  /// Relative to the store root.
  std::filesystem::path frame_dir;
  std::vector<ClipRange> clip_frame_ranges;
  double fps = 0.0;
  /// Hex FNV-1a digest of features, decoded frame pixels and fps.
  std::string content_digest;

  int feature_dim() const { return static_cast<int>(clip_features.cols()); }
  int total_frames() const {
    return clip_frame_ranges.empty() ? 0 : clip_frame_ranges.back().last_frame + 1;
  }
  bool operator==(const VideoRecord& other) const;
};

struct StoreManifest {
  std::optional<int> feature_dim;
  std::vector<VideoRecord> records;
  int schema_version = kStoreSchemaVersion;

  const VideoRecord* find(std::string_view video_id) const;
  bool operator==(const StoreManifest&) const = default;
};

/// Splits `total_frames` into `num_clips` consecutive clips of
/// ceil(total / N) frames; the last clip takes the remainder. Throws when
/// that rule would leave a clip empty.
std::vector<ClipRange> uniform_clip_ranges(int total_frames, int num_clips);

/// Checks the range invariants (contiguous, ordered, non-empty, starting at 0).
void validate_clip_ranges(const std::vector<ClipRange>& ranges, const std::string& video_id);

/// Reads a feature matrix. A sibling `<path>.json` sidecar
/// `{"num_clips": N, "dim": D, "dtype": "float32"|"float64"}` marks a raw
/// little-endian binary file; without it the file is parsed as text, one
/// row per clip, values separated by whitespace or commas. When
/// `expected_clips` is given the row count must match.
Matrix read_feature_matrix(const std::filesystem::path& path,
                           std::optional<int> expected_clips = std::nullopt);

/// store.json plus `<video_id>.features` (row-major float64). A directory
/// without store.json loads as an empty store with feature_dim unset.
StoreManifest load_store(const std::filesystem::path& root);
void save_store(const StoreManifest& manifest, const std::filesystem::path& root);

/// On-disk corpus of videos: `store.json`, `<video_id>.features` and
/// `<video_id>/%06d.png`. Immutable after load apart from `ingest`, which
/// must not run concurrently with anything else on the same store.
class FeatureStore {
 public:
  static FeatureStore open(const std::filesystem::path& root);

  const std::filesystem::path& root() const { return root_; }
  const StoreManifest& manifest() const { return manifest_; }
  bool empty() const { return manifest_.records.empty(); }

  /// Throws Errc::kNotFound for unknown ids.
  const VideoRecord& record(std::string_view video_id) const;

  /// Copies frames into the store, writes the feature file and updates
  /// store.json. Re-ingesting identical content returns the existing record.
  /// `num_clips` defaults to the feature row count.
  const VideoRecord& ingest(const std::string& video_id, const std::filesystem::path& frames_dir,
                            const std::filesystem::path& features_file, double fps,
                            std::optional<int> num_clips = std::nullopt);

  /// Frame paths of every clip in the span, in temporal order.
  std::vector<std::filesystem::path> frame_paths(std::string_view video_id, ClipSpan span) const;
  std::vector<Image> load_frames(std::string_view video_id, ClipSpan span) const;

 private:
  FeatureStore(std::filesystem::path root, StoreManifest manifest)
      : root_(std::move(root)), manifest_(std::move(manifest)) {}

  std::filesystem::path root_;
  StoreManifest manifest_;
};

}  // namespace lvg
