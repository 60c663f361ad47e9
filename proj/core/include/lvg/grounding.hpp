// Copyright 2026 The lvg Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "lvg/feature_store.hpp"
#include "lvg/tensor.hpp"
#include "lvg/text_encoder.hpp"

namespace lvg {

struct QueryEmbedding {
  std::string text;
  Vector vector;
};

QueryEmbedding encode_query(const TextEncoder& encoder, const std::string& text);

/// Fully connected D -> d reduction applied to each clip feature.
struct Reducer {
  Matrix weight;  // d x D
  Vector bias;    // d

  int in_dim() const { return static_cast<int>(weight.cols()); }
  int out_dim() const { return static_cast<int>(weight.rows()); }
};

/// Query-side projection into the joint space: f_mm = W f + b.
struct MatchProjection {
  Matrix weight;  // d x d
  Vector bias;    // d
};

struct GroundingModel {
  Reducer reducer;
  MatchProjection projection;

  int feature_dim() const { return reducer.in_dim(); }
  int joint_dim() const { return reducer.out_dim(); }

  /// Identity reducer when d == D, otherwise d seeded orthonormal rows
  /// (requires d <= D). Projection is W = I, b = 0.
  static GroundingModel initialize(int feature_dim, int joint_dim, std::uint64_t seed);

  /// `<stem>.json` sidecar + `<stem>.bin` float64 matrix file.
  void save(const std::filesystem::path& stem) const;
  static GroundingModel load(const std::filesystem::path& stem);
};

/// N x N x d moment features; only entries with start <= end are stored.
class MomentMap {
 public:
  MomentMap(std::string video_id, int num_clips, int dim);

  const std::string& video_id() const { return video_id_; }
  int num_clips() const { return num_clips_; }
  int dim() const { return dim_; }
  static bool valid(int start, int end) { return start <= end; }

  auto at(int start, int end) const { return features_.row(index(start, end)); }
  auto at(int start, int end) { return features_.row(index(start, end)); }

 private:
  Eigen::Index index(int start, int end) const;

  std::string video_id_;
  int num_clips_;
  int dim_;
  Matrix features_;  // rows: N(N+1)/2 spans
};

/// Reduces each clip with `reducer`, then F[i][j] is the elementwise max of
/// the reduced clips i..j.
MomentMap build_moment_map(const VideoRecord& record, const Reducer& reducer);

/// normalize(W f^q + b) for the query side. Throws Errc::kDegenerate when the
/// projected vector is zero.
Vector project_query(const Vector& query, const MatchProjection& projection);

/// Cosine between the projected query and the l2-normalized moment vector,
/// clamped to [-1, 1].
double matching_score(const Vector& query, const Vector& moment, const MatchProjection& projection);

struct MomentCandidate {
  std::string video_id;
  ClipSpan span;
  double score = 0.0;

  bool operator==(const MomentCandidate&) const = default;
};

/// Strict ranking order: higher score, then smaller video_id, then earlier
/// start, then shorter span.
bool ranks_before(const MomentCandidate& a, const MomentCandidate& b);

struct RetrievalOptions {
  int top_k = 1;
  int jobs = 1;
};

struct QueryResult {
  std::string query;
  std::vector<MomentCandidate> candidates;
  /// top_k exceeded the number of videos; every video was returned.
  bool truncated = false;
};

/// Best span per video, videos ranked with `ranks_before`, top_k kept.
std::vector<QueryResult> retrieve(const std::vector<std::string>& queries, const StoreManifest& store,
                                  const TextEncoder& encoder, const GroundingModel& model,
                                  const RetrievalOptions& options);

std::string grounding_to_json(const std::vector<QueryResult>& results);
std::vector<QueryResult> grounding_from_json(const std::string& text);

}  // namespace lvg
