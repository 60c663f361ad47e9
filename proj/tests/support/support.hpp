// Copyright 2026 The lvg Authors
// SPDX-License-Identifier: Apache-2.0

// Shared fixtures and independent oracles for the unit and acceptance tests.

#pragma once

#include <unistd.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include "lvg/diffusion.hpp"
#include "lvg/feature_store.hpp"
#include "lvg/grounding.hpp"
#include "lvg/random.hpp"
#include "lvg/text_encoder.hpp"
#include "lvg/toy_backend.hpp"

namespace lvg::test {

// Frozen regression bounds for the trained toy backend (seed 42, T = 50,
// alpha_min = 0.01, seeded N(0, 1) latents of shape 4x16x16). Measured
// maxima over 8 latents: 0.0093 (linear) and 0.0042 (cosine).
inline constexpr double kToyRoundTripLinear50 = 1e-2;
inline constexpr double kToyRoundTripCosine50 = 1e-2;
inline constexpr std::uint64_t kToySeed = 42;
// After 300 personalization steps on four synthetic dog frames the same
// round trip measured 0.019 (linear, T = 50).
inline constexpr double kPersonalizedRoundTripLinear50 = 3e-2;

class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static int counter = 0;
    path_ = std::filesystem::temp_directory_path() /
            ("lvg_test_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

inline Latent random_latent(Shape3 shape, std::uint64_t seed, double scale = 1.0) {
  Rng rng(seed);
  Latent z(shape);
  for (Eigen::Index c = 0; c < z.values().cols(); ++c)
    for (Eigen::Index r = 0; r < z.values().rows(); ++r) z.values()(r, c) = scale * rng.normal();
  return z;
}

/// Trained once per process.
inline const ToyConvBackend& toy_backend() {
  static const std::unique_ptr<ToyConvBackend> backend =
      train_toy_backend(ToyConfig{}, ToyTrainOptions{}, kToySeed);
  return *backend;
}

inline double round_trip_error(const DiffusionBackend& backend, const Latent& z0, const Condition& c,
                               const NoiseSchedule& schedule) {
  return relative_error(ddim_sample(ddim_invert(z0, c, schedule, backend), c, schedule, backend), z0);
}

/// Exhaustive scoring of every span i <= j with plain loops, independent of
/// MomentMap and matching_score.
inline std::vector<QueryResult> brute_force_retrieve(const std::vector<std::string>& queries,
                                                     const StoreManifest& store, const TextEncoder& encoder,
                                                     const GroundingModel& model, int top_k) {
  auto better = [](const MomentCandidate& a, const MomentCandidate& b) {
    if (a.score != b.score) return a.score > b.score;
    if (a.video_id != b.video_id) return a.video_id < b.video_id;
    if (a.span.start != b.span.start) return a.span.start < b.span.start;
    return a.span.end - a.span.start < b.span.end - b.span.start;
  };
  const int d = model.joint_dim();
  const int D = model.feature_dim();
  std::vector<QueryResult> out;
  for (const auto& text : queries) {
    const Vector e = encoder.encode(text);
    std::vector<double> q(static_cast<std::size_t>(d));
    double qn = 0.0;
    for (int r = 0; r < d; ++r) {
      double s = model.projection.bias[r];
      for (int k = 0; k < d; ++k) s += model.projection.weight(r, k) * e[k];
      q[static_cast<std::size_t>(r)] = s;
      qn += s * s;
    }
    qn = std::sqrt(qn);
    for (auto& v : q) v /= qn;

    std::vector<MomentCandidate> per_video;
    for (const auto& rec : store.records) {
      const int n = rec.num_clips;
      std::vector<std::vector<double>> reduced(static_cast<std::size_t>(n), std::vector<double>(static_cast<std::size_t>(d)));
      for (int i = 0; i < n; ++i)
        for (int r = 0; r < d; ++r) {
          double s = model.reducer.bias[r];
          for (int k = 0; k < D; ++k) s += model.reducer.weight(r, k) * rec.clip_features(i, k);
          reduced[static_cast<std::size_t>(i)][static_cast<std::size_t>(r)] = s;
        }
      MomentCandidate best;
      bool have = false;
      for (int i = 0; i < n; ++i) {
        for (int j = i; j < n; ++j) {
          double dot = 0.0, mn = 0.0;
          for (int r = 0; r < d; ++r) {
            double m = reduced[static_cast<std::size_t>(i)][static_cast<std::size_t>(r)];
            for (int k = i + 1; k <= j; ++k) m = std::max(m, reduced[static_cast<std::size_t>(k)][static_cast<std::size_t>(r)]);
            dot += m * q[static_cast<std::size_t>(r)];
            mn += m * m;
          }
          const double score = std::clamp(dot / std::sqrt(mn), -1.0, 1.0);
          MomentCandidate c{rec.video_id, {i, j}, score};
          if (!have || better(c, best)) best = c;
          have = true;
        }
      }
      per_video.push_back(best);
    }
    std::sort(per_video.begin(), per_video.end(), better);
    QueryResult r;
    r.query = text;
    r.truncated = per_video.size() < static_cast<std::size_t>(top_k);
    if (per_video.size() > static_cast<std::size_t>(top_k)) per_video.resize(static_cast<std::size_t>(top_k));
    r.candidates = std::move(per_video);
    out.push_back(std::move(r));
  }
  return out;
}

/// Same videos, spans and order; scores within `tol`.
inline bool same_ranking(const std::vector<QueryResult>& a, const std::vector<QueryResult>& b, double tol = 1e-12) {
  if (a.size() != b.size()) return false;
  for (std::size_t q = 0; q < a.size(); ++q) {
    if (a[q].query != b[q].query || a[q].truncated != b[q].truncated ||
        a[q].candidates.size() != b[q].candidates.size())
      return false;
    for (std::size_t k = 0; k < a[q].candidates.size(); ++k) {
      const auto& x = a[q].candidates[k];
      const auto& y = b[q].candidates[k];
      if (x.video_id != y.video_id || !(x.span == y.span) || std::abs(x.score - y.score) > tol) return false;
    }
  }
  return true;
}

inline double angle_between(const Latent& a, const Latent& b) {
  const double c = a.values().cwiseProduct(b.values()).sum() / (a.norm() * b.norm());
  return std::acos(std::clamp(c, -1.0, 1.0));
}

/// Mean over adjacent pairs of ||z_{k+1} - z_k||.
inline double mean_adjacent_distance(const std::vector<Latent>& zs) {
  double s = 0.0;
  for (std::size_t k = 1; k < zs.size(); ++k) s += (zs[k].values() - zs[k - 1].values()).norm();
  return zs.size() > 1 ? s / static_cast<double>(zs.size() - 1) : 0.0;
}

}  // namespace lvg::test
