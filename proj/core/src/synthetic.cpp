// Copyright 2026 The lvg Authors
// SPDX-License-Identifier: Apache-2.0

#include "lvg/synthetic.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>

#include "lvg/error.hpp"
#include "lvg/text_encoder.hpp"

namespace lvg {

Image synthetic_frame(std::uint64_t scene_seed, int index, int size) {
  Rng rng(splitmix64(scene_seed));
  std::array<double, 3> top{}, bottom{}, disc{};
  for (auto* col : {&top, &bottom, &disc})
    for (auto& v : *col) v = rng.uniform(20.0, 235.0);
  const double radius = size * rng.uniform(0.12, 0.22);
  const double x0 = size * rng.uniform(0.25, 0.75);
  const double y0 = size * rng.uniform(0.25, 0.75);
  const double vx = rng.uniform(-1.0, 1.0);
  const double vy = rng.uniform(-1.0, 1.0);

  // Bounce inside the frame.
  auto reflect = [&](double p) {
    const double lo = radius, hi = size - radius, span = hi - lo;
    double q = std::fmod(p - lo, 2.0 * span);
    if (q < 0) q += 2.0 * span;
    return lo + (q <= span ? q : 2.0 * span - q);
  };
  const double cx = reflect(x0 + vx * index);
  const double cy = reflect(y0 + vy * index);

  Image img(size, size);
  for (int y = 0; y < size; ++y) {
    const double f = size > 1 ? static_cast<double>(y) / (size - 1) : 0.0;
    for (int x = 0; x < size; ++x) {
      const double dx = x + 0.5 - cx, dy = y + 0.5 - cy;
      const bool inside = dx * dx + dy * dy <= radius * radius;
      for (int c = 0; c < 3; ++c) {
        const double v = inside ? disc[static_cast<std::size_t>(c)]
                                : (1 - f) * top[static_cast<std::size_t>(c)] + f * bottom[static_cast<std::size_t>(c)];
        img.at(x, y, c) = static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L));
      }
    }
  }
  return img;
}

std::string synthetic_caption(Rng& rng) {
  static constexpr std::array<const char*, 8> kVerbs = {"walks", "runs", "dances", "jumps",
                                                        "sits", "swims", "cooks", "reads"};
  static constexpr std::array<const char*, 8> kPlaces = {"in a park", "on a beach", "in a kitchen",
                                                         "in the snow", "on a stage", "in a forest",
                                                         "at night", "in a city"};
  std::string s = "a person ";
  s += kVerbs[rng.below(kVerbs.size())];
  s += ' ';
  s += kPlaces[rng.below(kPlaces.size())];
  return s;
}

std::vector<Matrix> synthetic_features(const SyntheticCorpusOptions& options) {
  if (options.videos < 1 || options.clips < 1 || options.feature_dim < 1) {
    throw Error(Errc::kInvalidArgument, "synthetic corpus needs videos, clips and dim >= 1");
  }
  std::vector<Matrix> out;
  out.reserve(static_cast<std::size_t>(options.videos));
  for (int v = 0; v < options.videos; ++v) {
    Rng rng(derive_seed(options.seed, "synthetic.features", static_cast<std::uint64_t>(v)));
    Matrix m(options.clips, options.feature_dim);
    for (Eigen::Index r = 0; r < m.rows(); ++r)
      for (Eigen::Index c = 0; c < m.cols(); ++c) m(r, c) = rng.normal();
    out.push_back(std::move(m));
  }

  const HashTextEncoder encoder(options.feature_dim, options.text_seed);
  for (std::size_t p = 0; p < options.planted.size(); ++p) {
    const auto& pm = options.planted[p];
    if (pm.video_index < 0 || pm.video_index >= options.videos || pm.span.start < 0 ||
        pm.span.start > pm.span.end || pm.span.end >= options.clips) {
      throw Error(Errc::kOutOfRange, "planted moment for '" + pm.query + "' is outside the corpus");
    }
    const int len = pm.span.end - pm.span.start + 1;
    if (len > options.feature_dim) {
      throw Error(Errc::kInvalidArgument, "planted span longer than the feature dimension");
    }
    const Vector q = encoder.encode(pm.query);
    Rng rng(derive_seed(options.seed, "synthetic.plant", p));
    Matrix& m = out[static_cast<std::size_t>(pm.video_index)];
    for (int k = 0; k < options.clips; ++k) {
      for (int c = 0; c < options.feature_dim; ++c) {
        if (k >= pm.span.start && k <= pm.span.end) {
          const bool owner = pm.span.start + (c % len) == k;
          m(k, c) = owner ? q[c] : q[c] - 1.0;
        } else {
          m(k, c) = q[c] + rng.uniform(0.5, 1.5);
        }
      }
    }
  }
  return out;
}

StoreManifest synthetic_manifest(const SyntheticCorpusOptions& options, int frames_per_clip) {
  StoreManifest m;
  m.feature_dim = options.feature_dim;
  auto feats = synthetic_features(options);
  for (int v = 0; v < options.videos; ++v) {
    VideoRecord r;
    char id[16];
    std::snprintf(id, sizeof(id), "vid%03d", v);
    r.video_id = id;
    r.num_clips = options.clips;
    r.clip_features = std::move(feats[static_cast<std::size_t>(v)]);
    r.frame_dir = r.video_id;
    r.clip_frame_ranges = uniform_clip_ranges(options.clips * frames_per_clip, options.clips);
    r.fps = 8.0;
    m.records.push_back(std::move(r));
  }
  return m;
}

FeatureStore write_synthetic_store(const SyntheticCorpusOptions& options, const std::filesystem::path& root,
                                   int frames_per_clip, int frame_size, double fps) {
  namespace fs = std::filesystem;
  const auto feats = synthetic_features(options);
  const fs::path staging = root / ".staging";
  fs::create_directories(staging);
  auto store = FeatureStore::open(root);
  for (int v = 0; v < options.videos; ++v) {
    char id[16];
    std::snprintf(id, sizeof(id), "vid%03d", v);
    const fs::path frames = staging / id;
    fs::create_directories(frames);
    const auto scene = derive_seed(options.seed, "synthetic.scene", static_cast<std::uint64_t>(v));
    for (int f = 0; f < options.clips * frames_per_clip; ++f) {
      write_png(synthetic_frame(scene, f, frame_size), frames / frame_filename(static_cast<std::size_t>(f)));
    }
    const fs::path feat_file = staging / (std::string(id) + ".txt");
    {
      std::ofstream out(feat_file);
      out.precision(17);
      const auto& m = feats[static_cast<std::size_t>(v)];
      for (Eigen::Index r = 0; r < m.rows(); ++r) {
        for (Eigen::Index c = 0; c < m.cols(); ++c) out << (c ? " " : "") << m(r, c);
        out << "\n";
      }
    }
    store.ingest(id, frames, feat_file, fps, options.clips);
  }
  fs::remove_all(staging);
  return store;
}

}  // namespace lvg
