// Copyright 2026 The lvg Authors
// SPDX-License-Identifier: Apache-2.0

#include "lvg/feature_store.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <json.hpp>
#include <sstream>

#include "lvg/error.hpp"
#include "lvg/random.hpp"

namespace lvg {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

constexpr const char* kManifestName = "store.json";

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

void check_video_id(const std::string& id) {
  const bool ok = !id.empty() && id.front() != '.' &&
                  std::all_of(id.begin(), id.end(), [](unsigned char c) {
                    return std::isalnum(c) || c == '_' || c == '-' || c == '.';
                  });
  if (!ok) {
    throw Error(Errc::kInvalidArgument,
                "video id '" + id + "' must be non-empty and use only [A-Za-z0-9_.-]");
  }
}

std::uint64_t hash_bytes(const void* data, std::size_t n, std::uint64_t h) {
  return fnv1a64(std::string_view(static_cast<const char*>(data), n), h);
}

std::string content_digest(const Matrix& features, const std::vector<Image>& frames, double fps) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  const Eigen::Index dims[2] = {features.rows(), features.cols()};
  h = hash_bytes(dims, sizeof(dims), h);
  for (Eigen::Index r = 0; r < features.rows(); ++r)
    for (Eigen::Index c = 0; c < features.cols(); ++c) {
      const double v = features(r, c);
      h = hash_bytes(&v, sizeof(v), h);
    }
  for (const auto& f : frames) {
    const int wh[2] = {f.width, f.height};
    h = hash_bytes(wh, sizeof(wh), h);
    h = hash_bytes(f.pixels.data(), f.pixels.size(), h);
  }
  h = hash_bytes(&fps, sizeof(fps), h);
  return hex64(h);
}

void write_features_binary(const Matrix& m, const fs::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(Errc::kIo, "cannot write feature file " + path.string());
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) {
      const double v = m(r, c);
      out.write(reinterpret_cast<const char*>(&v), sizeof(v));
    }
  if (!out) throw Error(Errc::kIo, "failed writing feature file " + path.string());
}

template <typename T>
Matrix read_binary_rows(const fs::path& path, Eigen::Index rows, Eigen::Index cols) {
  std::ifstream in(path, std::ios::binary | std::ios::ate);
  if (!in) throw Error(Errc::kIo, "cannot open feature file " + path.string());
  const auto bytes = static_cast<std::size_t>(in.tellg());
  const auto expected = static_cast<std::size_t>(rows * cols) * sizeof(T);
  if (bytes != expected) {
    throw Error(Errc::kDimensionMismatch,
                path.string() + ": holds " + std::to_string(bytes / sizeof(T)) + " values, expected " +
                    std::to_string(rows) + " rows x " + std::to_string(cols) + " cols");
  }
  in.seekg(0);
  Matrix m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r)
    for (Eigen::Index c = 0; c < cols; ++c) {
      T v;
      in.read(reinterpret_cast<char*>(&v), sizeof(v));
      m(r, c) = static_cast<double>(v);
    }
  return m;
}

Matrix read_text_rows(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::kIo, "cannot open feature file " + path.string());
  std::vector<std::vector<double>> rows;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::replace(line.begin(), line.end(), ',', ' ');
    std::istringstream ls(line);
    std::vector<double> row;
    std::string tok;
    while (ls >> tok) {
      try {
        std::size_t used = 0;
        row.push_back(std::stod(tok, &used));
        if (used != tok.size()) throw std::invalid_argument(tok);
      } catch (const std::exception&) {
        throw Error(Errc::kParse, path.string() + ":" + std::to_string(lineno) + ": bad number '" + tok + "'");
      }
    }
    if (row.empty()) continue;
    if (!rows.empty() && row.size() != rows.front().size()) {
      throw Error(Errc::kDimensionMismatch, path.string() + ":" + std::to_string(lineno) + ": row has " +
                                                std::to_string(row.size()) + " values, expected " +
                                                std::to_string(rows.front().size()));
    }
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw Error(Errc::kParse, path.string() + ": no feature rows");
  Matrix m(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows.front().size()));
  for (std::size_t r = 0; r < rows.size(); ++r)
    for (std::size_t c = 0; c < rows[r].size(); ++c) m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = rows[r][c];
  return m;
}

json record_to_json(const VideoRecord& r) {
  json ranges = json::array();
  for (const auto& cr : r.clip_frame_ranges) ranges.push_back({cr.first_frame, cr.last_frame});
  return {{"video_id", r.video_id},
          {"num_clips", r.num_clips},
          {"feature_file", r.video_id + ".features"},
          {"frame_dir", r.frame_dir.generic_string()},
          {"clip_frame_ranges", ranges},
          {"total_frames", r.total_frames()},
          {"fps", r.fps},
          {"content_digest", r.content_digest}};
}

void write_text_atomically(const fs::path& path, const std::string& text) {
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::trunc);
    if (!out) throw Error(Errc::kIo, "cannot write " + tmp.string());
    out << text;
    if (!out) throw Error(Errc::kIo, "failed writing " + tmp.string());
  }
  fs::rename(tmp, path);
}

}  // namespace

bool VideoRecord::operator==(const VideoRecord& other) const {
  return video_id == other.video_id && num_clips == other.num_clips &&
         same_values(clip_features, other.clip_features) && frame_dir == other.frame_dir &&
         clip_frame_ranges == other.clip_frame_ranges && fps == other.fps &&
         content_digest == other.content_digest;
}

const VideoRecord* StoreManifest::find(std::string_view video_id) const {
  for (const auto& r : records)
    if (r.video_id == video_id) return &r;
  return nullptr;
}

std::vector<ClipRange> uniform_clip_ranges(int total_frames, int num_clips) {
  if (num_clips < 1) throw Error(Errc::kInvalidArgument, "num_clips must be >= 1");
  if (total_frames < num_clips) {
    throw Error(Errc::kInvalidArgument, std::to_string(total_frames) + " frames cannot fill " +
                                            std::to_string(num_clips) + " clips");
  }
  const int per_clip = (total_frames + num_clips - 1) / num_clips;
  if (static_cast<long>(per_clip) * (num_clips - 1) >= total_frames) {
    throw Error(Errc::kInvalidArgument,
                "uniform partition of " + std::to_string(total_frames) + " frames into " +
                    std::to_string(num_clips) + " clips of " + std::to_string(per_clip) +
                    " leaves the last clip empty");
  }
  std::vector<ClipRange> out;
  out.reserve(static_cast<std::size_t>(num_clips));
  for (int k = 0; k < num_clips; ++k) {
    const int first = k * per_clip;
    const int last = std::min(first + per_clip, total_frames) - 1;
    out.push_back({first, last});
  }
  return out;
}

void validate_clip_ranges(const std::vector<ClipRange>& ranges, const std::string& video_id) {
  int next = 0;
  for (std::size_t k = 0; k < ranges.size(); ++k) {
    if (ranges[k].first_frame != next || ranges[k].last_frame < ranges[k].first_frame) {
      throw Error(Errc::kParse, "video '" + video_id + "': clip " + std::to_string(k) +
                                    " range is not contiguous with the previous clip");
    }
    next = ranges[k].last_frame + 1;
  }
}

Matrix read_feature_matrix(const fs::path& path, std::optional<int> expected_clips) {
  const fs::path sidecar = path.string() + ".json";
  Matrix m;
  if (fs::exists(sidecar)) {
    std::ifstream in(sidecar);
    json meta;
    try {
      meta = json::parse(in);
    } catch (const json::exception& e) {
      throw Error(Errc::kParse, sidecar.string() + ": " + e.what());
    }
    const auto rows = meta.value("num_clips", -1);
    const auto cols = meta.value("dim", -1);
    const auto dtype = meta.value("dtype", std::string("float32"));
    if (rows < 1 || cols < 1) throw Error(Errc::kParse, sidecar.string() + ": num_clips and dim must be >= 1");
    if (dtype == "float32") {
      m = read_binary_rows<float>(path, rows, cols);
    } else if (dtype == "float64") {
      m = read_binary_rows<double>(path, rows, cols);
    } else {
      throw Error(Errc::kUnsupported, sidecar.string() + ": dtype '" + dtype + "' (use float32 or float64)");
    }
  } else {
    m = read_text_rows(path);
  }
  if (expected_clips && m.rows() != *expected_clips) {
    throw Error(Errc::kDimensionMismatch, path.string() + ": " + std::to_string(m.rows()) +
                                              " feature rows but " + std::to_string(*expected_clips) +
                                              " clips declared");
  }
  if (!m.allFinite()) throw Error(Errc::kNonFinite, path.string() + ": non-finite feature values");
  return m;
}

StoreManifest load_store(const fs::path& root) {
  StoreManifest manifest;
  const fs::path path = root / kManifestName;
  if (!fs::exists(path)) return manifest;

  std::ifstream in(path);
  if (!in) throw Error(Errc::kIo, "cannot open " + path.string());
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::exception& e) {
    throw Error(Errc::kParse, path.string() + ": " + e.what());
  }
  try {
    manifest.schema_version = doc.at("schema_version").get<int>();
    if (manifest.schema_version != kStoreSchemaVersion) {
      throw Error(Errc::kSchemaVersion,
                  path.string() + ": store schema_version " + std::to_string(manifest.schema_version) +
                      " cannot be read by this build (expects " + std::to_string(kStoreSchemaVersion) +
                      "); re-ingest the corpus or migrate store.json");
    }
    if (!doc.at("feature_dim").is_null()) manifest.feature_dim = doc.at("feature_dim").get<int>();
    for (const auto& jr : doc.at("records")) {
      VideoRecord r;
      r.video_id = jr.at("video_id").get<std::string>();
      r.num_clips = jr.at("num_clips").get<int>();
      r.frame_dir = jr.at("frame_dir").get<std::string>();
      r.fps = jr.at("fps").get<double>();
      r.content_digest = jr.at("content_digest").get<std::string>();
      for (const auto& cr : jr.at("clip_frame_ranges")) {
        r.clip_frame_ranges.push_back({cr.at(0).get<int>(), cr.at(1).get<int>()});
      }
      if (static_cast<int>(r.clip_frame_ranges.size()) != r.num_clips) {
        throw Error(Errc::kParse, path.string() + ": video '" + r.video_id + "' lists " +
                                      std::to_string(r.clip_frame_ranges.size()) + " ranges for " +
                                      std::to_string(r.num_clips) + " clips");
      }
      validate_clip_ranges(r.clip_frame_ranges, r.video_id);
      if (!manifest.feature_dim) {
        throw Error(Errc::kParse, path.string() + ": records present but feature_dim is null");
      }
      r.clip_features = read_binary_rows<double>(root / jr.at("feature_file").get<std::string>(),
                                                 r.num_clips, *manifest.feature_dim);
      if (manifest.find(r.video_id)) {
        throw Error(Errc::kParse, path.string() + ": duplicate video id '" + r.video_id + "'");
      }
      manifest.records.push_back(std::move(r));
    }
  } catch (const json::exception& e) {
    throw Error(Errc::kParse, path.string() + ": " + e.what());
  }
  return manifest;
}

void save_store(const StoreManifest& manifest, const fs::path& root) {
  fs::create_directories(root);
  json records = json::array();
  for (const auto& r : manifest.records) {
    if (manifest.feature_dim && r.feature_dim() != *manifest.feature_dim) {
      throw Error(Errc::kDimensionMismatch, "video '" + r.video_id + "' has feature dim " +
                                                std::to_string(r.feature_dim()) + ", store has " +
                                                std::to_string(*manifest.feature_dim));
    }
    write_features_binary(r.clip_features, root / (r.video_id + ".features"));
    records.push_back(record_to_json(r));
  }
  json doc = {{"schema_version", manifest.schema_version},
              {"feature_dim", manifest.feature_dim ? json(*manifest.feature_dim) : json(nullptr)},
              {"records", records}};
  write_text_atomically(root / kManifestName, doc.dump(2) + "\n");
}

FeatureStore FeatureStore::open(const fs::path& root) { return FeatureStore(root, load_store(root)); }

const VideoRecord& FeatureStore::record(std::string_view video_id) const {
  if (const auto* r = manifest_.find(video_id)) return *r;
  throw Error(Errc::kNotFound, "unknown video id '" + std::string(video_id) + "'");
}

const VideoRecord& FeatureStore::ingest(const std::string& video_id, const fs::path& frames_dir,
                                        const fs::path& features_file, double fps,
                                        std::optional<int> num_clips) {
  check_video_id(video_id);
  if (!(fps > 0.0)) throw Error(Errc::kInvalidArgument, "fps must be > 0");

  Matrix features = read_feature_matrix(features_file, num_clips);
  const int dim = static_cast<int>(features.cols());
  if (manifest_.feature_dim && *manifest_.feature_dim != dim) {
    throw Error(Errc::kDimensionMismatch, features_file.string() + ": feature dim " + std::to_string(dim) +
                                              " does not match store feature dim " +
                                              std::to_string(*manifest_.feature_dim));
  }

  const auto frame_files = list_png_files(frames_dir);
  std::vector<Image> frames;
  frames.reserve(frame_files.size());
  for (const auto& f : frame_files) frames.push_back(read_png(f));
  if (frames.empty()) throw Error(Errc::kInvalidArgument, "no PNG frames in " + frames_dir.string());

  VideoRecord rec;
  rec.video_id = video_id;
  rec.num_clips = static_cast<int>(features.rows());
  rec.clip_frame_ranges = uniform_clip_ranges(static_cast<int>(frames.size()), rec.num_clips);
  rec.frame_dir = video_id;
  rec.fps = fps;
  rec.content_digest = content_digest(features, frames, fps);
  rec.clip_features = std::move(features);

  if (const auto* existing = manifest_.find(video_id)) {
    if (existing->content_digest == rec.content_digest) return *existing;
    throw Error(Errc::kConflict, "video id '" + video_id + "' already ingested with different content");
  }

  const fs::path dst = root_ / rec.frame_dir;
  fs::create_directories(dst);
  for (std::size_t i = 0; i < frames.size(); ++i) write_png(frames[i], dst / frame_filename(i));

  StoreManifest next = manifest_;
  next.feature_dim = dim;
  next.records.push_back(std::move(rec));
  save_store(next, root_);
  manifest_ = std::move(next);
  return manifest_.records.back();
}

std::vector<fs::path> FeatureStore::frame_paths(std::string_view video_id, ClipSpan span) const {
  const auto& rec = record(video_id);
  if (span.start < 0 || span.start > span.end || span.end >= rec.num_clips) {
    throw Error(Errc::kOutOfRange, "clip span (" + std::to_string(span.start) + "," +
                                       std::to_string(span.end) + ") invalid for video '" +
                                       rec.video_id + "' with " + std::to_string(rec.num_clips) + " clips");
  }
  std::vector<fs::path> out;
  const int first = rec.clip_frame_ranges[static_cast<std::size_t>(span.start)].first_frame;
  const int last = rec.clip_frame_ranges[static_cast<std::size_t>(span.end)].last_frame;
  for (int f = first; f <= last; ++f) out.push_back(root_ / rec.frame_dir / frame_filename(static_cast<std::size_t>(f)));
  return out;
}

std::vector<Image> FeatureStore::load_frames(std::string_view video_id, ClipSpan span) const {
  std::vector<Image> out;
  for (const auto& p : frame_paths(video_id, span)) out.push_back(read_png(p));
  return out;
}

}  // namespace lvg
