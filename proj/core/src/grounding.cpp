// Copyright 2026 The lvg Authors
// SPDX-License-Identifier: Apache-2.0

#include "lvg/grounding.hpp"

#include <algorithm>
#include <json.hpp>

#include "lvg/archive.hpp"
#include "lvg/error.hpp"
#include "lvg/parallel.hpp"
#include "lvg/random.hpp"

namespace lvg {
namespace {

Vector normalized(const Vector& v, const char* what) {
  const double n = v.norm();
  if (!(n > 0.0) || !std::isfinite(n)) {
    throw Error(Errc::kDegenerate, std::string(what) + " vector has zero or non-finite norm");
  }
  return v / n;
}

double clamp_cosine(double s) { return std::clamp(s, -1.0, 1.0); }

std::filesystem::path with_suffix(const std::filesystem::path& stem, const char* suffix) {
  return stem.string() + suffix;
}

}  // namespace

QueryEmbedding encode_query(const TextEncoder& encoder, const std::string& text) {
  QueryEmbedding q{text, encoder.encode(text)};
  if (!q.vector.allFinite()) throw Error(Errc::kNonFinite, "query embedding not finite: '" + text + "'");
  return q;
}

GroundingModel GroundingModel::initialize(int feature_dim, int joint_dim, std::uint64_t seed) {
  if (feature_dim < 1 || joint_dim < 1) throw Error(Errc::kInvalidArgument, "dimensions must be >= 1");
  if (joint_dim > feature_dim) {
    throw Error(Errc::kDimensionMismatch, "joint dim " + std::to_string(joint_dim) +
                                              " exceeds feature dim " + std::to_string(feature_dim) +
                                              "; supply reducer weights");
  }
  GroundingModel m;
  if (joint_dim == feature_dim) {
    m.reducer.weight = Matrix::Identity(joint_dim, feature_dim);
  } else {
    Rng rng(seed);
    Matrix g(feature_dim, joint_dim);
    for (Eigen::Index c = 0; c < g.cols(); ++c)
      for (Eigen::Index r = 0; r < g.rows(); ++r) g(r, c) = rng.normal();
    Eigen::HouseholderQR<Matrix> qr(g);
    const Matrix q = qr.householderQ() * Matrix::Identity(feature_dim, joint_dim);
    m.reducer.weight = q.transpose();
  }
  m.reducer.bias = Vector::Zero(joint_dim);
  m.projection.weight = Matrix::Identity(joint_dim, joint_dim);
  m.projection.bias = Vector::Zero(joint_dim);
  return m;
}

void GroundingModel::save(const std::filesystem::path& stem) const {
  TensorArchive a;
  a.metadata["feature_dim"] = std::to_string(feature_dim());
  a.metadata["joint_dim"] = std::to_string(joint_dim());
  a.tensors["reducer.weight"] = reducer.weight;
  a.tensors["reducer.bias"] = reducer.bias;
  a.tensors["match.weight"] = projection.weight;
  a.tensors["match.bias"] = projection.bias;
  write_matrix_bundle(a, with_suffix(stem, ".json"), with_suffix(stem, ".bin"));
}

GroundingModel GroundingModel::load(const std::filesystem::path& stem) {
  auto json_path = stem;
  if (json_path.extension() != ".json") json_path = with_suffix(stem, ".json");
  const auto a = read_matrix_bundle(json_path);
  auto get = [&](const char* name) -> const Matrix& {
    auto it = a.tensors.find(name);
    if (it == a.tensors.end()) throw Error(Errc::kParse, json_path.string() + ": missing tensor " + name);
    return it->second;
  };
  GroundingModel m;
  m.reducer.weight = get("reducer.weight");
  m.reducer.bias = get("reducer.bias");
  m.projection.weight = get("match.weight");
  m.projection.bias = get("match.bias");
  const auto d = m.reducer.weight.rows();
  if (m.reducer.bias.size() != d || m.projection.weight.rows() != d || m.projection.weight.cols() != d ||
      m.projection.bias.size() != d) {
    throw Error(Errc::kDimensionMismatch, json_path.string() + ": inconsistent joint dimension");
  }
  if (!m.reducer.weight.allFinite() || !m.projection.weight.allFinite() || !m.reducer.bias.allFinite() ||
      !m.projection.bias.allFinite()) {
    throw Error(Errc::kNonFinite, json_path.string() + ": non-finite weights");
  }
  return m;
}

MomentMap::MomentMap(std::string video_id, int num_clips, int dim)
    : video_id_(std::move(video_id)),
      num_clips_(num_clips),
      dim_(dim),
      features_(Matrix::Zero(static_cast<Eigen::Index>(num_clips) * (num_clips + 1) / 2, dim)) {}

Eigen::Index MomentMap::index(int start, int end) const {
  if (start < 0 || end >= num_clips_ || start > end) {
    throw Error(Errc::kOutOfRange, "moment (" + std::to_string(start) + "," + std::to_string(end) +
                                       ") outside upper triangle of " + std::to_string(num_clips_) + " clips");
  }
  // Row-major upper triangle: rows 0..start-1 contribute N, N-1, ... entries.
  const Eigen::Index s = start;
  return s * num_clips_ - s * (s - 1) / 2 + (end - start);
}

MomentMap build_moment_map(const VideoRecord& record, const Reducer& reducer) {
  if (record.feature_dim() != reducer.in_dim()) {
    throw Error(Errc::kDimensionMismatch, "video '" + record.video_id + "' features have dim " +
                                              std::to_string(record.feature_dim()) + ", reducer expects " +
                                              std::to_string(reducer.in_dim()));
  }
  const int n = record.num_clips;
  // reduced: N x d
  const Matrix reduced = (record.clip_features * reducer.weight.transpose()).rowwise() + reducer.bias.transpose();
  MomentMap map(record.video_id, n, reducer.out_dim());
  for (int i = 0; i < n; ++i) {
    map.at(i, i) = reduced.row(i);
    for (int j = i + 1; j < n; ++j) map.at(i, j) = map.at(i, j - 1).cwiseMax(reduced.row(j));
  }
  return map;
}

Vector project_query(const Vector& query, const MatchProjection& projection) {
  if (query.size() != projection.weight.cols()) {
    throw Error(Errc::kDimensionMismatch, "query dim " + std::to_string(query.size()) +
                                              " does not match projection dim " +
                                              std::to_string(projection.weight.cols()));
  }
  return normalized(projection.weight * query + projection.bias, "projected query");
}

double matching_score(const Vector& query, const Vector& moment, const MatchProjection& projection) {
  const Vector q = project_query(query, projection);
  if (moment.size() != q.size()) {
    throw Error(Errc::kDimensionMismatch, "moment dim " + std::to_string(moment.size()) +
                                              " does not match joint dim " + std::to_string(q.size()));
  }
  return clamp_cosine(normalized(moment, "moment").dot(q));
}

bool ranks_before(const MomentCandidate& a, const MomentCandidate& b) {
  if (a.score != b.score) return a.score > b.score;
  if (a.video_id != b.video_id) return a.video_id < b.video_id;
  if (a.span.start != b.span.start) return a.span.start < b.span.start;
  return (a.span.end - a.span.start) < (b.span.end - b.span.start);
}

std::vector<QueryResult> retrieve(const std::vector<std::string>& queries, const StoreManifest& store,
                                  const TextEncoder& encoder, const GroundingModel& model,
                                  const RetrievalOptions& options) {
  if (store.records.empty()) throw Error(Errc::kEmptyResult, "cannot retrieve from an empty store");
  if (options.top_k < 1) throw Error(Errc::kInvalidArgument, "top_k must be >= 1");

  std::vector<Vector> projected;
  projected.reserve(queries.size());
  for (const auto& q : queries) {
    const auto emb = encode_query(encoder, q);
    if (emb.vector.size() != model.joint_dim()) {
      throw Error(Errc::kDimensionMismatch, "text encoder dim " + std::to_string(emb.vector.size()) +
                                                " does not match joint dim " + std::to_string(model.joint_dim()));
    }
    projected.push_back(project_query(emb.vector, model.projection));
  }

  const std::size_t nv = store.records.size();
  // best[v][q]: best span of video v for query q.
  std::vector<std::vector<MomentCandidate>> best(nv);
  parallel_for(nv, options.jobs, [&](std::size_t v) {
    const auto& rec = store.records[v];
    const MomentMap map = build_moment_map(rec, model.reducer);
    std::vector<MomentCandidate> per_query(queries.size());
    bool first = true;
    for (int i = 0; i < map.num_clips(); ++i) {
      for (int j = i; j < map.num_clips(); ++j) {
        const Vector moment = normalized(map.at(i, j).transpose(), "moment");
        for (std::size_t q = 0; q < queries.size(); ++q) {
          MomentCandidate c{rec.video_id, {i, j}, clamp_cosine(moment.dot(projected[q]))};
          if (first || ranks_before(c, per_query[q])) per_query[q] = std::move(c);
        }
        first = false;
      }
    }
    best[v] = std::move(per_query);
  });

  std::vector<QueryResult> results;
  results.reserve(queries.size());
  for (std::size_t q = 0; q < queries.size(); ++q) {
    QueryResult r;
    r.query = queries[q];
    for (std::size_t v = 0; v < nv; ++v) r.candidates.push_back(best[v][q]);
    std::sort(r.candidates.begin(), r.candidates.end(), ranks_before);
    if (static_cast<std::size_t>(options.top_k) > nv) {
      r.truncated = true;
    } else {
      r.candidates.resize(static_cast<std::size_t>(options.top_k));
    }
    results.push_back(std::move(r));
  }
  return results;
}

std::string grounding_to_json(const std::vector<QueryResult>& results) {
  nlohmann::json out = nlohmann::json::array();
  for (const auto& r : results) {
    nlohmann::json cands = nlohmann::json::array();
    for (const auto& c : r.candidates) {
      cands.push_back({{"video_id", c.video_id},
                       {"start_clip", c.span.start},
                       {"end_clip", c.span.end},
                       {"score", c.score}});
    }
    out.push_back({{"query", r.query}, {"truncated", r.truncated}, {"candidates", cands}});
  }
  return nlohmann::json({{"results", out}}).dump(2) + "\n";
}

std::vector<QueryResult> grounding_from_json(const std::string& text) {
  std::vector<QueryResult> results;
  try {
    const auto doc = nlohmann::json::parse(text);
    for (const auto& jr : doc.at("results")) {
      QueryResult r;
      r.query = jr.at("query").get<std::string>();
      r.truncated = jr.value("truncated", false);
      for (const auto& jc : jr.at("candidates")) {
        r.candidates.push_back({jc.at("video_id").get<std::string>(),
                                {jc.at("start_clip").get<int>(), jc.at("end_clip").get<int>()},
                                jc.at("score").get<double>()});
      }
      results.push_back(std::move(r));
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::kParse, std::string("grounding json: ") + e.what());
  }
  return results;
}

}  // namespace lvg
