// Copyright 2026 The lvg Authors
// SPDX-License-Identifier: Apache-2.0

#include "lvg/text_encoder.hpp"

#include <cctype>
#include <fstream>
#include <json.hpp>

#include "lvg/error.hpp"
#include "lvg/random.hpp"

namespace lvg {

std::vector<std::string> tokenize(std::string_view text) {
  static constexpr std::string_view kStrip = ".,;:!?\"'()";
  std::vector<std::string> tokens;
  std::string cur;
  auto flush = [&] {
    std::size_t b = cur.find_first_not_of(kStrip);
    std::size_t e = cur.find_last_not_of(kStrip);
    if (b != std::string::npos) tokens.push_back(cur.substr(b, e - b + 1));
    cur.clear();
  };
  for (unsigned char ch : text) {
    if (std::isspace(ch)) {
      flush();
    } else {
      cur.push_back(static_cast<char>(std::tolower(ch)));
    }
  }
  flush();
  return tokens;
}

HashTextEncoder::HashTextEncoder(int dim, std::uint64_t seed) : dim_(dim), seed_(seed) {
  if (dim <= 0) throw Error(Errc::kInvalidArgument, "text encoder dimension must be positive");
}

Vector HashTextEncoder::token_vector(std::string_view token) const {
  Rng rng(fnv1a64(token) ^ seed_);
  Vector v(dim_);
  for (int i = 0; i < dim_; ++i) v[i] = rng.normal();
  return v;
}

Vector HashTextEncoder::encode(std::string_view text) const {
  const auto tokens = tokenize(text);
  if (tokens.empty()) throw Error(Errc::kInvalidArgument, "cannot encode empty text");
  Vector sum = Vector::Zero(dim_);
  for (const auto& t : tokens) sum += token_vector(t);
  return sum / static_cast<double>(tokens.size());
}

TableTextEncoder::TableTextEncoder(int dim, std::map<std::string, Vector> table)
    : dim_(dim), table_(table.begin(), table.end()) {
  for (const auto& [text, v] : table_) {
    if (v.size() != dim_) {
      throw Error(Errc::kDimensionMismatch, "embedding for '" + text + "' has dim " +
                                                std::to_string(v.size()) + ", expected " +
                                                std::to_string(dim_));
    }
    if (!v.allFinite()) throw Error(Errc::kNonFinite, "embedding for '" + text + "' is not finite");
  }
}

TableTextEncoder TableTextEncoder::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::kIo, "cannot open embedding table " + path.string());
  try {
    const auto doc = nlohmann::json::parse(in);
    const int dim = doc.at("dim").get<int>();
    std::map<std::string, Vector> table;
    for (const auto& [text, arr] : doc.at("embeddings").items()) {
      const auto values = arr.get<std::vector<double>>();
      table.emplace(text, Eigen::Map<const Vector>(values.data(), static_cast<Eigen::Index>(values.size())));
    }
    return TableTextEncoder(dim, std::move(table));
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::kParse, path.string() + ": " + e.what());
  }
}

Vector TableTextEncoder::encode(std::string_view text) const {
  if (text.empty()) throw Error(Errc::kInvalidArgument, "cannot encode empty text");
  auto it = table_.find(text);
  if (it == table_.end()) {
    throw Error(Errc::kNotFound, "no external embedding for text '" + std::string(text) + "'");
  }
  return it->second;
}

}  // namespace lvg
