// Copyright 2026 The lvg Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "lvg/tensor.hpp"

namespace lvg {

/// Lowercases, splits on whitespace and strips surrounding punctuation
/// (brackets are kept so identifier tokens like "[v]" survive).
std::vector<std::string> tokenize(std::string_view text);

class TextEncoder {
 public:
  virtual ~TextEncoder() = default;
  virtual int dim() const = 0;
  /// Deterministic embedding. Throws Errc::kInvalidArgument on empty text.
  virtual Vector encode(std::string_view text) const = 0;
};

/// Test encoder: each token seeds a generator with fnv1a64(token) ^ seed and
/// draws `dim` standard normals; the text embedding is the mean over tokens.
class HashTextEncoder final : public TextEncoder {
 public:
  HashTextEncoder(int dim, std::uint64_t seed);

  int dim() const override { return dim_; }
  Vector encode(std::string_view text) const override;
  Vector token_vector(std::string_view token) const;
  std::uint64_t seed() const { return seed_; }

 private:
  int dim_;
  std::uint64_t seed_;
};

/// Adapter for embeddings produced by an external model. The file is JSON:
/// `{"dim": d, "embeddings": {"<text>": [..d floats..], ...}}`. Lookup is by
/// exact text.
class TableTextEncoder final : public TextEncoder {
 public:
  TableTextEncoder(int dim, std::map<std::string, Vector> table);
  static TableTextEncoder load(const std::filesystem::path& path);

  int dim() const override { return dim_; }
  Vector encode(std::string_view text) const override;

 private:
  int dim_;
  std::map<std::string, Vector, std::less<>> table_;
};

}  // namespace lvg
