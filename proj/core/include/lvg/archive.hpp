// Copyright 2026 The lvg Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <string>

#include "lvg/tensor.hpp"

namespace lvg {

/// Named-tensor archive.
///
/// Layout: the 8-byte magic "LVGTNSR1", a little-endian uint64 header length,
/// a JSON header `{"metadata": {...}, "tensors": [{"name", "rows", "cols",
/// "offset"}]}`, then the payload of row-major little-endian float64 values.
/// `offset` counts doubles from the start of the payload.
struct TensorArchive {
  /// Free-form string metadata (backend kind, shapes, seeds).
  std::map<std::string, std::string> metadata;
  ParamSet tensors;

  bool operator==(const TensorArchive& other) const {
    return metadata == other.metadata && same_values(tensors, other.tensors);
  }
};

void write_archive(const TensorArchive& archive, const std::filesystem::path& path);
TensorArchive read_archive(const std::filesystem::path& path);

/// Row-major little-endian float64 matrix file plus a JSON sidecar that
/// carries the tensor table. Used for the grounding weights.
void write_matrix_bundle(const TensorArchive& archive, const std::filesystem::path& json_path,
                         const std::filesystem::path& bin_path);
TensorArchive read_matrix_bundle(const std::filesystem::path& json_path);

}  // namespace lvg
