// Copyright 2026 The lvg Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "lvg/image.hpp"

namespace lvg {

/// (1 - mean |frame[k+1] - frame[k]| / 255) * 100 over adjacent pairs,
/// pixels and channels. Needs at least two frames of one size.
double temporal_flickering(const std::vector<Image>& frames);

enum class MetricStatus { kOk, kFailed, kUnavailable };

std::string_view to_string(MetricStatus status);

struct MetricEntry {
  std::string name;
  MetricStatus status = MetricStatus::kOk;
  std::optional<double> value;
  /// Exit status of a failed plugin.
  std::optional<int> exit_code;
  std::string detail;
};

/// Built-in temporal_flickering over the PNG frames in `frame_dir`, then one
/// entry per plugin. A plugin is run as `<plugin> <frame_dir>` and must print
/// a number; its entry name is the executable's file stem. Missing or
/// non-executable plugins are "unavailable"; a nonzero exit or unparsable
/// output is "failed".
std::vector<MetricEntry> metrics_report(const std::filesystem::path& frame_dir,
                                        const std::vector<std::filesystem::path>& plugins);

std::string metrics_table(const std::vector<MetricEntry>& entries);
std::string metrics_json(const std::vector<MetricEntry>& entries);

}  // namespace lvg
