// Copyright 2026 The lvg Authors
// SPDX-License-Identifier: Apache-2.0

#include "lvg/metrics.hpp"

#include <sys/wait.h>
#include <unistd.h>

#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <json.hpp>
#include <sstream>

#include "lvg/error.hpp"

namespace lvg {
namespace {

std::string shell_quote(const std::string& s) {
  std::string out = "'";
  for (char ch : s) {
    if (ch == '\'') {
      out += "'\\''";
    } else {
      out += ch;
    }
  }
  return out + "'";
}

MetricEntry run_plugin(const std::filesystem::path& plugin, const std::filesystem::path& frame_dir) {
  MetricEntry e;
  e.name = plugin.stem().string();
  std::error_code ec;
  if (!std::filesystem::is_regular_file(plugin, ec) || ::access(plugin.c_str(), X_OK) != 0) {
    e.status = MetricStatus::kUnavailable;
    e.detail = "plugin not found or not executable: " + plugin.string();
    return e;
  }
  const std::string cmd = shell_quote(plugin.string()) + " " + shell_quote(frame_dir.string());
  FILE* pipe = ::popen(cmd.c_str(), "r");
  if (!pipe) {
    e.status = MetricStatus::kFailed;
    e.detail = "could not start plugin";
    return e;
  }
  std::string output;
  char buf[256];
  while (std::fgets(buf, sizeof(buf), pipe)) output += buf;
  const int status = ::pclose(pipe);
  const int code = WIFEXITED(status) ? WEXITSTATUS(status) : 128 + (WIFSIGNALED(status) ? WTERMSIG(status) : 0);
  if (code != 0) {
    e.status = MetricStatus::kFailed;
    e.exit_code = code;
    e.detail = "plugin exited with status " + std::to_string(code);
    return e;
  }
  std::istringstream in(output);
  double v = 0.0;
  if (!(in >> v)) {
    e.status = MetricStatus::kFailed;
    e.exit_code = 0;
    e.detail = "plugin output is not a number";
    return e;
  }
  e.value = v;
  return e;
}

}  // namespace

double temporal_flickering(const std::vector<Image>& frames) {
  if (frames.size() < 2) throw Error(Errc::kInvalidArgument, "temporal_flickering needs at least two frames");
  for (const auto& f : frames) {
    if (f.width != frames.front().width || f.height != frames.front().height) {
      throw Error(Errc::kDimensionMismatch, "temporal_flickering frames differ in size");
    }
  }
  // Integer sum keeps the static and full-swing cases exact.
  unsigned long long total = 0;
  for (std::size_t k = 1; k < frames.size(); ++k) {
    const auto& a = frames[k - 1].pixels;
    const auto& b = frames[k].pixels;
    for (std::size_t i = 0; i < a.size(); ++i) total += static_cast<unsigned>(a[i] > b[i] ? a[i] - b[i] : b[i] - a[i]);
  }
  const unsigned long long count = (frames.size() - 1) * frames.front().pixels.size();
  if (count == 0) throw Error(Errc::kInvalidArgument, "temporal_flickering frames are empty");
  const double score = (1.0 - static_cast<double>(total) / (255.0 * static_cast<double>(count))) * 100.0;
  return std::clamp(score, 0.0, 100.0);
}

std::string_view to_string(MetricStatus status) {
  switch (status) {
    case MetricStatus::kOk: return "ok";
    case MetricStatus::kFailed: return "failed";
    case MetricStatus::kUnavailable: return "unavailable";
  }
  return "unknown";
}

std::vector<MetricEntry> metrics_report(const std::filesystem::path& frame_dir,
                                        const std::vector<std::filesystem::path>& plugins) {
  const auto files = list_png_files(frame_dir);
  if (files.empty()) throw Error(Errc::kNotFound, "no PNG frames in " + frame_dir.string());
  std::vector<Image> frames;
  frames.reserve(files.size());
  for (const auto& f : files) frames.push_back(read_png(f));

  std::vector<MetricEntry> out;
  MetricEntry tf;
  tf.name = "temporal_flickering";
  tf.value = temporal_flickering(frames);
  out.push_back(std::move(tf));
  for (const auto& p : plugins) out.push_back(run_plugin(p, frame_dir));
  return out;
}

std::string metrics_table(const std::vector<MetricEntry>& entries) {
  std::ostringstream s;
  for (const auto& e : entries) {
    s << e.name << '\t';
    if (e.value) {
      char buf[64];
      std::snprintf(buf, sizeof(buf), "%.4f", *e.value);
      s << buf;
    } else {
      s << to_string(e.status);
      if (e.exit_code) s << " (exit " << *e.exit_code << ")";
    }
    s << '\n';
  }
  return s.str();
}

std::string metrics_json(const std::vector<MetricEntry>& entries) {
  nlohmann::json j = nlohmann::json::array();
  for (const auto& e : entries) {
    nlohmann::json r{{"name", e.name}, {"status", std::string(to_string(e.status))}};
    r["value"] = e.value ? nlohmann::json(*e.value) : nlohmann::json(nullptr);
    if (e.exit_code) r["exit_code"] = *e.exit_code;
    if (!e.detail.empty()) r["detail"] = e.detail;
    j.push_back(r);
  }
  return j.dump(2);
}

}  // namespace lvg
