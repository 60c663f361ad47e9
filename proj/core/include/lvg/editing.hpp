// Copyright 2026 The lvg Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "lvg/diffusion.hpp"
#include "lvg/feature_store.hpp"
#include "lvg/image.hpp"

namespace lvg {

/// Inclusive range of noise levels, 0 <= low <= high <= T.
struct LevelRange {
  int low = 0;
  int high = 0;
  bool contains(int level) const { return level >= low && level <= high; }
  bool operator==(const LevelRange&) const = default;
};

/// Levels touched by the first `fraction` of sampling: [T - ceil(f T), T].
LevelRange leading_levels(int steps, double fraction);

enum class ControlKind { kNone, kEdge };

ControlKind parse_control_kind(std::string_view name);
std::string_view to_string(ControlKind kind);

inline constexpr std::string_view kPreframeInjection = "preframe_injection";
inline constexpr std::string_view kCrossWindowAttention = "cross_window_attention";
inline constexpr std::string_view kGlobalTokenMerging = "global_token_merging";

struct HookSpec {
  std::string name{kPreframeInjection};
  /// Blend weight lambda in [0, 1].
  double weight = 0.5;
  /// Defaults to leading_levels(T, 0.8).
  std::optional<LevelRange> levels;
  bool operator==(const HookSpec&) const = default;
};

struct EditConfig {
  int steps = 20;
  ScheduleKind schedule = ScheduleKind::kCosine;
  double alpha_min = 0.01;
  std::vector<HookSpec> hooks{HookSpec{}};
  ControlKind control = ControlKind::kNone;
  /// Square output size in pixels.
  int resolution = 64;
  DdimOptions ddim;

  NoiseSchedule make_noise_schedule() const { return make_schedule(steps, schedule, alpha_min); }
  /// Throws Errc::kInvalidArgument / kOutOfRange on bad values.
  void validate() const;
};

std::string edit_config_to_json(const EditConfig& config);
/// Missing keys keep their defaults.
EditConfig edit_config_from_json(const std::string& text);

/// Per-frame consistency hook driven through the sampling loop of one
/// segment. A fresh instance is created for every segment.
class ConsistencyHook {
 public:
  virtual ~ConsistencyHook() = default;
  virtual std::string_view name() const = 0;
  virtual void begin_frame(std::size_t frame) = 0;
  /// Called at every noise level, see LevelHook.
  virtual void on_level(int level, Latent& z) = 0;
  virtual void end_frame() = 0;
};

/// z_t <- (1 - lambda) z_t + lambda z_t^prev on the active levels, where
/// z_t^prev is the previous frame's latent at the same level after its own
/// blend. No-op on the first frame.
class PreframeInjectionHook final : public ConsistencyHook {
 public:
  PreframeInjectionHook(double weight, LevelRange levels, int steps);

  std::string_view name() const override { return kPreframeInjection; }
  void begin_frame(std::size_t frame) override;
  void on_level(int level, Latent& z) override;
  void end_frame() override {}

 private:
  double weight_;
  LevelRange levels_;
  std::vector<std::optional<Latent>> previous_;
  std::vector<std::optional<Latent>> current_;
};

/// Builds a hook for the given schedule length. Extension-point names are
/// recognized but raise Errc::kUnsupported; unknown names raise
/// Errc::kInvalidArgument listing the known ones.
std::unique_ptr<ConsistencyHook> make_hook(const HookSpec& spec, int steps);

/// kNone gives an empty vector. kEdge gives one single-channel map per frame
/// at `latent_shape`'s resolution: gradient magnitude of the grey image
/// (central differences, replicated borders) divided by its maximum, then
/// average-pooled. Frame sizes must be multiples of the latent size.
std::vector<Latent> make_control(const std::vector<Image>& frames, ControlKind kind, Shape3 latent_shape);

struct EditedSegment {
  std::string video_id;
  ClipSpan span;
  std::string source_query;
  std::string edited_query;
  std::vector<Image> frames;
  std::vector<Latent> source_latents;
  std::vector<Latent> edited_latents;
  /// digest() of each inverted z_T.
  std::vector<std::uint64_t> noise_digests;
};

/// Inverts every frame under the source query and re-samples it under the
/// edited query, in temporal order. Frames are center-cropped and resized to
/// the configured resolution first. A failure on frame i is rethrown as a
/// StepError with index i.
EditedSegment edit_segment(const std::vector<Image>& frames, const std::string& source_query,
                           const std::string& edited_query, const EditConfig& config,
                           const DiffusionBackend& backend);

/// Audit record: queries, source span, config and per-frame digests.
std::string segment_audit_json(const EditedSegment& segment, const EditConfig& config);

}  // namespace lvg
