// Copyright 2026 The lvg Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "lvg/diffusion.hpp"
#include "lvg/image.hpp"

namespace lvg {

/// Low-rank factors of one layer: delta W = B A with A (r x in), B (out x r).
struct LoraLayer {
  Matrix a;
  Matrix b;
  int rank() const { return static_cast<int>(a.rows()); }
  Matrix effective() const { return b * a; }
};

struct LoraDelta {
  std::map<std::string, LoraLayer> layers;

  /// Largest factor rank over the layers (interpolation concatenates ranks).
  int rank() const;
  std::map<std::string, Matrix> effective() const;
};

/// A seeded with N(0, init_scale^2) entries, B zero, for every adaptable
/// layer. Throws Errc::kInvalidArgument when rank exceeds a layer's smaller
/// dimension.
LoraDelta zero_lora(const DiffusionBackend& backend, int rank, double init_scale, std::uint64_t seed);

/// Backend whose adaptable layers are W + B A. An empty delta returns a plain
/// copy.
std::unique_ptr<DiffusionBackend> apply_lora(const DiffusionBackend& backend, const LoraDelta& delta);

struct LoraOptions {
  int rank = 4;
  double init_scale = 0.1;
  SgdOptions sgd{.steps = 200, .batch = 4, .learning_rate = 0.1, .seed = 0, .fixed_noise = true};
};

/// Fits a delta by SGD on the denoising loss of the single pair (z0, c).
/// Base weights are untouched. steps = 0 returns zero_lora. A non-finite loss
/// raises StepError with the step index.
LoraDelta lora_finetune(const DiffusionBackend& backend, const DenoisingExample& example,
                        const NoiseSchedule& schedule, const LoraOptions& options,
                        TrainingReport* report = nullptr);

/// Delta whose effective weights are (1 - alpha) B_i A_i + alpha B_j A_j,
/// built by stacking the factors. alpha = 0 and 1 return copies of the
/// endpoints.
LoraDelta lora_interpolate(const LoraDelta& delta_i, const LoraDelta& delta_j, double alpha);

void save_lora(const LoraDelta& delta, const std::filesystem::path& path);
LoraDelta load_lora(const std::filesystem::path& path);

/// Great-circle interpolation. Falls back to (1 - alpha) z_i + alpha z_j when
/// the angle is below 1e-4; throws Errc::kDegenerate for zero or nearly
/// antipodal inputs.
Latent slerp(const Latent& z_i, const Latent& z_j, double alpha);

struct TransitionSpec {
  int n = 15;
  /// Last frame of the earlier segment and first frame of the later one.
  Image prev_frame;
  Image next_frame;
  std::string prev_query;
  std::string next_query;
  LoraOptions lora;
  /// Seed for the two fine-tunes; they draw from derive_seed(seed, ...).
  std::uint64_t seed = 0;
  int jobs = 1;
};

struct Transition {
  /// n - 1 frames for alpha = 1/n .. (n-1)/n.
  std::vector<Image> frames;
  std::vector<double> alphas;
  LoraDelta delta_prev;
  LoraDelta delta_next;
  TrainingReport report_prev;
  TrainingReport report_next;
};

/// Endpoint frames are resized to the backend's latent grid by the caller;
/// both must have the same size.
Transition generate_transition(const TransitionSpec& spec, const DiffusionBackend& backend,
                               const NoiseSchedule& schedule);

}  // namespace lvg
