// Copyright 2026 The lvg Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "lvg/archive.hpp"
#include "lvg/image.hpp"
#include "lvg/random.hpp"
#include "lvg/tensor.hpp"

namespace lvg {

/// Cumulative signal rates alpha_0..alpha_T, strictly decreasing, in (0, 1].
struct NoiseSchedule {
  std::vector<double> alphas;

  int steps() const { return static_cast<int>(alphas.size()) - 1; }
  double alpha(int t) const { return alphas.at(static_cast<std::size_t>(t)); }
};

enum class ScheduleKind { kLinear, kCosine };

ScheduleKind parse_schedule_kind(std::string_view name);
std::string_view to_string(ScheduleKind kind);

/// alpha_0 = 1 and alpha_T = alpha_min.
///   linear: alpha_t = 1 - (1 - alpha_min) t / T
///   cosine: alpha_t = alpha_min + (1 - alpha_min) cos^2(pi t / 2T)
NoiseSchedule make_schedule(int steps, ScheduleKind kind, double alpha_min);

/// Throws Errc::kInvalidArgument unless every alpha is in (0, 1] and the
/// sequence strictly decreases.
void validate_schedule(const NoiseSchedule& schedule);

using Condition = Vector;

/// Timestep label passed to the noise predictor with its signal rate.
struct StepInfo {
  int t = 0;
  double alpha = 1.0;
};

/// Noise predictor plus latent codec and text conditioning.
///
/// Implementations are immutable after construction; every const method is
/// safe to call concurrently. Parameters are addressable by name so that
/// adapters and fine-tuning can produce modified copies via
/// `with_parameters`.
class DiffusionBackend {
 public:
  virtual ~DiffusionBackend() = default;

  virtual std::string kind() const = 0;

  /// Latent shape produced by `encode` for a size x size image.
  virtual Shape3 latent_shape(int image_size) const = 0;

  /// epsilon_theta(z, t, c). `control`, when given, has one channel at the
  /// latent resolution.
  virtual Latent predict_noise(const Latent& z, StepInfo step, const Condition& c,
                               const Latent* control = nullptr) const = 0;

  virtual Latent encode(const Image& image) const = 0;
  virtual Image decode(const Latent& z) const = 0;
  virtual Condition encode_text(std::string_view text) const = 0;
  virtual int condition_dim() const = 0;

  virtual const ParamSet& parameters() const = 0;
  /// Layers an adapter may attach to; each is a parameter matrix.
  virtual std::vector<std::string> adaptable_layers() const = 0;
  /// Copy with the given parameters (same names and shapes).
  virtual std::unique_ptr<DiffusionBackend> with_parameters(ParamSet params) const = 0;
  std::unique_ptr<DiffusionBackend> clone() const { return with_parameters(parameters()); }

  /// Mean squared error between predict_noise(noisy, step, c, control) and
  /// `target`. When `grads` is non-null, d loss / d parameter is added into
  /// it (entries are created as needed).
  virtual double denoising_loss(const Latent& noisy, StepInfo step, const Condition& c,
                                const Latent* control, const Latent& target, ParamSet* grads) const = 0;

  virtual TensorArchive to_archive() const = 0;
};

void save_backend(const DiffusionBackend& backend, const std::filesystem::path& path);
/// Dispatches on the archive's "kind" metadata.
std::unique_ptr<DiffusionBackend> load_backend(const std::filesystem::path& path);

struct DdimOptions {
  /// Classifier-free guidance against a zero condition. Off when unset.
  std::optional<double> guidance_scale;
};

/// Called with the latent at each noise level during sampling: once at the
/// starting level T and after every step (levels T-1 .. 0). The hook may
/// modify the latent in place.
using LevelHook = std::function<void(int level, Latent& z)>;

/// One deterministic DDIM move of z from signal rate alpha_from to alpha_to
/// using the noise estimate eps.
Latent ddim_step(const Latent& z, const Latent& eps, double alpha_from, double alpha_to);

/// z_{t+1} = sqrt(a_{t+1}) (z_t - sqrt(1-a_t) e) / sqrt(a_t) + sqrt(1-a_{t+1}) e,
/// e = eps(z_t, t, c), for t = 0..T-1. When `trajectory` is non-null it
/// receives z_0..z_T.
Latent ddim_invert(const Latent& z0, const Condition& c, const NoiseSchedule& schedule,
                   const DiffusionBackend& backend, const Latent* control = nullptr,
                   std::vector<Latent>* trajectory = nullptr, const DdimOptions& options = {});

/// z_{t-1} = sqrt(a_{t-1}) (z_t - sqrt(1-a_t) e) / sqrt(a_t) + sqrt(1-a_{t-1}) e
/// for t = T..1. The step between levels t-1 and t is evaluated with the
/// timestep label t-1 in both directions, so sampling undoes inversion exactly
/// whenever the predictor ignores its latent input.
Latent ddim_sample(const Latent& zT, const Condition& c, const NoiseSchedule& schedule,
                   const DiffusionBackend& backend, const LevelHook& hook = {},
                   const Latent* control = nullptr, std::vector<Latent>* trajectory = nullptr,
                   const DdimOptions& options = {});

/// One denoising training pair: latent, condition and optional control map.
struct DenoisingExample {
  Latent z0;
  Condition condition;
  std::optional<Latent> control;
};

struct SgdOptions {
  int steps = 200;
  int batch = 4;
  double learning_rate = 0.05;
  std::uint64_t seed = 0;
  /// Replay a fixed pool of batch * max(1, steps / 10) draws cyclically
  /// instead of drawing fresh noise each step. Each reporting window then
  /// covers the pool exactly once, so the first and last running losses are
  /// measured on the same samples.
  bool fixed_noise = false;

  std::size_t pool_size() const {
    return fixed_noise ? static_cast<std::size_t>(batch) * std::max(1, steps / 10) : 0;
  }
};

struct TrainingReport {
  /// Mean batch loss per step.
  std::vector<double> losses;
  /// Mean over the first and last `window()` steps.
  double initial_running_loss() const;
  double final_running_loss() const;
  std::size_t window() const;
};

/// Draws (example, t, eps) with t uniform in [1, T] and eps ~ N(0, I) and
/// forms the noisy latent sqrt(a_t) z0 + sqrt(1 - a_t) eps. With a nonzero
/// `pool_size` the first pool_size draws are replayed cyclically.
class NoiseSampler {
 public:
  NoiseSampler(const NoiseSchedule& schedule, std::uint64_t seed, std::size_t pool_size = 0)
      : schedule_(schedule), rng_(seed), pool_size_(pool_size) {}

  struct Draw {
    std::size_t example = 0;
    StepInfo step;
    Latent noisy;
    Latent eps;
  };
  Draw draw(const std::vector<DenoisingExample>& examples);

 private:
  Draw fresh(const std::vector<DenoisingExample>& examples);

  const NoiseSchedule& schedule_;
  Rng rng_;
  std::size_t pool_size_;
  std::vector<Draw> pool_;
  std::size_t next_ = 0;
};

/// Plain fixed-step SGD on every parameter of a copy of `backend`. The input
/// backend is not modified.
std::unique_ptr<DiffusionBackend> finetune_full(const DiffusionBackend& backend,
                                                const std::vector<DenoisingExample>& examples,
                                                const NoiseSchedule& schedule, const SgdOptions& options,
                                                TrainingReport* report = nullptr);

}  // namespace lvg
