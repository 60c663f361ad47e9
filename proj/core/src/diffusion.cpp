// Copyright 2026 The lvg Authors
// SPDX-License-Identifier: Apache-2.0

#include "lvg/diffusion.hpp"

#include <cmath>
#include <numbers>
#include <numeric>

#include "lvg/error.hpp"

namespace lvg {

ScheduleKind parse_schedule_kind(std::string_view name) {
  if (name == "linear") return ScheduleKind::kLinear;
  if (name == "cosine") return ScheduleKind::kCosine;
  throw Error(Errc::kUnsupported, "unknown schedule kind '" + std::string(name) + "' (use linear or cosine)");
}

std::string_view to_string(ScheduleKind kind) {
  return kind == ScheduleKind::kLinear ? "linear" : "cosine";
}

NoiseSchedule make_schedule(int steps, ScheduleKind kind, double alpha_min) {
  if (steps < 1) throw Error(Errc::kInvalidArgument, "schedule needs T >= 1, got " + std::to_string(steps));
  if (!(alpha_min > 0.0 && alpha_min < 1.0)) {
    throw Error(Errc::kInvalidArgument, "alpha_min must lie in (0, 1), got " + std::to_string(alpha_min));
  }
  NoiseSchedule s;
  s.alphas.resize(static_cast<std::size_t>(steps) + 1);
  for (int t = 0; t <= steps; ++t) {
    const double frac = static_cast<double>(t) / steps;
    double a = 0.0;
    if (kind == ScheduleKind::kLinear) {
      a = 1.0 - (1.0 - alpha_min) * frac;
    } else {
      const double c = std::cos(0.5 * std::numbers::pi * frac);
      a = alpha_min + (1.0 - alpha_min) * c * c;
    }
    s.alphas[static_cast<std::size_t>(t)] = a;
  }
  s.alphas.front() = 1.0;
  s.alphas.back() = alpha_min;
  validate_schedule(s);
  return s;
}

void validate_schedule(const NoiseSchedule& schedule) {
  if (schedule.alphas.size() < 2) throw Error(Errc::kInvalidArgument, "schedule needs at least alpha_0 and alpha_1");
  for (std::size_t t = 0; t < schedule.alphas.size(); ++t) {
    const double a = schedule.alphas[t];
    if (!(a > 0.0 && a <= 1.0)) {
      throw Error(Errc::kInvalidArgument, "alpha_" + std::to_string(t) + " = " + std::to_string(a) + " outside (0, 1]");
    }
    if (t > 0 && !(a < schedule.alphas[t - 1])) {
      throw Error(Errc::kInvalidArgument, "schedule not strictly decreasing at t = " + std::to_string(t));
    }
  }
}

void save_backend(const DiffusionBackend& backend, const std::filesystem::path& path) {
  write_archive(backend.to_archive(), path);
}

namespace {

Latent predict(const DiffusionBackend& backend, const Latent& z, StepInfo step, const Condition& c,
               const Latent* control, const DdimOptions& options) {
  Latent eps = backend.predict_noise(z, step, c, control);
  if (options.guidance_scale && *options.guidance_scale != 1.0) {
    const Latent uncond = backend.predict_noise(z, step, Condition::Zero(c.size()), control);
    eps.values() = uncond.values() + *options.guidance_scale * (eps.values() - uncond.values());
  }
  return eps;
}

void check_inputs(const Latent& z, const NoiseSchedule& schedule, const Latent* control) {
  validate_schedule(schedule);
  if (!z.all_finite()) throw StepError(Errc::kNonFinite, 0, "initial latent has non-finite entries");
  if (control && (control->shape().height != z.shape().height || control->shape().width != z.shape().width)) {
    throw Error(Errc::kDimensionMismatch, "control " + to_string(control->shape()) +
                                              " does not match latent " + to_string(z.shape()));
  }
}

}  // namespace

Latent ddim_step(const Latent& z, const Latent& eps, double alpha_from, double alpha_to) {
  Latent out(z.shape());
  out.values() = std::sqrt(alpha_to) * (z.values() - std::sqrt(1.0 - alpha_from) * eps.values()) / std::sqrt(alpha_from) +
                 std::sqrt(1.0 - alpha_to) * eps.values();
  return out;
}

Latent ddim_invert(const Latent& z0, const Condition& c, const NoiseSchedule& schedule,
                   const DiffusionBackend& backend, const Latent* control, std::vector<Latent>* trajectory,
                   const DdimOptions& options) {
  check_inputs(z0, schedule, control);
  if (trajectory) {
    trajectory->clear();
    trajectory->push_back(z0);
  }
  Latent z = z0;
  for (int t = 0; t < schedule.steps(); ++t) {
    const Latent eps = predict(backend, z, {t, schedule.alpha(t)}, c, control, options);
    if (!(eps.shape() == z.shape())) {
      throw StepError(Errc::kDimensionMismatch, t, "predictor changed latent shape at step " + std::to_string(t));
    }
    z = ddim_step(z, eps, schedule.alpha(t), schedule.alpha(t + 1));
    if (!z.all_finite()) {
      throw StepError(Errc::kNonFinite, t + 1, "inversion produced a non-finite latent at step " + std::to_string(t + 1));
    }
    if (trajectory) trajectory->push_back(z);
  }
  return z;
}

Latent ddim_sample(const Latent& zT, const Condition& c, const NoiseSchedule& schedule,
                   const DiffusionBackend& backend, const LevelHook& hook, const Latent* control,
                   std::vector<Latent>* trajectory, const DdimOptions& options) {
  check_inputs(zT, schedule, control);
  const int steps = schedule.steps();
  Latent z = zT;
  if (hook) hook(steps, z);
  if (trajectory) {
    trajectory->assign(static_cast<std::size_t>(steps) + 1, Latent{});
    (*trajectory)[static_cast<std::size_t>(steps)] = z;
  }
  for (int t = steps; t >= 1; --t) {
    const Latent eps = predict(backend, z, {t - 1, schedule.alpha(t - 1)}, c, control, options);
    if (!(eps.shape() == z.shape())) {
      throw StepError(Errc::kDimensionMismatch, t, "predictor changed latent shape at step " + std::to_string(t));
    }
    z = ddim_step(z, eps, schedule.alpha(t), schedule.alpha(t - 1));
    if (hook) hook(t - 1, z);
    if (!z.all_finite()) {
      throw StepError(Errc::kNonFinite, t - 1, "sampling produced a non-finite latent at step " + std::to_string(t - 1));
    }
    if (trajectory) (*trajectory)[static_cast<std::size_t>(t - 1)] = z;
  }
  return z;
}

std::size_t TrainingReport::window() const {
  return std::max<std::size_t>(1, losses.size() / 10);
}

double TrainingReport::initial_running_loss() const {
  if (losses.empty()) return 0.0;
  const auto w = window();
  return std::accumulate(losses.begin(), losses.begin() + static_cast<std::ptrdiff_t>(w), 0.0) / static_cast<double>(w);
}

double TrainingReport::final_running_loss() const {
  if (losses.empty()) return 0.0;
  const auto w = window();
  return std::accumulate(losses.end() - static_cast<std::ptrdiff_t>(w), losses.end(), 0.0) / static_cast<double>(w);
}

NoiseSampler::Draw NoiseSampler::draw(const std::vector<DenoisingExample>& examples) {
  if (pool_size_ == 0) return fresh(examples);
  if (pool_.size() < pool_size_) {
    pool_.push_back(fresh(examples));
    return pool_.back();
  }
  const Draw& d = pool_[next_];
  next_ = (next_ + 1) % pool_size_;
  return d;
}

NoiseSampler::Draw NoiseSampler::fresh(const std::vector<DenoisingExample>& examples) {
  Draw d;
  d.example = static_cast<std::size_t>(rng_.below(examples.size()));
  const int t = 1 + static_cast<int>(rng_.below(static_cast<std::uint64_t>(schedule_.steps())));
  d.step = {t, schedule_.alpha(t)};
  const Latent& z0 = examples[d.example].z0;
  d.eps = Latent(z0.shape());
  for (Eigen::Index c = 0; c < d.eps.values().cols(); ++c)
    for (Eigen::Index r = 0; r < d.eps.values().rows(); ++r) d.eps.values()(r, c) = rng_.normal();
  d.noisy = Latent(z0.shape());
  d.noisy.values() = std::sqrt(d.step.alpha) * z0.values() + std::sqrt(1.0 - d.step.alpha) * d.eps.values();
  return d;
}

std::unique_ptr<DiffusionBackend> finetune_full(const DiffusionBackend& backend,
                                                const std::vector<DenoisingExample>& examples,
                                                const NoiseSchedule& schedule, const SgdOptions& options,
                                                TrainingReport* report) {
  if (options.steps < 0 || options.batch < 1) throw Error(Errc::kInvalidArgument, "steps must be >= 0 and batch >= 1");
  auto current = backend.clone();
  if (options.steps == 0) return current;
  if (examples.empty()) throw Error(Errc::kInvalidArgument, "fine-tuning needs at least one example");
  validate_schedule(schedule);

  NoiseSampler sampler(schedule, options.seed, options.pool_size());
  ParamSet params = backend.parameters();
  for (int step = 0; step < options.steps; ++step) {
    ParamSet grads;
    double loss = 0.0;
    for (int b = 0; b < options.batch; ++b) {
      const auto d = sampler.draw(examples);
      const auto& ex = examples[d.example];
      loss += current->denoising_loss(d.noisy, d.step, ex.condition, ex.control ? &*ex.control : nullptr, d.eps, &grads);
    }
    loss /= options.batch;
    if (!std::isfinite(loss)) {
      throw StepError(Errc::kNonFinite, step, "fine-tuning loss became non-finite at step " + std::to_string(step));
    }
    if (report) report->losses.push_back(loss);
    const double scale = options.learning_rate / options.batch;
    for (auto& [name, g] : grads) params.at(name) -= scale * g;
    current = backend.with_parameters(params);
  }
  return current;
}

}  // namespace lvg
