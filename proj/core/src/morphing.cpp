// Copyright 2026 The lvg Authors
// SPDX-License-Identifier: Apache-2.0

#include "lvg/morphing.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>

#include "lvg/archive.hpp"
#include "lvg/error.hpp"
#include "lvg/parallel.hpp"
#include "lvg/random.hpp"

namespace lvg {

int LoraDelta::rank() const {
  int r = 0;
  for (const auto& [name, l] : layers) r = std::max(r, l.rank());
  return r;
}

std::map<std::string, Matrix> LoraDelta::effective() const {
  std::map<std::string, Matrix> out;
  for (const auto& [name, l] : layers) out.emplace(name, l.effective());
  return out;
}

LoraDelta zero_lora(const DiffusionBackend& backend, int rank, double init_scale, std::uint64_t seed) {
  if (rank < 1) throw Error(Errc::kInvalidArgument, "LoRA rank must be >= 1");
  LoraDelta delta;
  Rng rng(seed);
  for (const auto& name : backend.adaptable_layers()) {
    const Matrix& w = backend.parameters().at(name);
    if (rank > std::min(w.rows(), w.cols())) {
      throw Error(Errc::kInvalidArgument, "LoRA rank " + std::to_string(rank) + " exceeds min dimension of layer '" +
                                              name + "' (" + std::to_string(w.rows()) + "x" +
                                              std::to_string(w.cols()) + ")");
    }
    LoraLayer l;
    l.a.resize(rank, w.cols());
    for (Eigen::Index r = 0; r < l.a.rows(); ++r)
      for (Eigen::Index c = 0; c < l.a.cols(); ++c) l.a(r, c) = init_scale * rng.normal();
    l.b = Matrix::Zero(w.rows(), rank);
    delta.layers.emplace(name, std::move(l));
  }
  return delta;
}

std::unique_ptr<DiffusionBackend> apply_lora(const DiffusionBackend& backend, const LoraDelta& delta) {
  if (delta.layers.empty()) return backend.clone();
  ParamSet params = backend.parameters();
  for (const auto& [name, l] : delta.layers) {
    auto it = params.find(name);
    if (it == params.end()) throw Error(Errc::kNotFound, "backend has no layer '" + name + "' for LoRA");
    if (l.b.rows() != it->second.rows() || l.a.cols() != it->second.cols() || l.a.rows() != l.b.cols()) {
      throw Error(Errc::kDimensionMismatch, "LoRA factors for '" + name + "' do not match the layer shape");
    }
    it->second += l.effective();
  }
  return backend.with_parameters(std::move(params));
}

LoraDelta lora_finetune(const DiffusionBackend& backend, const DenoisingExample& example,
                        const NoiseSchedule& schedule, const LoraOptions& options, TrainingReport* report) {
  if (options.sgd.steps < 0 || options.sgd.batch < 1) {
    throw Error(Errc::kInvalidArgument, "steps must be >= 0 and batch >= 1");
  }
  LoraDelta delta = zero_lora(backend, options.rank, options.init_scale, derive_seed(options.sgd.seed, "lora.init", 0));
  if (options.sgd.steps == 0) return delta;
  validate_schedule(schedule);

  const std::vector<DenoisingExample> examples{example};
  NoiseSampler sampler(schedule, derive_seed(options.sgd.seed, "lora.noise", 0), options.sgd.pool_size());
  const Latent* control = example.control ? &*example.control : nullptr;
  for (int step = 0; step < options.sgd.steps; ++step) {
    const auto adapted = apply_lora(backend, delta);
    ParamSet grads;
    double loss = 0.0;
    for (int b = 0; b < options.sgd.batch; ++b) {
      const auto d = sampler.draw(examples);
      loss += adapted->denoising_loss(d.noisy, d.step, example.condition, control, d.eps, &grads);
    }
    loss /= options.sgd.batch;
    if (!std::isfinite(loss)) {
      throw StepError(Errc::kNonFinite, step, "LoRA loss became non-finite at step " + std::to_string(step));
    }
    if (report) report->losses.push_back(loss);
    const double scale = options.sgd.learning_rate / options.sgd.batch;
    for (auto& [name, l] : delta.layers) {
      auto g = grads.find(name);
      if (g == grads.end()) continue;
      const Matrix da = l.b.transpose() * g->second;
      const Matrix db = g->second * l.a.transpose();
      l.a -= scale * da;
      l.b -= scale * db;
    }
  }
  return delta;
}

LoraDelta lora_interpolate(const LoraDelta& delta_i, const LoraDelta& delta_j, double alpha) {
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw Error(Errc::kOutOfRange, "interpolation alpha must be in [0, 1]");
  if (delta_i.layers.size() != delta_j.layers.size()) {
    throw Error(Errc::kConflict, "LoRA deltas cover different layer sets");
  }
  for (const auto& [name, li] : delta_i.layers) {
    auto it = delta_j.layers.find(name);
    if (it == delta_j.layers.end()) throw Error(Errc::kConflict, "layer '" + name + "' missing from second delta");
    if (li.b.rows() != it->second.b.rows() || li.a.cols() != it->second.a.cols()) {
      throw Error(Errc::kDimensionMismatch, "layer '" + name + "' has different shapes in the two deltas");
    }
  }
  if (alpha == 0.0) return delta_i;
  if (alpha == 1.0) return delta_j;

  LoraDelta out;
  for (const auto& [name, li] : delta_i.layers) {
    const LoraLayer& lj = delta_j.layers.at(name);
    LoraLayer l;
    l.a.resize(li.a.rows() + lj.a.rows(), li.a.cols());
    l.a << li.a, lj.a;
    l.b.resize(li.b.rows(), li.b.cols() + lj.b.cols());
    l.b << (1.0 - alpha) * li.b, alpha * lj.b;
    out.layers.emplace(name, std::move(l));
  }
  return out;
}

void save_lora(const LoraDelta& delta, const std::filesystem::path& path) {
  TensorArchive a;
  a.metadata["kind"] = "lora";
  a.metadata["rank"] = std::to_string(delta.rank());
  for (const auto& [name, l] : delta.layers) {
    a.tensors[name + ".lora_a"] = l.a;
    a.tensors[name + ".lora_b"] = l.b;
  }
  write_archive(a, path);
}

LoraDelta load_lora(const std::filesystem::path& path) {
  const TensorArchive a = read_archive(path);
  auto kind = a.metadata.find("kind");
  if (kind == a.metadata.end() || kind->second != "lora") {
    throw Error(Errc::kParse, path.string() + ": not a LoRA archive");
  }
  LoraDelta delta;
  for (const auto& [key, m] : a.tensors) {
    const auto dot = key.rfind('.');
    if (dot == std::string::npos) throw Error(Errc::kParse, path.string() + ": bad tensor name '" + key + "'");
    const std::string layer = key.substr(0, dot), part = key.substr(dot + 1);
    if (part == "lora_a") {
      delta.layers[layer].a = m;
    } else if (part == "lora_b") {
      delta.layers[layer].b = m;
    } else {
      throw Error(Errc::kParse, path.string() + ": bad tensor name '" + key + "'");
    }
  }
  for (const auto& [name, l] : delta.layers) {
    if (l.a.size() == 0 || l.b.size() == 0 || l.a.rows() != l.b.cols()) {
      throw Error(Errc::kParse, path.string() + ": incomplete factors for layer '" + name + "'");
    }
  }
  return delta;
}

Latent slerp(const Latent& z_i, const Latent& z_j, double alpha) {
  if (!(z_i.shape() == z_j.shape())) {
    throw Error(Errc::kDimensionMismatch, "slerp of " + to_string(z_i.shape()) + " and " + to_string(z_j.shape()));
  }
  const double ni = z_i.norm(), nj = z_j.norm();
  if (ni == 0.0 || nj == 0.0) throw Error(Errc::kDegenerate, "slerp of a zero-norm latent");
  const double cosphi = std::clamp(z_i.values().cwiseProduct(z_j.values()).sum() / (ni * nj), -1.0, 1.0);
  const double phi = std::acos(cosphi);
  if (phi < 1e-4) return Latent(z_i.shape(), (1.0 - alpha) * z_i.values() + alpha * z_j.values());
  if (phi > std::numbers::pi - 1e-4) {
    throw Error(Errc::kDegenerate, "slerp endpoints are nearly antipodal; re-seed one of them");
  }
  const double s = std::sin(phi);
  return Latent(z_i.shape(),
                (std::sin((1.0 - alpha) * phi) / s) * z_i.values() + (std::sin(alpha * phi) / s) * z_j.values());
}

Transition generate_transition(const TransitionSpec& spec, const DiffusionBackend& backend,
                               const NoiseSchedule& schedule) {
  if (spec.n < 2) throw Error(Errc::kInvalidArgument, "transition needs n >= 2");
  if (spec.prev_frame.width != spec.next_frame.width || spec.prev_frame.height != spec.next_frame.height) {
    throw Error(Errc::kDimensionMismatch, "transition endpoints differ in size");
  }
  validate_schedule(schedule);

  struct Endpoint {
    const Image* frame;
    const std::string* query;
    const char* stage;
    Condition c;
    LoraDelta delta;
    TrainingReport report;
    Latent zT;
  };
  std::array<Endpoint, 2> ends{Endpoint{&spec.prev_frame, &spec.prev_query, "transition.prev", {}, {}, {}, {}},
                               Endpoint{&spec.next_frame, &spec.next_query, "transition.next", {}, {}, {}, {}}};
  parallel_for(2, spec.jobs, [&](std::size_t e) {
    Endpoint& ep = ends[e];
    ep.c = backend.encode_text(*ep.query);
    DenoisingExample ex{backend.encode(*ep.frame), ep.c, std::nullopt};
    LoraOptions opt = spec.lora;
    opt.sgd.seed = derive_seed(spec.seed, ep.stage, 0);
    ep.delta = lora_finetune(backend, ex, schedule, opt, &ep.report);
    const auto adapted = apply_lora(backend, ep.delta);
    ep.zT = ddim_invert(ex.z0, ep.c, schedule, *adapted);
  });

  Transition out;
  const auto count = static_cast<std::size_t>(spec.n - 1);
  out.frames.resize(count);
  for (std::size_t k = 1; k <= count; ++k) out.alphas.push_back(static_cast<double>(k) / spec.n);
  parallel_for(count, spec.jobs, [&](std::size_t i) {
    const double a = out.alphas[i];
    try {
      const Latent zT = slerp(ends[0].zT, ends[1].zT, a);
      const Condition c = (1.0 - a) * ends[0].c + a * ends[1].c;
      const auto adapted = apply_lora(backend, lora_interpolate(ends[0].delta, ends[1].delta, a));
      out.frames[i] = backend.decode(ddim_sample(zT, c, schedule, *adapted));
    } catch (const Error& e) {
      throw StepError(e.code(), static_cast<long>(i + 1), "transition frame k=" + std::to_string(i + 1) + ": " + e.what());
    }
  });
  out.delta_prev = std::move(ends[0].delta);
  out.delta_next = std::move(ends[1].delta);
  out.report_prev = std::move(ends[0].report);
  out.report_next = std::move(ends[1].report);
  return out;
}

}  // namespace lvg
