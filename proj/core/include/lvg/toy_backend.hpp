// Copyright 2026 The lvg Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <memory>

#include "lvg/diffusion.hpp"
#include "lvg/text_encoder.hpp"

namespace lvg {

/// Fixed linear codec over 4x4 RGB patches. Pixels map to [-1, 1]; each
/// 48-value patch is projected onto four orthonormal rows: the three
/// per-colour patch means and one seeded direction orthogonal to them, times
/// `kScale`. Decoding applies the transpose, so encode(decode(z)) == z up to
/// 8-bit quantization and block-constant images survive decode(encode(.))
/// exactly.
class PatchCodec {
 public:
  static constexpr int kPatch = 4;
  static constexpr int kChannels = 4;
  static constexpr double kScale = 0.25;

  explicit PatchCodec(std::uint64_t seed);

  Shape3 latent_shape(int width, int height) const;
  Latent encode(const Image& image) const;
  Image decode(const Latent& z) const;
  std::uint64_t seed() const { return seed_; }

 private:
  std::uint64_t seed_;
  Matrix rows_;  // 4 x 48
};

struct ToyConfig {
  int hidden = 16;
  /// Fixed gain on the latent input of conv1. Small values keep the
  /// predictor weakly state-dependent, which bounds the DDIM round-trip error.
  double latent_gain = 0.05;
  int condition_dim = 16;
  std::uint64_t text_seed = 0x5eed;
  std::uint64_t codec_seed = 0xc0dec;
};

/// Two 3x3 convolutions with a tanh between them.
///
///   h   = tanh(conv1([g z; control]) + b1 + U c + V [s, s^2]),  s = sqrt(1 - alpha)
///   eps = conv2(h) + b2
///
/// Parameters: conv1.weight (hidden x 45), conv1.bias, cond.weight
/// (hidden x condition_dim), time.weight (hidden x 2), conv2.weight
/// (4 x 9 hidden), conv2.bias. conv1.weight and conv2.weight are adaptable.
class ToyConvBackend final : public DiffusionBackend {
 public:
  ToyConvBackend(ToyConfig config, ParamSet params);

  /// Seeded random initialization (no training).
  static std::unique_ptr<ToyConvBackend> initialize(const ToyConfig& config, std::uint64_t seed);

  std::string kind() const override { return "toy_conv"; }
  Shape3 latent_shape(int image_size) const override { return codec_.latent_shape(image_size, image_size); }
  Latent predict_noise(const Latent& z, StepInfo step, const Condition& c,
                       const Latent* control = nullptr) const override;
  Latent encode(const Image& image) const override { return codec_.encode(image); }
  Image decode(const Latent& z) const override { return codec_.decode(z); }
  Condition encode_text(std::string_view text) const override { return text_.encode(text); }
  int condition_dim() const override { return config_.condition_dim; }

  const ParamSet& parameters() const override { return params_; }
  std::vector<std::string> adaptable_layers() const override { return {"conv1.weight", "conv2.weight"}; }
  std::unique_ptr<DiffusionBackend> with_parameters(ParamSet params) const override;
  double denoising_loss(const Latent& noisy, StepInfo step, const Condition& c, const Latent* control,
                        const Latent& target, ParamSet* grads) const override;
  TensorArchive to_archive() const override;

  const ToyConfig& config() const { return config_; }

 private:
  struct Forward;
  Forward forward(const Latent& z, StepInfo step, const Condition& c, const Latent* control) const;

  ToyConfig config_;
  ParamSet params_;
  PatchCodec codec_;
  HashTextEncoder text_;
};

struct ConstantNoiseConfig {
  /// 0 gives the zero predictor.
  double magnitude = 1.0;
  /// If false the same pattern is returned for every timestep.
  bool time_varying = true;
  std::uint64_t pattern_seed = 0xe75;
  int condition_dim = 16;
  std::uint64_t text_seed = 0x5eed;
  std::uint64_t codec_seed = 0xc0dec;
};

/// State-independent analytic predictor:
///   eps(z, t, c)[ch, p] = magnitude * pattern_t[ch, p] + offset[ch, p mod 16]
/// where pattern_t is a seeded standard-normal tensor. Ignores z, c and the
/// control input, so DDIM sampling inverts DDIM inversion exactly. `offset`
/// (4 x 16, zero by default) is adaptable.
class ConstantNoiseBackend final : public DiffusionBackend {
 public:
  static constexpr int kOffsetCols = 16;

  explicit ConstantNoiseBackend(ConstantNoiseConfig config);
  ConstantNoiseBackend(ConstantNoiseConfig config, ParamSet params);

  std::string kind() const override { return "constant_noise"; }
  Shape3 latent_shape(int image_size) const override { return codec_.latent_shape(image_size, image_size); }
  Latent predict_noise(const Latent& z, StepInfo step, const Condition& c,
                       const Latent* control = nullptr) const override;
  Latent encode(const Image& image) const override { return codec_.encode(image); }
  Image decode(const Latent& z) const override { return codec_.decode(z); }
  Condition encode_text(std::string_view text) const override { return text_.encode(text); }
  int condition_dim() const override { return config_.condition_dim; }

  const ParamSet& parameters() const override { return params_; }
  std::vector<std::string> adaptable_layers() const override { return {"offset"}; }
  std::unique_ptr<DiffusionBackend> with_parameters(ParamSet params) const override;
  double denoising_loss(const Latent& noisy, StepInfo step, const Condition& c, const Latent* control,
                        const Latent& target, ParamSet* grads) const override;
  TensorArchive to_archive() const override;

  /// magnitude * pattern_t for the given shape.
  Latent pattern(Shape3 shape, int t) const;

 private:
  ConstantNoiseConfig config_;
  ParamSet params_;
  PatchCodec codec_;
  HashTextEncoder text_;
};

struct ToyTrainOptions {
  int image_size = 64;
  int num_images = 24;
  SgdOptions sgd{.steps = 300, .batch = 4, .learning_rate = 0.02, .seed = 1};
  int schedule_steps = 50;
  double alpha_min = 0.01;
};

/// Seeded initialization followed by a short SGD run on synthetic scenes
/// with random captions.
std::unique_ptr<ToyConvBackend> train_toy_backend(const ToyConfig& config, const ToyTrainOptions& options,
                                                  std::uint64_t seed, TrainingReport* report = nullptr);

}  // namespace lvg
