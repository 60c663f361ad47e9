// Copyright 2026 The lvg Authors
// SPDX-License-Identifier: Apache-2.0

#include "lvg/toy_backend.hpp"

#include <algorithm>
#include <cmath>

#include "lvg/error.hpp"
#include "lvg/random.hpp"
#include "lvg/synthetic.hpp"

namespace lvg {
namespace {

constexpr int kLatentChannels = PatchCodec::kChannels;
constexpr int kControlChannels = 1;
constexpr int kKernel = 9;  // 3x3

// (cin * 9) x (h * w) patch matrix for a 3x3 convolution with zero padding.
// Row index is ci * 9 + ky * 3 + kx.
Matrix im2col(const Matrix& x, int h, int w) {
  Matrix cols = Matrix::Zero(x.rows() * kKernel, static_cast<Eigen::Index>(h) * w);
  for (Eigen::Index ci = 0; ci < x.rows(); ++ci) {
    for (int ky = 0; ky < 3; ++ky) {
      for (int kx = 0; kx < 3; ++kx) {
        const Eigen::Index row = ci * kKernel + ky * 3 + kx;
        for (int y = 0; y < h; ++y) {
          const int sy = y + ky - 1;
          if (sy < 0 || sy >= h) continue;
          for (int xx = 0; xx < w; ++xx) {
            const int sx = xx + kx - 1;
            if (sx < 0 || sx >= w) continue;
            cols(row, y * w + xx) = x(ci, sy * w + sx);
          }
        }
      }
    }
  }
  return cols;
}

// Adjoint of im2col.
Matrix col2im(const Matrix& cols, Eigen::Index channels, int h, int w) {
  Matrix x = Matrix::Zero(channels, static_cast<Eigen::Index>(h) * w);
  for (Eigen::Index ci = 0; ci < channels; ++ci) {
    for (int ky = 0; ky < 3; ++ky) {
      for (int kx = 0; kx < 3; ++kx) {
        const Eigen::Index row = ci * kKernel + ky * 3 + kx;
        for (int y = 0; y < h; ++y) {
          const int sy = y + ky - 1;
          if (sy < 0 || sy >= h) continue;
          for (int xx = 0; xx < w; ++xx) {
            const int sx = xx + kx - 1;
            if (sx < 0 || sx >= w) continue;
            x(ci, sy * w + sx) += cols(row, y * w + xx);
          }
        }
      }
    }
  }
  return x;
}

Matrix gaussian(Rng& rng, Eigen::Index rows, Eigen::Index cols, double stddev) {
  Matrix m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r)
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = stddev * rng.normal();
  return m;
}

void check_params(const ParamSet& expected_shapes, const ParamSet& given, const std::string& kind) {
  for (const auto& [name, m] : expected_shapes) {
    auto it = given.find(name);
    if (it == given.end()) throw Error(Errc::kInvalidArgument, kind + ": missing parameter '" + name + "'");
    if (it->second.rows() != m.rows() || it->second.cols() != m.cols()) {
      throw Error(Errc::kDimensionMismatch, kind + ": parameter '" + name + "' is " +
                                                std::to_string(it->second.rows()) + "x" +
                                                std::to_string(it->second.cols()) + ", expected " +
                                                std::to_string(m.rows()) + "x" + std::to_string(m.cols()));
    }
    if (!it->second.allFinite()) throw Error(Errc::kNonFinite, kind + ": parameter '" + name + "' is not finite");
  }
  if (given.size() != expected_shapes.size()) {
    throw Error(Errc::kInvalidArgument, kind + ": unexpected extra parameters");
  }
}

ParamSet toy_shapes(const ToyConfig& cfg) {
  ParamSet p;
  p["conv1.weight"] = Matrix::Zero(cfg.hidden, (kLatentChannels + kControlChannels) * kKernel);
  p["conv1.bias"] = Matrix::Zero(cfg.hidden, 1);
  p["cond.weight"] = Matrix::Zero(cfg.hidden, cfg.condition_dim);
  p["time.weight"] = Matrix::Zero(cfg.hidden, 2);
  p["conv2.weight"] = Matrix::Zero(kLatentChannels, cfg.hidden * kKernel);
  p["conv2.bias"] = Matrix::Zero(kLatentChannels, 1);
  return p;
}

std::uint64_t parse_u64(const std::map<std::string, std::string>& meta, const std::string& key) {
  auto it = meta.find(key);
  if (it == meta.end()) throw Error(Errc::kParse, "backend archive missing metadata '" + key + "'");
  return std::stoull(it->second);
}

}  // namespace

// ---------------------------------------------------------------------------
// PatchCodec

PatchCodec::PatchCodec(std::uint64_t seed) : seed_(seed), rows_(Matrix::Zero(kChannels, kPatch * kPatch * 3)) {
  constexpr int n = kPatch * kPatch;
  for (int c = 0; c < 3; ++c)
    for (int p = 0; p < n; ++p) rows_(c, p * 3 + c) = 1.0 / std::sqrt(static_cast<double>(n));
  Rng rng(seed);
  Vector extra(rows_.cols());
  for (Eigen::Index i = 0; i < extra.size(); ++i) extra[i] = rng.normal();
  for (int c = 0; c < 3; ++c) extra -= extra.dot(rows_.row(c).transpose()) * rows_.row(c).transpose();
  rows_.row(3) = extra.normalized().transpose();
}

Shape3 PatchCodec::latent_shape(int width, int height) const {
  if (width <= 0 || height <= 0 || width % kPatch || height % kPatch) {
    throw Error(Errc::kDimensionMismatch, "image " + std::to_string(width) + "x" + std::to_string(height) +
                                              " is not a positive multiple of the " + std::to_string(kPatch) +
                                              "-pixel patch");
  }
  return {kChannels, height / kPatch, width / kPatch};
}

Latent PatchCodec::encode(const Image& image) const {
  const Shape3 shape = latent_shape(image.width, image.height);
  Latent z(shape);
  Vector patch(rows_.cols());
  for (int by = 0; by < shape.height; ++by) {
    for (int bx = 0; bx < shape.width; ++bx) {
      for (int py = 0; py < kPatch; ++py)
        for (int px = 0; px < kPatch; ++px)
          for (int c = 0; c < 3; ++c)
            patch[(py * kPatch + px) * 3 + c] = image.at(bx * kPatch + px, by * kPatch + py, c) / 127.5 - 1.0;
      z.values().col(by * shape.width + bx) = kScale * (rows_ * patch);
    }
  }
  return z;
}

Image PatchCodec::decode(const Latent& z) const {
  if (z.shape().channels != kChannels) {
    throw Error(Errc::kDimensionMismatch, "codec expects " + std::to_string(kChannels) + " latent channels, got " +
                                              std::to_string(z.shape().channels));
  }
  const Shape3& s = z.shape();
  Image img(s.width * kPatch, s.height * kPatch);
  for (int by = 0; by < s.height; ++by) {
    for (int bx = 0; bx < s.width; ++bx) {
      const Vector patch = rows_.transpose() * (z.values().col(by * s.width + bx) / kScale);
      for (int py = 0; py < kPatch; ++py)
        for (int px = 0; px < kPatch; ++px)
          for (int c = 0; c < 3; ++c) {
            const double v = (patch[(py * kPatch + px) * 3 + c] + 1.0) * 127.5;
            img.at(bx * kPatch + px, by * kPatch + py, c) =
                static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L));
          }
    }
  }
  return img;
}

// ---------------------------------------------------------------------------
// ToyConvBackend

struct ToyConvBackend::Forward {
  Matrix cols1;
  Matrix h;
  Matrix cols2;
  Matrix out;
  Vector time_features;
};

ToyConvBackend::ToyConvBackend(ToyConfig config, ParamSet params)
    : config_(config), params_(std::move(params)), codec_(config.codec_seed), text_(config.condition_dim, config.text_seed) {
  if (config_.hidden < 1) throw Error(Errc::kInvalidArgument, "toy backend needs hidden >= 1");
  check_params(toy_shapes(config_), params_, kind());
}

std::unique_ptr<ToyConvBackend> ToyConvBackend::initialize(const ToyConfig& config, std::uint64_t seed) {
  Rng rng(seed);
  ParamSet p = toy_shapes(config);
  const double in1 = (kLatentChannels + kControlChannels) * kKernel;
  p["conv1.weight"] = gaussian(rng, config.hidden, static_cast<Eigen::Index>(in1), 1.0 / std::sqrt(in1));
  p["cond.weight"] = gaussian(rng, config.hidden, config.condition_dim, 0.5 / std::sqrt(config.condition_dim));
  p["time.weight"] = gaussian(rng, config.hidden, 2, 0.5);
  p["conv2.weight"] = gaussian(rng, kLatentChannels, config.hidden * kKernel, 0.5 / std::sqrt(config.hidden * kKernel));
  return std::make_unique<ToyConvBackend>(config, std::move(p));
}

ToyConvBackend::Forward ToyConvBackend::forward(const Latent& z, StepInfo step, const Condition& c,
                                                const Latent* control) const {
  const Shape3& s = z.shape();
  if (s.channels != kLatentChannels) {
    throw Error(Errc::kDimensionMismatch, "toy backend expects " + std::to_string(kLatentChannels) +
                                              " latent channels, got " + std::to_string(s.channels));
  }
  if (c.size() != config_.condition_dim) {
    throw Error(Errc::kDimensionMismatch, "condition dim " + std::to_string(c.size()) + " but backend expects " +
                                              std::to_string(config_.condition_dim));
  }
  Matrix x = Matrix::Zero(kLatentChannels + kControlChannels, s.pixels());
  x.topRows(kLatentChannels) = config_.latent_gain * z.values();
  if (control) {
    if (control->shape() != Shape3{kControlChannels, s.height, s.width}) {
      throw Error(Errc::kDimensionMismatch, "control " + to_string(control->shape()) + " does not match latent " +
                                                to_string(s));
    }
    x.bottomRows(kControlChannels) = control->values();
  }

  Forward f;
  const double sigma = std::sqrt(std::max(0.0, 1.0 - step.alpha));
  f.time_features = Vector(2);
  f.time_features << sigma, sigma * sigma;
  const Vector shift = params_.at("conv1.bias").col(0) + params_.at("cond.weight") * c +
                       params_.at("time.weight") * f.time_features;

  f.cols1 = im2col(x, s.height, s.width);
  Matrix pre = params_.at("conv1.weight") * f.cols1;
  pre.colwise() += shift;
  f.h = pre.array().tanh().matrix();
  f.cols2 = im2col(f.h, s.height, s.width);
  f.out = params_.at("conv2.weight") * f.cols2;
  f.out.colwise() += params_.at("conv2.bias").col(0);
  return f;
}

Latent ToyConvBackend::predict_noise(const Latent& z, StepInfo step, const Condition& c, const Latent* control) const {
  auto f = forward(z, step, c, control);
  return Latent(z.shape(), std::move(f.out));
}

double ToyConvBackend::denoising_loss(const Latent& noisy, StepInfo step, const Condition& c, const Latent* control,
                                      const Latent& target, ParamSet* grads) const {
  if (!(noisy.shape() == target.shape())) throw Error(Errc::kDimensionMismatch, "loss target shape mismatch");
  const auto f = forward(noisy, step, c, control);
  const Matrix diff = f.out - target.values();
  const double m = static_cast<double>(diff.size());
  const double loss = diff.squaredNorm() / m;
  if (!grads) return loss;

  const Shape3& s = noisy.shape();
  auto acc = [&](const std::string& name, const Matrix& g) {
    auto [it, inserted] = grads->try_emplace(name, g);
    if (!inserted) it->second += g;
  };
  const Matrix d_out = (2.0 / m) * diff;
  acc("conv2.weight", d_out * f.cols2.transpose());
  acc("conv2.bias", d_out.rowwise().sum());
  const Matrix d_h = col2im(params_.at("conv2.weight").transpose() * d_out, config_.hidden, s.height, s.width);
  const Matrix d_pre = d_h.cwiseProduct((1.0 - f.h.array().square()).matrix());
  acc("conv1.weight", d_pre * f.cols1.transpose());
  const Vector d_shift = d_pre.rowwise().sum();
  acc("conv1.bias", d_shift);
  acc("cond.weight", d_shift * c.transpose());
  acc("time.weight", d_shift * f.time_features.transpose());
  return loss;
}

std::unique_ptr<DiffusionBackend> ToyConvBackend::with_parameters(ParamSet params) const {
  return std::make_unique<ToyConvBackend>(config_, std::move(params));
}

TensorArchive ToyConvBackend::to_archive() const {
  TensorArchive a;
  a.metadata["kind"] = kind();
  a.metadata["hidden"] = std::to_string(config_.hidden);
  {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", config_.latent_gain);
    a.metadata["latent_gain"] = buf;
  }
  a.metadata["condition_dim"] = std::to_string(config_.condition_dim);
  a.metadata["text_seed"] = std::to_string(config_.text_seed);
  a.metadata["codec_seed"] = std::to_string(config_.codec_seed);
  a.tensors = params_;
  return a;
}

// ---------------------------------------------------------------------------
// ConstantNoiseBackend

namespace {
ParamSet constant_shapes() {
  ParamSet p;
  p["offset"] = Matrix::Zero(kLatentChannels, ConstantNoiseBackend::kOffsetCols);
  return p;
}
}  // namespace

ConstantNoiseBackend::ConstantNoiseBackend(ConstantNoiseConfig config)
    : ConstantNoiseBackend(config, constant_shapes()) {}

ConstantNoiseBackend::ConstantNoiseBackend(ConstantNoiseConfig config, ParamSet params)
    : config_(config), params_(std::move(params)), codec_(config.codec_seed), text_(config.condition_dim, config.text_seed) {
  check_params(constant_shapes(), params_, kind());
}

Latent ConstantNoiseBackend::pattern(Shape3 shape, int t) const {
  Latent p(shape);
  if (config_.magnitude == 0.0) return p;
  const std::uint64_t seed =
      config_.time_varying ? derive_seed(config_.pattern_seed, "timestep", static_cast<std::uint64_t>(t)) : config_.pattern_seed;
  Rng rng(seed);
  for (int c = 0; c < shape.channels; ++c)
    for (int i = 0; i < shape.pixels(); ++i) p.values()(c, i) = config_.magnitude * rng.normal();
  return p;
}

Latent ConstantNoiseBackend::predict_noise(const Latent& z, StepInfo step, const Condition&, const Latent*) const {
  if (z.shape().channels != kLatentChannels) {
    throw Error(Errc::kDimensionMismatch, "constant backend expects " + std::to_string(kLatentChannels) + " channels");
  }
  Latent eps = pattern(z.shape(), step.t);
  const Matrix& off = params_.at("offset");
  for (int i = 0; i < z.shape().pixels(); ++i) eps.values().col(i) += off.col(i % kOffsetCols);
  return eps;
}

double ConstantNoiseBackend::denoising_loss(const Latent& noisy, StepInfo step, const Condition& c, const Latent* control,
                                            const Latent& target, ParamSet* grads) const {
  const Latent eps = predict_noise(noisy, step, c, control);
  const Matrix diff = eps.values() - target.values();
  const double m = static_cast<double>(diff.size());
  if (grads) {
    Matrix g = Matrix::Zero(kLatentChannels, kOffsetCols);
    for (Eigen::Index i = 0; i < diff.cols(); ++i) g.col(i % kOffsetCols) += (2.0 / m) * diff.col(i);
    auto [it, inserted] = grads->try_emplace("offset", g);
    if (!inserted) it->second += g;
  }
  return diff.squaredNorm() / m;
}

std::unique_ptr<DiffusionBackend> ConstantNoiseBackend::with_parameters(ParamSet params) const {
  return std::make_unique<ConstantNoiseBackend>(config_, std::move(params));
}

TensorArchive ConstantNoiseBackend::to_archive() const {
  TensorArchive a;
  a.metadata["kind"] = kind();
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", config_.magnitude);
  a.metadata["magnitude"] = buf;
  a.metadata["time_varying"] = config_.time_varying ? "1" : "0";
  a.metadata["pattern_seed"] = std::to_string(config_.pattern_seed);
  a.metadata["condition_dim"] = std::to_string(config_.condition_dim);
  a.metadata["text_seed"] = std::to_string(config_.text_seed);
  a.metadata["codec_seed"] = std::to_string(config_.codec_seed);
  a.tensors = params_;
  return a;
}

// ---------------------------------------------------------------------------

std::unique_ptr<DiffusionBackend> load_backend(const std::filesystem::path& path) {
  auto a = read_archive(path);
  const auto it = a.metadata.find("kind");
  if (it == a.metadata.end()) throw Error(Errc::kParse, path.string() + ": archive has no backend kind");
  try {
    if (it->second == "toy_conv") {
      ToyConfig cfg;
      cfg.hidden = static_cast<int>(parse_u64(a.metadata, "hidden"));
      cfg.latent_gain = std::stod(a.metadata.at("latent_gain"));
      cfg.condition_dim = static_cast<int>(parse_u64(a.metadata, "condition_dim"));
      cfg.text_seed = parse_u64(a.metadata, "text_seed");
      cfg.codec_seed = parse_u64(a.metadata, "codec_seed");
      return std::make_unique<ToyConvBackend>(cfg, std::move(a.tensors));
    }
    if (it->second == "constant_noise") {
      ConstantNoiseConfig cfg;
      cfg.magnitude = std::stod(a.metadata.at("magnitude"));
      cfg.time_varying = a.metadata.at("time_varying") == "1";
      cfg.pattern_seed = parse_u64(a.metadata, "pattern_seed");
      cfg.condition_dim = static_cast<int>(parse_u64(a.metadata, "condition_dim"));
      cfg.text_seed = parse_u64(a.metadata, "text_seed");
      cfg.codec_seed = parse_u64(a.metadata, "codec_seed");
      return std::make_unique<ConstantNoiseBackend>(cfg, std::move(a.tensors));
    }
  } catch (const std::invalid_argument&) {
    throw Error(Errc::kParse, path.string() + ": malformed backend metadata");
  } catch (const std::out_of_range&) {
    throw Error(Errc::kParse, path.string() + ": malformed backend metadata");
  }
  throw Error(Errc::kUnsupported, path.string() + ": unknown backend kind '" + it->second + "'");
}

std::unique_ptr<ToyConvBackend> train_toy_backend(const ToyConfig& config, const ToyTrainOptions& options,
                                                  std::uint64_t seed, TrainingReport* report) {
  auto base = ToyConvBackend::initialize(config, derive_seed(seed, "toy.init"));
  std::vector<DenoisingExample> examples;
  Rng caption_rng(derive_seed(seed, "toy.captions"));
  for (int i = 0; i < options.num_images; ++i) {
    const auto scene = derive_seed(seed, "toy.scene", static_cast<std::uint64_t>(i));
    const Image img = synthetic_frame(scene, i % 8, options.image_size);
    examples.push_back({base->encode(img), base->encode_text(synthetic_caption(caption_rng)), std::nullopt});
  }
  const auto schedule = make_schedule(options.schedule_steps, ScheduleKind::kLinear, options.alpha_min);
  SgdOptions sgd = options.sgd;
  sgd.seed = derive_seed(seed, "toy.sgd", sgd.seed);
  auto trained = finetune_full(*base, examples, schedule, sgd, report);
  return std::unique_ptr<ToyConvBackend>(static_cast<ToyConvBackend*>(trained.release()));
}

}  // namespace lvg
