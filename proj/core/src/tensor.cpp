// Copyright 2026 The lvg Authors
// SPDX-License-Identifier: Apache-2.0

#include "lvg/tensor.hpp"

#include <string_view>

#include "lvg/error.hpp"
#include "lvg/random.hpp"

namespace lvg {

std::string to_string(const Shape3& shape) {
  return std::to_string(shape.channels) + "x" + std::to_string(shape.height) + "x" +
         std::to_string(shape.width);
}

Latent::Latent(Shape3 shape) : shape_(shape), values_(Matrix::Zero(shape.channels, shape.pixels())) {}

Latent::Latent(Shape3 shape, Matrix values) : shape_(shape), values_(std::move(values)) {
  if (values_.rows() != shape_.channels || values_.cols() != shape_.pixels()) {
    throw Error(Errc::kDimensionMismatch,
                "latent values are " + std::to_string(values_.rows()) + "x" +
                    std::to_string(values_.cols()) + ", expected shape " + to_string(shape_));
  }
}

Vector Latent::flat() const {
  Vector out(shape_.size());
  for (int c = 0; c < shape_.channels; ++c) {
    out.segment(static_cast<Eigen::Index>(c) * shape_.pixels(), shape_.pixels()) =
        values_.row(c).transpose();
  }
  return out;
}

Latent Latent::from_flat(Shape3 shape, const Vector& flat) {
  if (flat.size() != shape.size()) {
    throw Error(Errc::kDimensionMismatch, "flat vector of size " + std::to_string(flat.size()) +
                                              " does not fit shape " + to_string(shape));
  }
  Latent out(shape);
  for (int c = 0; c < shape.channels; ++c) {
    out.values_.row(c) =
        flat.segment(static_cast<Eigen::Index>(c) * shape.pixels(), shape.pixels()).transpose();
  }
  return out;
}

std::uint64_t digest(const Latent& latent) {
  const auto& v = latent.values();
  std::string_view bytes(reinterpret_cast<const char*>(v.data()),
                         static_cast<std::size_t>(v.size()) * sizeof(double));
  return fnv1a64(bytes);
}

double relative_error(const Latent& a, const Latent& b) {
  if (!(a.shape() == b.shape())) {
    throw Error(Errc::kDimensionMismatch,
                "cannot compare latents " + to_string(a.shape()) + " and " + to_string(b.shape()));
  }
  const double diff = (a.values() - b.values()).norm();
  const double ref = b.values().norm();
  return ref > 0.0 ? diff / ref : diff;
}

bool same_values(const ParamSet& a, const ParamSet& b) {
  if (a.size() != b.size()) return false;
  for (auto ia = a.begin(), ib = b.begin(); ia != a.end(); ++ia, ++ib) {
    if (ia->first != ib->first || !same_values(ia->second, ib->second)) return false;
  }
  return true;
}

}  // namespace lvg
