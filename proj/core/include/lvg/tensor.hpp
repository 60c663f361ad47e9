// Copyright 2026 The lvg Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <map>
#include <string>

namespace lvg {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// Exact equality that tolerates differing shapes (Eigen's operator==
/// requires equal sizes).
inline bool same_values(const Matrix& a, const Matrix& b) {
  return a.rows() == b.rows() && a.cols() == b.cols() && a == b;
}

struct Shape3 {
  int channels = 0;
  int height = 0;
  int width = 0;

  int pixels() const { return height * width; }
  int size() const { return channels * height * width; }
  bool operator==(const Shape3&) const = default;
};

std::string to_string(const Shape3& shape);

/// A channels x height x width latent. Storage is a channels x (height*width)
/// matrix whose column index is y * width + x, which lets convolutions run as
/// a single matrix product over an im2col buffer.
class Latent {
 public:
  Latent() = default;
  explicit Latent(Shape3 shape);
  Latent(Shape3 shape, Matrix values);

  const Shape3& shape() const { return shape_; }
  const Matrix& values() const { return values_; }
  Matrix& values() { return values_; }

  double& at(int c, int y, int x) { return values_(c, y * shape_.width + x); }
  double at(int c, int y, int x) const { return values_(c, y * shape_.width + x); }

  bool all_finite() const { return values_.allFinite(); }
  double norm() const { return values_.norm(); }

  /// Flattened copy in channel-major order.
  Vector flat() const;
  static Latent from_flat(Shape3 shape, const Vector& flat);

  bool operator==(const Latent& other) const {
    return shape_ == other.shape_ && same_values(values_, other.values_);
  }

 private:
  Shape3 shape_{};
  Matrix values_;
};

/// FNV-1a digest over the raw bytes of a latent; used in audit records.
std::uint64_t digest(const Latent& latent);

/// ||a - b|| / ||b||, or ||a - b|| when b is zero.
double relative_error(const Latent& a, const Latent& b);

/// Ordered name -> matrix map holding a model's parameters or their gradients.
using ParamSet = std::map<std::string, Matrix>;

bool same_values(const ParamSet& a, const ParamSet& b);

}  // namespace lvg
