#pragma once

#include <cstddef>
#include <vector>

#include "seqpool/errors.hpp"

namespace seqpool {

/// Dense row-major tensor of 64-bit floats with a dynamic shape.
/// Rank 1 covers vectors, rank 2 matrices, rank 3 image stacks (c, h, w).
class Tensor {
 public:
  Tensor() = default;

  /// Zero-filled tensor of the given shape.
  explicit Tensor(std::vector<std::size_t> shape);

  Tensor(std::vector<std::size_t> shape, std::vector<double> data);

  static Tensor zeros(std::vector<std::size_t> shape) { return Tensor(std::move(shape)); }
  static Tensor full(std::vector<std::size_t> shape, double value);

  /// Construction from untrusted input: rejects NaN and infinity.
  static Tensor from_external(std::vector<std::size_t> shape, std::vector<double> data);

  const std::vector<std::size_t>& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t dim(std::size_t i) const { return shape_[i]; }
  std::size_t size() const { return data_.size(); }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  const std::vector<double>& storage() const { return data_; }

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  /// Rank-2 element access.
  double& at(std::size_t r, std::size_t c) { return data_[r * shape_[1] + c]; }
  double at(std::size_t r, std::size_t c) const { return data_[r * shape_[1] + c]; }

  bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }
  bool all_finite() const;

  void fill(double v);

 private:
  std::vector<std::size_t> shape_;
  std::vector<double> data_;
};

/// Throws DimensionError unless both tensors share a shape.
void require_same_shape(const Tensor& a, const Tensor& b, const char* what);

/// Throws DimensionError unless the tensor has the given rank.
void require_rank(const Tensor& t, std::size_t rank, const char* what);

/// Max-norm of the elementwise difference. Shapes must match.
double max_abs_diff(const Tensor& a, const Tensor& b);

bool bit_equal(const Tensor& a, const Tensor& b);

class RngStream;

/// Tensor filled from a seeded stream, uniform in [lo, hi).
Tensor random_uniform(std::vector<std::size_t> shape, RngStream& rng, double lo, double hi);

}  // namespace seqpool
