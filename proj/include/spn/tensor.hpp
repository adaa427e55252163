#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace spn {

using Shape = std::vector<std::size_t>;

/// Thrown when tensor shapes do not satisfy an operation's contract.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

std::string to_string(const Shape& shape);
std::size_t shape_size(const Shape& shape);

/// Dense row-major array of doubles. Images and feature maps are stored
/// channel-last, [h, w, c] per sample and [n, h, w, c] per batch.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, double fill = 0.0);
  Tensor(Shape shape, std::vector<double> values);

  static Tensor zeros(Shape shape) { return Tensor(std::move(shape)); }
  static Tensor from(std::initializer_list<std::size_t> shape,
                     std::initializer_list<double> values);

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t dim(std::size_t axis) const { return shape_.at(axis); }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  std::span<double> values() { return data_; }
  std::span<const double> values() const { return data_; }
  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  double& at(std::size_t i, std::size_t j) { return data_[i * shape_[1] + j]; }
  double at(std::size_t i, std::size_t j) const { return data_[i * shape_[1] + j]; }
  double& at(std::size_t i, std::size_t j, std::size_t k) {
    return data_[(i * shape_[1] + j) * shape_[2] + k];
  }
  double at(std::size_t i, std::size_t j, std::size_t k) const {
    return data_[(i * shape_[1] + j) * shape_[2] + k];
  }

  /// Reinterprets the data under a new shape with the same element count.
  Tensor& reshape(Shape shape);
  Tensor reshaped(Shape shape) const;

  void fill(double value);
  bool all_finite() const;

  friend bool operator==(const Tensor& a, const Tensor& b) {
    return a.shape_ == b.shape_ && a.data_ == b.data_;
  }

 private:
  Shape shape_;
  std::vector<double> data_;
};

/// c[i,j] = sum_t a[i,t] * b[t,j].
Tensor matmul(const Tensor& a, const Tensor& b);

/// Zero border around an [h, w, c] (or batched [n, h, w, c]) tensor.
Tensor pad2d(const Tensor& x, std::size_t top, std::size_t bottom, std::size_t left,
             std::size_t right);

/// Inverse of pad2d: removes the given border.
Tensor crop2d(const Tensor& x, std::size_t top, std::size_t bottom, std::size_t left,
              std::size_t right);

/// Stacks tensors along the last axis. All leading dimensions must agree.
Tensor concat_channels(std::span<const Tensor> inputs);
Tensor concat_channels(std::initializer_list<Tensor> inputs);

/// Per-row index of the maximum; ties resolve to the lowest index.
std::vector<std::size_t> argmax_last(const Tensor& x);

}  // namespace spn
