#include "spn/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <sstream>

#include "spn/kernels.hpp"

namespace spn {

std::string to_string(const Shape& shape) {
  std::ostringstream out;
  out << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) out << (i ? "," : "") << shape[i];
  out << ']';
  return out.str();
}

std::size_t shape_size(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

Tensor::Tensor(Shape shape, double fill) : shape_(std::move(shape)), data_(shape_size(shape_), fill) {}

Tensor::Tensor(Shape shape, std::vector<double> values)
    : shape_(std::move(shape)), data_(std::move(values)) {
  if (data_.size() != shape_size(shape_))
    throw ShapeError("tensor of shape " + to_string(shape_) + " needs " +
                     std::to_string(shape_size(shape_)) + " values, got " +
                     std::to_string(data_.size()));
}

Tensor Tensor::from(std::initializer_list<std::size_t> shape, std::initializer_list<double> values) {
  return Tensor(Shape(shape), std::vector<double>(values));
}

Tensor& Tensor::reshape(Shape shape) {
  if (shape_size(shape) != data_.size())
    throw ShapeError("cannot reshape " + to_string(shape_) + " to " + to_string(shape));
  shape_ = std::move(shape);
  return *this;
}

Tensor Tensor::reshaped(Shape shape) const {
  Tensor copy = *this;
  copy.reshape(std::move(shape));
  return copy;
}

void Tensor::fill(double value) { std::fill(data_.begin(), data_.end(), value); }

bool Tensor::all_finite() const {
  return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0))
    throw ShapeError("matmul: cannot multiply " + to_string(a.shape()) + " by " +
                     to_string(b.shape()));
  Tensor c({a.dim(0), b.dim(1)});
  kernels::gemm({.m = a.dim(0), .n = b.dim(1), .k = a.dim(1)}, a.values(), b.values(),
                c.values());
  return c;
}

namespace {

struct SpatialView {
  std::size_t batch, height, width, channels;
};

SpatialView spatial_view(const Tensor& x, const char* op) {
  if (x.rank() == 3) return {1, x.dim(0), x.dim(1), x.dim(2)};
  if (x.rank() == 4) return {x.dim(0), x.dim(1), x.dim(2), x.dim(3)};
  throw ShapeError(std::string(op) + ": expected [h,w,c] or [n,h,w,c], got " +
                   to_string(x.shape()));
}

Shape spatial_shape(const Tensor& like, std::size_t h, std::size_t w) {
  Shape s = like.shape();
  s[s.size() - 3] = h;
  s[s.size() - 2] = w;
  return s;
}

}  // namespace

Tensor pad2d(const Tensor& x, std::size_t top, std::size_t bottom, std::size_t left,
             std::size_t right) {
  const auto v = spatial_view(x, "pad2d");
  const std::size_t oh = v.height + top + bottom;
  const std::size_t ow = v.width + left + right;
  Tensor out(spatial_shape(x, oh, ow));
  for (std::size_t n = 0; n < v.batch; ++n)
    for (std::size_t i = 0; i < v.height; ++i) {
      const double* src = x.data() + ((n * v.height + i) * v.width) * v.channels;
      double* dst = out.data() + ((n * oh + i + top) * ow + left) * v.channels;
      std::copy_n(src, v.width * v.channels, dst);
    }
  return out;
}

Tensor crop2d(const Tensor& x, std::size_t top, std::size_t bottom, std::size_t left,
              std::size_t right) {
  const auto v = spatial_view(x, "crop2d");
  if (top + bottom >= v.height || left + right >= v.width)
    throw ShapeError("crop2d: border exceeds extent of " + to_string(x.shape()));
  const std::size_t oh = v.height - top - bottom;
  const std::size_t ow = v.width - left - right;
  Tensor out(spatial_shape(x, oh, ow));
  for (std::size_t n = 0; n < v.batch; ++n)
    for (std::size_t i = 0; i < oh; ++i) {
      const double* src = x.data() + ((n * v.height + i + top) * v.width + left) * v.channels;
      double* dst = out.data() + ((n * oh + i) * ow) * v.channels;
      std::copy_n(src, ow * v.channels, dst);
    }
  return out;
}

Tensor concat_channels(std::span<const Tensor> inputs) {
  if (inputs.empty()) throw ShapeError("concat_channels: no inputs");
  const Shape& first = inputs.front().shape();
  if (first.empty()) throw ShapeError("concat_channels: scalar input");
  std::size_t total = 0;
  for (const Tensor& t : inputs) {
    if (t.rank() != first.size() ||
        !std::equal(first.begin(), first.end() - 1, t.shape().begin()))
      throw ShapeError("concat_channels: spatial mismatch between " + to_string(first) +
                       " and " + to_string(t.shape()));
    total += t.shape().back();
  }
  Shape shape = first;
  shape.back() = total;
  Tensor out(shape);
  const std::size_t outer = first.size() > 1 ? shape_size(Shape(first.begin(), first.end() - 1)) : 1;
  std::size_t offset = 0;
  for (const Tensor& t : inputs) {
    const std::size_t c = t.shape().back();
    for (std::size_t o = 0; o < outer; ++o)
      std::copy_n(t.data() + o * c, c, out.data() + o * total + offset);
    offset += c;
  }
  return out;
}

Tensor concat_channels(std::initializer_list<Tensor> inputs) {
  return concat_channels(std::span<const Tensor>(inputs.begin(), inputs.size()));
}

std::vector<std::size_t> argmax_last(const Tensor& x) {
  if (x.rank() != 2 || x.dim(1) == 0)
    throw ShapeError("argmax_last: expected [n,k] with k >= 1, got " + to_string(x.shape()));
  std::vector<std::size_t> out(x.dim(0));
  for (std::size_t i = 0; i < x.dim(0); ++i) {
    std::size_t best = 0;
    for (std::size_t j = 1; j < x.dim(1); ++j)
      if (x.at(i, j) > x.at(i, best)) best = j;
    out[i] = best;
  }
  return out;
}

}  // namespace spn
