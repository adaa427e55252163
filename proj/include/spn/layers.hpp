#pragma once

// Forward and backward primitives for every layer kind. All functions take
// batched tensors whose first axis is the sample index: images are
// [n, h, w, c] and vectors [n, d].

#include <cstddef>
#include <vector>

#include "spn/kernels.hpp"
#include "spn/rng.hpp"
#include "spn/tensor.hpp"

namespace spn {

enum class Padding { Valid, Same };
enum class Mode { Train, Infer };
enum class ActivationKind { ReLU, LeakyReLU, ELU };

struct ActivationFn {
  ActivationKind kind = ActivationKind::ReLU;
  double alpha = 0.0;

  static ActivationFn relu() { return {ActivationKind::ReLU, 0.0}; }
  static ActivationFn leaky_relu(double alpha = 0.3) { return {ActivationKind::LeakyReLU, alpha}; }
  static ActivationFn elu(double alpha = 1.0) { return {ActivationKind::ELU, alpha}; }

  friend bool operator==(const ActivationFn&, const ActivationFn&) = default;
};

// Convolution. kernel is [k, k, c_in, f], bias is [f].

kernels::ConvGeometry conv_geometry(const Shape& batched_input, std::size_t kernel,
                                    Padding padding, std::size_t stride = 1);
/// Output spatial extent along one axis.
std::size_t conv_output_extent(std::size_t extent, std::size_t kernel, Padding padding,
                               std::size_t stride);

/// Forward pass; leaves the unfolded input in col for the backward pass.
Tensor conv2d_forward(const Tensor& x, const Tensor& kernel, const Tensor& bias,
                      const kernels::ConvGeometry& g, Tensor& col);

struct ConvGrads {
  Tensor input;
  Tensor kernel;
  Tensor bias;
};

ConvGrads conv2d_backward(const Tensor& col, const Tensor& kernel, const Tensor& dout,
                          const kernels::ConvGeometry& g, bool need_input);

/// Convenience forms accepting [h,w,c] or [n,h,w,c].
Tensor conv2d(const Tensor& x, const Tensor& kernel, const Tensor& bias, Padding padding,
              std::size_t stride = 1);
ConvGrads conv2d_grad(const Tensor& x, const Tensor& kernel, const Tensor& dout,
                      Padding padding, std::size_t stride = 1);

// Pooling.

struct PoolResult {
  Tensor output;
  std::vector<std::size_t> argmax;
};

PoolResult maxpool2d(const Tensor& x, std::size_t window, std::size_t stride);
Tensor maxpool2d_backward(const Shape& input_shape, const PoolResult& forward,
                          const Tensor& dout, std::size_t window, std::size_t stride);

/// [n,h,w,c] -> [n,c]; argmax holds flat input indices.
PoolResult global_max_pool(const Tensor& x);
Tensor global_max_pool_backward(const Shape& input_shape, const PoolResult& forward,
                                const Tensor& dout);
Tensor global_avg_pool(const Tensor& x);
Tensor global_avg_pool_backward(const Shape& input_shape, const Tensor& dout);

// Fully connected: x [n, in], weights [in, out], bias [out].

Tensor dense(const Tensor& x, const Tensor& weights, const Tensor& bias);

struct DenseGrads {
  Tensor input;
  Tensor weights;
  Tensor bias;
};

DenseGrads dense_backward(const Tensor& x, const Tensor& weights, const Tensor& dout,
                          bool need_input);

// Inverted dropout. mask receives 0 or 1/(1-p) per element in train mode.

Tensor dropout(const Tensor& x, double rate, Mode mode, Rng& rng, Tensor* mask = nullptr);
Tensor dropout_backward(const Tensor& dout, const Tensor& mask);

// Batch normalization over every axis except the last (channel) axis.

struct BatchNormParams {
  Tensor gamma;
  Tensor beta;
  Tensor running_mean;
  Tensor running_var;
  double momentum = 0.99;
  double epsilon = 1e-3;
};

struct BatchNormCache {
  Tensor normalized;
  std::vector<double> inv_std;
};

/// Train mode normalizes with batch moments and folds them into the running
/// statistics; infer mode uses the running statistics.
Tensor batchnorm(const Tensor& x, BatchNormParams& bn, Mode mode, BatchNormCache* cache = nullptr);

struct BatchNormGrads {
  Tensor input;
  Tensor gamma;
  Tensor beta;
};

BatchNormGrads batchnorm_backward(const Tensor& dout, const Tensor& gamma,
                                  const BatchNormCache& cache);

// Activations and softmax.

double activate(double x, const ActivationFn& fn);
Tensor activation(const Tensor& x, const ActivationFn& fn);
Tensor activation_backward(const Tensor& x, const Tensor& y, const Tensor& dout,
                           const ActivationFn& fn);

/// Row-wise softmax over the last axis of [n, k] (or a single [k] vector).
Tensor softmax(const Tensor& logits);

// Initialization.

double glorot_limit(std::size_t fan_in, std::size_t fan_out);
/// Fills t with i.i.d. uniform values on [-L, L].
void glorot_uniform_init(Tensor& t, std::size_t fan_in, std::size_t fan_out, Rng& rng);

}  // namespace spn
