#include "spn/layers.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace spn {

namespace {

Tensor as_batched(const Tensor& x) {
  if (x.rank() == 3) return x.reshaped({1, x.dim(0), x.dim(1), x.dim(2)});
  if (x.rank() == 4) return x;
  throw ShapeError("expected [h,w,c] or [n,h,w,c], got " + to_string(x.shape()));
}

void require_rank(const Tensor& x, std::size_t rank, const char* op) {
  if (x.rank() != rank)
    throw ShapeError(std::string(op) + ": expected rank " + std::to_string(rank) + ", got " +
                     to_string(x.shape()));
}

}  // namespace

std::size_t conv_output_extent(std::size_t extent, std::size_t kernel, Padding padding,
                               std::size_t stride) {
  if (stride == 0) throw ShapeError("convolution stride must be positive");
  if (padding == Padding::Same) return (extent + stride - 1) / stride;
  if (kernel > extent)
    throw ShapeError("kernel " + std::to_string(kernel) + " larger than input extent " +
                     std::to_string(extent));
  return (extent - kernel) / stride + 1;
}

kernels::ConvGeometry conv_geometry(const Shape& in, std::size_t kernel, Padding padding,
                                    std::size_t stride) {
  if (in.size() != 4) throw ShapeError("conv2d: expected [n,h,w,c], got " + to_string(in));
  kernels::ConvGeometry g;
  g.batch = in[0];
  g.height = in[1];
  g.width = in[2];
  g.channels = in[3];
  g.kernel = kernel;
  g.stride = stride;
  g.out_height = conv_output_extent(g.height, kernel, padding, stride);
  g.out_width = conv_output_extent(g.width, kernel, padding, stride);
  if (padding == Padding::Same) {
    auto total = [&](std::size_t out, std::size_t extent) {
      const std::size_t needed = (out - 1) * stride + kernel;
      return needed > extent ? needed - extent : 0;
    };
    const std::size_t pad_h = total(g.out_height, g.height);
    const std::size_t pad_w = total(g.out_width, g.width);
    if (kernel > g.height + pad_h || kernel > g.width + pad_w)
      throw ShapeError("kernel larger than padded input");
    // Odd deficits put the extra zero row/column on the bottom/right.
    g.pad_top = pad_h / 2;
    g.pad_left = pad_w / 2;
  }
  return g;
}

Tensor conv2d_forward(const Tensor& x, const Tensor& kernel, const Tensor& bias,
                      const kernels::ConvGeometry& g, Tensor& col) {
  require_rank(kernel, 4, "conv2d kernel");
  const std::size_t filters = kernel.dim(3);
  if (kernel.dim(0) != g.kernel || kernel.dim(1) != g.kernel || kernel.dim(2) != g.channels ||
      bias.size() != filters)
    throw ShapeError("conv2d: kernel " + to_string(kernel.shape()) + " / bias " +
                     to_string(bias.shape()) + " do not fit input with " +
                     std::to_string(g.channels) + " channels");
  col = Tensor({g.rows(), g.patch_size()});
  kernels::im2col(g, x.values(), col.values());
  Tensor out({g.batch, g.out_height, g.out_width, filters});
  kernels::gemm({.m = g.rows(), .n = filters, .k = g.patch_size()}, col.values(),
                kernel.values(), out.values());
  const auto rows = static_cast<long>(g.rows());
#pragma omp parallel for schedule(static)
  for (long r = 0; r < rows; ++r) {
    double* row = out.data() + static_cast<std::size_t>(r) * filters;
    for (std::size_t f = 0; f < filters; ++f) row[f] += bias[f];
  }
  return out;
}

ConvGrads conv2d_backward(const Tensor& col, const Tensor& kernel, const Tensor& dout,
                          const kernels::ConvGeometry& g, bool need_input) {
  const std::size_t filters = kernel.dim(3);
  ConvGrads grads;
  grads.kernel = Tensor(kernel.shape());
  kernels::gemm({.trans_a = true, .m = g.patch_size(), .n = filters, .k = g.rows()},
                col.values(), dout.values(), grads.kernel.values());
  grads.bias = Tensor({filters});
  for (std::size_t r = 0; r < g.rows(); ++r) {
    const double* row = dout.data() + r * filters;
    for (std::size_t f = 0; f < filters; ++f) grads.bias[f] += row[f];
  }
  if (need_input) {
    Tensor dcol({g.rows(), g.patch_size()});
    kernels::gemm({.trans_b = true, .m = g.rows(), .n = g.patch_size(), .k = filters},
                  dout.values(), kernel.values(), dcol.values());
    grads.input = Tensor({g.batch, g.height, g.width, g.channels});
    kernels::col2im(g, dcol.values(), grads.input.values());
  }
  return grads;
}

Tensor conv2d(const Tensor& x, const Tensor& kernel, const Tensor& bias, Padding padding,
              std::size_t stride) {
  const Tensor xb = as_batched(x);
  require_rank(kernel, 4, "conv2d kernel");
  const auto g = conv_geometry(xb.shape(), kernel.dim(0), padding, stride);
  Tensor col;
  Tensor out = conv2d_forward(xb, kernel, bias, g, col);
  if (x.rank() == 3) out.reshape({out.dim(1), out.dim(2), out.dim(3)});
  return out;
}

ConvGrads conv2d_grad(const Tensor& x, const Tensor& kernel, const Tensor& dout,
                      Padding padding, std::size_t stride) {
  const Tensor xb = as_batched(x);
  const auto g = conv_geometry(xb.shape(), kernel.dim(0), padding, stride);
  Tensor col({g.rows(), g.patch_size()});
  kernels::im2col(g, xb.values(), col.values());
  ConvGrads grads = conv2d_backward(col, kernel, dout, g, true);
  grads.input.reshape(x.shape());
  return grads;
}

PoolResult maxpool2d(const Tensor& x, std::size_t window, std::size_t stride) {
  const Tensor xb = as_batched(x);
  if (window == 0 || stride == 0) throw ShapeError("maxpool2d: window and stride must be positive");
  if (window > xb.dim(1) || window > xb.dim(2))
    throw ShapeError("maxpool2d: window " + std::to_string(window) + " exceeds input " +
                     to_string(x.shape()));
  kernels::PoolGeometry g{xb.dim(0), xb.dim(1), xb.dim(2), xb.dim(3), window, stride,
                          (xb.dim(1) - window) / stride + 1, (xb.dim(2) - window) / stride + 1};
  PoolResult r;
  r.output = Tensor({g.batch, g.out_height, g.out_width, g.channels});
  r.argmax.resize(r.output.size());
  kernels::maxpool_forward(g, xb.values(), r.output.values(), r.argmax);
  if (x.rank() == 3) r.output.reshape({g.out_height, g.out_width, g.channels});
  return r;
}

Tensor maxpool2d_backward(const Shape& input_shape, const PoolResult& forward,
                          const Tensor& dout, std::size_t window, std::size_t stride) {
  Tensor dx(input_shape);
  const Shape in = input_shape.size() == 3
                       ? Shape{1, input_shape[0], input_shape[1], input_shape[2]}
                       : input_shape;
  kernels::PoolGeometry g{in[0], in[1], in[2], in[3], window, stride,
                          (in[1] - window) / stride + 1, (in[2] - window) / stride + 1};
  kernels::maxpool_backward(g, dout.values(), forward.argmax, dx.values());
  return dx;
}

PoolResult global_max_pool(const Tensor& x) {
  const Tensor xb = as_batched(x);
  const std::size_t n = xb.dim(0), spatial = xb.dim(1) * xb.dim(2), c = xb.dim(3);
  if (spatial == 0) throw ShapeError("global_max_pool: empty spatial extent");
  PoolResult r;
  r.output = Tensor({n, c});
  r.argmax.resize(n * c);
  for (std::size_t s = 0; s < n; ++s)
    for (std::size_t ch = 0; ch < c; ++ch) {
      std::size_t best = s * spatial * c + ch;
      for (std::size_t p = 1; p < spatial; ++p) {
        const std::size_t idx = (s * spatial + p) * c + ch;
        if (xb[idx] > xb[best]) best = idx;
      }
      r.output[s * c + ch] = xb[best];
      r.argmax[s * c + ch] = best;
    }
  if (x.rank() == 3) r.output.reshape({c});
  return r;
}

Tensor global_max_pool_backward(const Shape& input_shape, const PoolResult& forward,
                                const Tensor& dout) {
  Tensor dx(input_shape);
  for (std::size_t o = 0; o < forward.argmax.size(); ++o) dx[forward.argmax[o]] += dout[o];
  return dx;
}

Tensor global_avg_pool(const Tensor& x) {
  const Tensor xb = as_batched(x);
  const std::size_t n = xb.dim(0), spatial = xb.dim(1) * xb.dim(2), c = xb.dim(3);
  if (spatial == 0) throw ShapeError("global_avg_pool: empty spatial extent");
  Tensor out({n, c});
  for (std::size_t s = 0; s < n; ++s) {
    for (std::size_t p = 0; p < spatial; ++p)
      for (std::size_t ch = 0; ch < c; ++ch) out[s * c + ch] += xb[(s * spatial + p) * c + ch];
    for (std::size_t ch = 0; ch < c; ++ch) out[s * c + ch] /= static_cast<double>(spatial);
  }
  if (x.rank() == 3) out.reshape({c});
  return out;
}

Tensor global_avg_pool_backward(const Shape& input_shape, const Tensor& dout) {
  const Shape in = input_shape.size() == 3
                       ? Shape{1, input_shape[0], input_shape[1], input_shape[2]}
                       : input_shape;
  const std::size_t spatial = in[1] * in[2], c = in[3];
  const double scale = 1.0 / static_cast<double>(spatial);
  Tensor dx(input_shape);
  for (std::size_t s = 0; s < in[0]; ++s)
    for (std::size_t p = 0; p < spatial; ++p)
      for (std::size_t ch = 0; ch < c; ++ch) dx[(s * spatial + p) * c + ch] = dout[s * c + ch] * scale;
  return dx;
}

Tensor dense(const Tensor& x, const Tensor& weights, const Tensor& bias) {
  const Tensor xb = x.rank() == 1 ? x.reshaped({1, x.dim(0)}) : x;
  require_rank(xb, 2, "dense input");
  require_rank(weights, 2, "dense weights");
  if (xb.dim(1) != weights.dim(0) || bias.size() != weights.dim(1))
    throw ShapeError("dense: input " + to_string(x.shape()) + " does not fit weights " +
                     to_string(weights.shape()) + " and bias " + to_string(bias.shape()));
  const std::size_t n = xb.dim(0), out_dim = weights.dim(1);
  Tensor out({n, out_dim});
  kernels::gemm({.m = n, .n = out_dim, .k = weights.dim(0)}, xb.values(), weights.values(),
                out.values());
  for (std::size_t s = 0; s < n; ++s)
    for (std::size_t j = 0; j < out_dim; ++j) out[s * out_dim + j] += bias[j];
  if (x.rank() == 1) out.reshape({out_dim});
  return out;
}

DenseGrads dense_backward(const Tensor& x, const Tensor& weights, const Tensor& dout,
                          bool need_input) {
  const std::size_t in_dim = weights.dim(0), out_dim = weights.dim(1);
  const std::size_t n = x.size() / in_dim;
  DenseGrads g;
  g.weights = Tensor(weights.shape());
  kernels::gemm({.trans_a = true, .m = in_dim, .n = out_dim, .k = n}, x.values(),
                dout.values(), g.weights.values());
  g.bias = Tensor({out_dim});
  for (std::size_t s = 0; s < n; ++s)
    for (std::size_t j = 0; j < out_dim; ++j) g.bias[j] += dout[s * out_dim + j];
  if (need_input) {
    g.input = Tensor(x.shape());
    kernels::gemm({.trans_b = true, .m = n, .n = in_dim, .k = out_dim}, dout.values(),
                  weights.values(), g.input.values());
  }
  return g;
}

Tensor dropout(const Tensor& x, double rate, Mode mode, Rng& rng, Tensor* mask) {
  if (rate < 0.0 || rate >= 1.0) throw std::invalid_argument("dropout rate must lie in [0,1)");
  if (mode == Mode::Infer || rate == 0.0) {
    if (mask) *mask = Tensor(x.shape(), 1.0);
    return x;
  }
  Tensor m(x.shape());
  const double keep_scale = 1.0 / (1.0 - rate);
  std::bernoulli_distribution drop(rate);
  for (std::size_t i = 0; i < m.size(); ++i) m[i] = drop(rng) ? 0.0 : keep_scale;
  Tensor out(x.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] * m[i];
  if (mask) *mask = std::move(m);
  return out;
}

Tensor dropout_backward(const Tensor& dout, const Tensor& mask) {
  Tensor dx(dout.shape());
  for (std::size_t i = 0; i < dx.size(); ++i) dx[i] = dout[i] * mask[i];
  return dx;
}

Tensor batchnorm(const Tensor& x, BatchNormParams& bn, Mode mode, BatchNormCache* cache) {
  if (x.rank() == 0) throw ShapeError("batchnorm: scalar input");
  const std::size_t c = x.shape().back();
  if (bn.gamma.size() != c || bn.beta.size() != c || bn.running_mean.size() != c ||
      bn.running_var.size() != c)
    throw ShapeError("batchnorm: parameters do not match " + std::to_string(c) + " channels");
  const std::size_t rows = x.size() / std::max<std::size_t>(c, 1);
  if (x.size() == 0 || rows == 0) throw std::invalid_argument("batchnorm: empty batch");

  std::vector<double> mean(c, 0.0), var(c, 0.0);
  if (mode == Mode::Train) {
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t ch = 0; ch < c; ++ch) mean[ch] += x[r * c + ch];
    for (double& m : mean) m /= static_cast<double>(rows);
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t ch = 0; ch < c; ++ch) {
        const double d = x[r * c + ch] - mean[ch];
        var[ch] += d * d;
      }
    for (double& v : var) v /= static_cast<double>(rows);
    for (std::size_t ch = 0; ch < c; ++ch) {
      bn.running_mean[ch] = bn.momentum * bn.running_mean[ch] + (1.0 - bn.momentum) * mean[ch];
      bn.running_var[ch] = bn.momentum * bn.running_var[ch] + (1.0 - bn.momentum) * var[ch];
    }
  } else {
    for (std::size_t ch = 0; ch < c; ++ch) {
      mean[ch] = bn.running_mean[ch];
      var[ch] = bn.running_var[ch];
    }
  }

  std::vector<double> inv_std(c);
  for (std::size_t ch = 0; ch < c; ++ch) inv_std[ch] = 1.0 / std::sqrt(var[ch] + bn.epsilon);
  Tensor normalized(x.shape());
  Tensor out(x.shape());
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t ch = 0; ch < c; ++ch) {
      const std::size_t i = r * c + ch;
      normalized[i] = (x[i] - mean[ch]) * inv_std[ch];
      out[i] = bn.gamma[ch] * normalized[i] + bn.beta[ch];
    }
  if (cache) {
    cache->normalized = std::move(normalized);
    cache->inv_std = std::move(inv_std);
  }
  return out;
}

BatchNormGrads batchnorm_backward(const Tensor& dout, const Tensor& gamma,
                                  const BatchNormCache& cache) {
  const std::size_t c = gamma.size();
  const std::size_t rows = dout.size() / c;
  BatchNormGrads g;
  g.gamma = Tensor({c});
  g.beta = Tensor({c});
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t ch = 0; ch < c; ++ch) {
      const std::size_t i = r * c + ch;
      g.beta[ch] += dout[i];
      g.gamma[ch] += dout[i] * cache.normalized[i];
    }
  g.input = Tensor(dout.shape());
  const double m = static_cast<double>(rows);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t ch = 0; ch < c; ++ch) {
      const std::size_t i = r * c + ch;
      g.input[i] = gamma[ch] * cache.inv_std[ch] / m *
                   (m * dout[i] - g.beta[ch] - cache.normalized[i] * g.gamma[ch]);
    }
  return g;
}

double activate(double x, const ActivationFn& fn) {
  switch (fn.kind) {
    case ActivationKind::ReLU:
      return x > 0.0 ? x : 0.0;
    case ActivationKind::LeakyReLU:
      return x > 0.0 ? x : fn.alpha * x;
    case ActivationKind::ELU:
      return x > 0.0 ? x : fn.alpha * std::expm1(x);
  }
  return x;
}

Tensor activation(const Tensor& x, const ActivationFn& fn) {
  Tensor out(x.shape());
  const auto n = static_cast<long>(x.size());
#pragma omp parallel for schedule(static) if (n > 65536)
  for (long i = 0; i < n; ++i) out[static_cast<std::size_t>(i)] = activate(x[static_cast<std::size_t>(i)], fn);
  return out;
}

Tensor activation_backward(const Tensor& x, const Tensor& y, const Tensor& dout,
                           const ActivationFn& fn) {
  Tensor dx(x.shape());
  const auto n = static_cast<long>(x.size());
#pragma omp parallel for schedule(static) if (n > 65536)
  for (long ii = 0; ii < n; ++ii) {
    const auto i = static_cast<std::size_t>(ii);
    if (x[i] > 0.0) {
      dx[i] = dout[i];
      continue;
    }
    switch (fn.kind) {
      case ActivationKind::ReLU:
        dx[i] = 0.0;
        break;
      case ActivationKind::LeakyReLU:
        dx[i] = fn.alpha * dout[i];
        break;
      case ActivationKind::ELU:
        dx[i] = (y[i] + fn.alpha) * dout[i];
        break;
    }
  }
  return dx;
}

Tensor softmax(const Tensor& logits) {
  if (logits.rank() == 0 || logits.rank() > 2) throw ShapeError("softmax: expected [k] or [n,k]");
  const std::size_t k = logits.shape().back();
  const std::size_t rows = logits.size() / k;
  Tensor out(logits.shape());
  for (std::size_t r = 0; r < rows; ++r) {
    const double* z = logits.data() + r * k;
    double* p = out.data() + r * k;
    const double top = *std::max_element(z, z + k);
    double sum = 0.0;
    for (std::size_t j = 0; j < k; ++j) sum += (p[j] = std::exp(z[j] - top));
    for (std::size_t j = 0; j < k; ++j) p[j] /= sum;
  }
  return out;
}

double glorot_limit(std::size_t fan_in, std::size_t fan_out) {
  if (fan_in == 0 || fan_out == 0) throw std::invalid_argument("glorot: fans must be >= 1");
  return std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
}

void glorot_uniform_init(Tensor& t, std::size_t fan_in, std::size_t fan_out, Rng& rng) {
  const double limit = glorot_limit(fan_in, fan_out);
  std::uniform_real_distribution<double> dist(-limit, limit);
  for (double& v : t.values()) v = dist(rng);
}

}  // namespace spn
