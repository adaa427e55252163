#pragma once

// Compute kernels behind the layers. Every kernel has an OpenMP version in
// spn::kernels and a plain serial version in spn::kernels::reference used by
// tests and the benchmark. Parallel kernels split work over output elements
// only, so every output is reduced in the same order regardless of thread
// count and results are bitwise reproducible.

#include <cstddef>
#include <span>

namespace spn::kernels {

/// C[m,n] = op(A) * op(B), or C += ... when accumulate is set.
/// A is stored row-major as [m,k] ([k,m] when trans_a); B as [k,n] ([n,k]
/// when trans_b).
struct GemmArgs {
  bool trans_a = false;
  bool trans_b = false;
  std::size_t m = 0;
  std::size_t n = 0;
  std::size_t k = 0;
  bool accumulate = false;
};

void gemm(const GemmArgs& args, std::span<const double> a, std::span<const double> b,
          std::span<double> c);

/// Batched channel-last convolution geometry. Padding is expressed as the
/// top/left offsets; bottom/right follow from the output size.
struct ConvGeometry {
  std::size_t batch = 1;
  std::size_t height = 0;
  std::size_t width = 0;
  std::size_t channels = 0;
  std::size_t kernel = 1;
  std::size_t stride = 1;
  std::size_t pad_top = 0;
  std::size_t pad_left = 0;
  std::size_t out_height = 0;
  std::size_t out_width = 0;

  std::size_t patch_size() const { return kernel * kernel * channels; }
  std::size_t rows() const { return batch * out_height * out_width; }
};

/// Unfolds x [n,h,w,c] into col [n*oh*ow, k*k*c]; out-of-image taps read 0.
void im2col(const ConvGeometry& g, std::span<const double> x, std::span<double> col);
/// Adjoint of im2col: scatters col back into dx (overwritten).
void col2im(const ConvGeometry& g, std::span<const double> col, std::span<double> dx);

struct PoolGeometry {
  std::size_t batch = 1;
  std::size_t height = 0;
  std::size_t width = 0;
  std::size_t channels = 0;
  std::size_t window = 2;
  std::size_t stride = 2;
  std::size_t out_height = 0;
  std::size_t out_width = 0;
};

/// Per-window maximum. argmax receives the flat input index of the winner,
/// the first maximum in row-major window scan order.
void maxpool_forward(const PoolGeometry& g, std::span<const double> x, std::span<double> y,
                     std::span<std::size_t> argmax);
/// Routes dy to the recorded argmax positions; dx is overwritten.
void maxpool_backward(const PoolGeometry& g, std::span<const double> dy,
                      std::span<const std::size_t> argmax, std::span<double> dx);

int max_threads();
void set_num_threads(int threads);

namespace reference {

void gemm(const GemmArgs& args, std::span<const double> a, std::span<const double> b,
          std::span<double> c);
void im2col(const ConvGeometry& g, std::span<const double> x, std::span<double> col);
void col2im(const ConvGeometry& g, std::span<const double> col, std::span<double> dx);
void maxpool_forward(const PoolGeometry& g, std::span<const double> x, std::span<double> y,
                     std::span<std::size_t> argmax);
void maxpool_backward(const PoolGeometry& g, std::span<const double> dy,
                      std::span<const std::size_t> argmax, std::span<double> dx);

}  // namespace reference

}  // namespace spn::kernels
