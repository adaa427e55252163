#include "spn/kernels.hpp"

#include <algorithm>
#include <cassert>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace spn::kernels {

namespace {

// Register block of the micro-kernel and cache blocks of the packed panels.
constexpr std::size_t kMr = 8;
constexpr std::size_t kNr = 8;
constexpr std::size_t kKc = 256;
constexpr std::size_t kMc = 64;
constexpr std::size_t kNc = 2048;

inline double load_a(const GemmArgs& g, const double* a, std::size_t i, std::size_t p) {
  return g.trans_a ? a[p * g.m + i] : a[i * g.k + p];
}

inline double load_b(const GemmArgs& g, const double* b, std::size_t p, std::size_t j) {
  return g.trans_b ? b[j * g.k + p] : b[p * g.n + j];
}

// Packs rows [i0, i0+mc) x cols [p0, p0+kc) of op(A) into kMr-row panels,
// zero-padding the ragged last panel.
void pack_a(const GemmArgs& g, const double* a, std::size_t i0, std::size_t mc, std::size_t p0,
            std::size_t kc, double* out) {
  for (std::size_t ir = 0; ir < mc; ir += kMr) {
    const std::size_t rows = std::min(kMr, mc - ir);
    double* panel = out + ir * kc;
    if (!g.trans_a) {
      for (std::size_t i = 0; i < kMr; ++i) {
        if (i < rows) {
          const double* src = a + (i0 + ir + i) * g.k + p0;
          for (std::size_t p = 0; p < kc; ++p) panel[p * kMr + i] = src[p];
        } else {
          for (std::size_t p = 0; p < kc; ++p) panel[p * kMr + i] = 0.0;
        }
      }
    } else {
      for (std::size_t p = 0; p < kc; ++p) {
        const double* src = a + (p0 + p) * g.m + i0 + ir;
        std::size_t i = 0;
        for (; i < rows; ++i) panel[p * kMr + i] = src[i];
        for (; i < kMr; ++i) panel[p * kMr + i] = 0.0;
      }
    }
  }
}

void pack_b(const GemmArgs& g, const double* b, std::size_t p0, std::size_t kc, std::size_t j0,
            std::size_t nc, double* out) {
  for (std::size_t jr = 0; jr < nc; jr += kNr) {
    const std::size_t cols = std::min(kNr, nc - jr);
    double* panel = out + jr * kc;
    if (!g.trans_b) {
      for (std::size_t p = 0; p < kc; ++p) {
        const double* src = b + (p0 + p) * g.n + j0 + jr;
        std::size_t j = 0;
        for (; j < cols; ++j) panel[p * kNr + j] = src[j];
        for (; j < kNr; ++j) panel[p * kNr + j] = 0.0;
      }
    } else {
      for (std::size_t j = 0; j < kNr; ++j) {
        if (j < cols) {
          const double* src = b + (j0 + jr + j) * g.k + p0;
          for (std::size_t p = 0; p < kc; ++p) panel[p * kNr + j] = src[p];
        } else {
          for (std::size_t p = 0; p < kc; ++p) panel[p * kNr + j] = 0.0;
        }
      }
    }
  }
}

// acc[kMr][kNr] = sum_p ap[p][:] (outer) bp[p][:]
inline void micro_kernel(std::size_t kc, const double* __restrict ap,
                         const double* __restrict bp, double* __restrict acc) {
  double c[kMr][kNr] = {};
  for (std::size_t p = 0; p < kc; ++p) {
    const double* av = ap + p * kMr;
    const double* bv = bp + p * kNr;
#pragma GCC unroll 8
    for (std::size_t i = 0; i < kMr; ++i) {
#pragma omp simd
      for (std::size_t j = 0; j < kNr; ++j) c[i][j] += av[i] * bv[j];
    }
  }
  for (std::size_t i = 0; i < kMr; ++i)
    for (std::size_t j = 0; j < kNr; ++j) acc[i * kNr + j] = c[i][j];
}

}  // namespace

void gemm(const GemmArgs& g, std::span<const double> a, std::span<const double> b,
          std::span<double> c) {
  assert(a.size() >= g.m * g.k && b.size() >= g.k * g.n && c.size() >= g.m * g.n);
  if (g.m == 0 || g.n == 0) return;
  if (g.k == 0) {
    if (!g.accumulate) std::fill_n(c.data(), g.m * g.n, 0.0);
    return;
  }

  std::vector<double> packed_b(kKc * ((std::min(kNc, g.n) + kNr - 1) / kNr) * kNr);
  for (std::size_t j0 = 0; j0 < g.n; j0 += kNc) {
    const std::size_t nc = std::min(kNc, g.n - j0);
    for (std::size_t p0 = 0; p0 < g.k; p0 += kKc) {
      const std::size_t kc = std::min(kKc, g.k - p0);
      const bool overwrite = p0 == 0 && !g.accumulate;
      pack_b(g, b.data(), p0, kc, j0, nc, packed_b.data());

      const auto blocks = static_cast<long>((g.m + kMc - 1) / kMc);
#pragma omp parallel
      {
        std::vector<double> packed_a(kMc * kc);
        double acc[kMr * kNr];
#pragma omp for schedule(static)
        for (long blk = 0; blk < blocks; ++blk) {
          const std::size_t i0 = static_cast<std::size_t>(blk) * kMc;
          const std::size_t mc = std::min(kMc, g.m - i0);
          pack_a(g, a.data(), i0, mc, p0, kc, packed_a.data());
          for (std::size_t jr = 0; jr < nc; jr += kNr) {
            const std::size_t cols = std::min(kNr, nc - jr);
            for (std::size_t ir = 0; ir < mc; ir += kMr) {
              const std::size_t rows = std::min(kMr, mc - ir);
              micro_kernel(kc, packed_a.data() + ir * kc, packed_b.data() + jr * kc, acc);
              for (std::size_t i = 0; i < rows; ++i) {
                double* dst = c.data() + (i0 + ir + i) * g.n + j0 + jr;
                const double* src = acc + i * kNr;
                if (overwrite) {
                  for (std::size_t j = 0; j < cols; ++j) dst[j] = src[j];
                } else {
                  for (std::size_t j = 0; j < cols; ++j) dst[j] += src[j];
                }
              }
            }
          }
        }
      }
    }
  }
}

void im2col(const ConvGeometry& g, std::span<const double> x, std::span<double> col) {
  const std::size_t patch = g.patch_size();
  const std::size_t row_len = g.kernel * g.channels;
  const auto batch = static_cast<long>(g.batch);
#pragma omp parallel for schedule(static)
  for (long nn = 0; nn < batch; ++nn) {
    const auto n = static_cast<std::size_t>(nn);
    const double* img = x.data() + n * g.height * g.width * g.channels;
    for (std::size_t oy = 0; oy < g.out_height; ++oy) {
      for (std::size_t ox = 0; ox < g.out_width; ++ox) {
        double* dst = col.data() + ((n * g.out_height + oy) * g.out_width + ox) * patch;
        for (std::size_t u = 0; u < g.kernel; ++u) {
          const auto iy = static_cast<long>(oy * g.stride + u) - static_cast<long>(g.pad_top);
          double* row = dst + u * row_len;
          if (iy < 0 || iy >= static_cast<long>(g.height)) {
            std::fill_n(row, row_len, 0.0);
            continue;
          }
          for (std::size_t v = 0; v < g.kernel; ++v) {
            const auto ix =
                static_cast<long>(ox * g.stride + v) - static_cast<long>(g.pad_left);
            double* tap = row + v * g.channels;
            if (ix < 0 || ix >= static_cast<long>(g.width)) {
              std::fill_n(tap, g.channels, 0.0);
            } else {
              const double* src =
                  img + (static_cast<std::size_t>(iy) * g.width + static_cast<std::size_t>(ix)) *
                            g.channels;
              std::copy_n(src, g.channels, tap);
            }
          }
        }
      }
    }
  }
}

void col2im(const ConvGeometry& g, std::span<const double> col, std::span<double> dx) {
  const std::size_t patch = g.patch_size();
  const std::size_t image = g.height * g.width * g.channels;
  const auto batch = static_cast<long>(g.batch);
#pragma omp parallel for schedule(static)
  for (long nn = 0; nn < batch; ++nn) {
    const auto n = static_cast<std::size_t>(nn);
    double* img = dx.data() + n * image;
    std::fill_n(img, image, 0.0);
    for (std::size_t oy = 0; oy < g.out_height; ++oy) {
      for (std::size_t ox = 0; ox < g.out_width; ++ox) {
        const double* src = col.data() + ((n * g.out_height + oy) * g.out_width + ox) * patch;
        for (std::size_t u = 0; u < g.kernel; ++u) {
          const auto iy = static_cast<long>(oy * g.stride + u) - static_cast<long>(g.pad_top);
          if (iy < 0 || iy >= static_cast<long>(g.height)) continue;
          for (std::size_t v = 0; v < g.kernel; ++v) {
            const auto ix =
                static_cast<long>(ox * g.stride + v) - static_cast<long>(g.pad_left);
            if (ix < 0 || ix >= static_cast<long>(g.width)) continue;
            double* dst =
                img + (static_cast<std::size_t>(iy) * g.width + static_cast<std::size_t>(ix)) *
                          g.channels;
            const double* tap = src + (u * g.kernel + v) * g.channels;
            for (std::size_t ch = 0; ch < g.channels; ++ch) dst[ch] += tap[ch];
          }
        }
      }
    }
  }
}

void maxpool_forward(const PoolGeometry& g, std::span<const double> x, std::span<double> y,
                     std::span<std::size_t> argmax) {
  const auto planes = static_cast<long>(g.batch * g.out_height);
#pragma omp parallel for schedule(static)
  for (long plane = 0; plane < planes; ++plane) {
    const std::size_t n = static_cast<std::size_t>(plane) / g.out_height;
    const std::size_t oy = static_cast<std::size_t>(plane) % g.out_height;
    for (std::size_t ox = 0; ox < g.out_width; ++ox) {
      for (std::size_t ch = 0; ch < g.channels; ++ch) {
        std::size_t best = ((n * g.height + oy * g.stride) * g.width + ox * g.stride) *
                               g.channels + ch;
        for (std::size_t u = 0; u < g.window; ++u) {
          for (std::size_t v = 0; v < g.window; ++v) {
            const std::size_t idx =
                ((n * g.height + oy * g.stride + u) * g.width + ox * g.stride + v) * g.channels +
                ch;
            if (x[idx] > x[best]) best = idx;
          }
        }
        const std::size_t out = ((n * g.out_height + oy) * g.out_width + ox) * g.channels + ch;
        y[out] = x[best];
        argmax[out] = best;
      }
    }
  }
}

void maxpool_backward(const PoolGeometry& g, std::span<const double> dy,
                      std::span<const std::size_t> argmax, std::span<double> dx) {
  // Overlapping windows may share a winner, so each sample is scattered by
  // one thread to keep the accumulation order fixed.
  const std::size_t in_image = g.height * g.width * g.channels;
  const std::size_t out_image = g.out_height * g.out_width * g.channels;
  const auto batch = static_cast<long>(g.batch);
#pragma omp parallel for schedule(static)
  for (long nn = 0; nn < batch; ++nn) {
    const auto n = static_cast<std::size_t>(nn);
    std::fill_n(dx.data() + n * in_image, in_image, 0.0);
    for (std::size_t o = n * out_image; o < (n + 1) * out_image; ++o) dx[argmax[o]] += dy[o];
  }
}

int max_threads() {
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

void set_num_threads(int threads) {
#ifdef _OPENMP
  omp_set_num_threads(std::max(1, threads));
#else
  (void)threads;
#endif
}

namespace reference {

void gemm(const GemmArgs& g, std::span<const double> a, std::span<const double> b,
          std::span<double> c) {
  for (std::size_t i = 0; i < g.m; ++i) {
    for (std::size_t j = 0; j < g.n; ++j) {
      double sum = 0.0;
      for (std::size_t p = 0; p < g.k; ++p) sum += load_a(g, a.data(), i, p) * load_b(g, b.data(), p, j);
      c[i * g.n + j] = g.accumulate ? c[i * g.n + j] + sum : sum;
    }
  }
}

void im2col(const ConvGeometry& g, std::span<const double> x, std::span<double> col) {
  const std::size_t patch = g.patch_size();
  for (std::size_t n = 0; n < g.batch; ++n)
    for (std::size_t oy = 0; oy < g.out_height; ++oy)
      for (std::size_t ox = 0; ox < g.out_width; ++ox)
        for (std::size_t u = 0; u < g.kernel; ++u)
          for (std::size_t v = 0; v < g.kernel; ++v)
            for (std::size_t ch = 0; ch < g.channels; ++ch) {
              const long iy = static_cast<long>(oy * g.stride + u) - static_cast<long>(g.pad_top);
              const long ix = static_cast<long>(ox * g.stride + v) - static_cast<long>(g.pad_left);
              const bool inside = iy >= 0 && ix >= 0 && iy < static_cast<long>(g.height) &&
                                  ix < static_cast<long>(g.width);
              const std::size_t row = (n * g.out_height + oy) * g.out_width + ox;
              col[row * patch + (u * g.kernel + v) * g.channels + ch] =
                  inside ? x[((n * g.height + static_cast<std::size_t>(iy)) * g.width +
                              static_cast<std::size_t>(ix)) *
                                 g.channels +
                             ch]
                         : 0.0;
            }
}

void col2im(const ConvGeometry& g, std::span<const double> col, std::span<double> dx) {
  const std::size_t patch = g.patch_size();
  std::fill(dx.begin(), dx.begin() + static_cast<long>(g.batch * g.height * g.width * g.channels), 0.0);
  for (std::size_t n = 0; n < g.batch; ++n)
    for (std::size_t oy = 0; oy < g.out_height; ++oy)
      for (std::size_t ox = 0; ox < g.out_width; ++ox)
        for (std::size_t u = 0; u < g.kernel; ++u)
          for (std::size_t v = 0; v < g.kernel; ++v)
            for (std::size_t ch = 0; ch < g.channels; ++ch) {
              const long iy = static_cast<long>(oy * g.stride + u) - static_cast<long>(g.pad_top);
              const long ix = static_cast<long>(ox * g.stride + v) - static_cast<long>(g.pad_left);
              if (iy < 0 || ix < 0 || iy >= static_cast<long>(g.height) ||
                  ix >= static_cast<long>(g.width))
                continue;
              const std::size_t row = (n * g.out_height + oy) * g.out_width + ox;
              dx[((n * g.height + static_cast<std::size_t>(iy)) * g.width +
                  static_cast<std::size_t>(ix)) *
                     g.channels +
                 ch] += col[row * patch + (u * g.kernel + v) * g.channels + ch];
            }
}

void maxpool_forward(const PoolGeometry& g, std::span<const double> x, std::span<double> y,
                     std::span<std::size_t> argmax) {
  for (std::size_t n = 0; n < g.batch; ++n)
    for (std::size_t oy = 0; oy < g.out_height; ++oy)
      for (std::size_t ox = 0; ox < g.out_width; ++ox)
        for (std::size_t ch = 0; ch < g.channels; ++ch) {
          std::size_t best = 0;
          bool first = true;
          for (std::size_t u = 0; u < g.window; ++u)
            for (std::size_t v = 0; v < g.window; ++v) {
              const std::size_t idx =
                  ((n * g.height + oy * g.stride + u) * g.width + ox * g.stride + v) *
                      g.channels +
                  ch;
              if (first || x[idx] > x[best]) best = idx;
              first = false;
            }
          const std::size_t out = ((n * g.out_height + oy) * g.out_width + ox) * g.channels + ch;
          y[out] = x[best];
          argmax[out] = best;
        }
}

void maxpool_backward(const PoolGeometry& g, std::span<const double> dy,
                      std::span<const std::size_t> argmax, std::span<double> dx) {
  std::fill(dx.begin(), dx.begin() + static_cast<long>(g.batch * g.height * g.width * g.channels), 0.0);
  const std::size_t outputs = g.batch * g.out_height * g.out_width * g.channels;
  for (std::size_t o = 0; o < outputs; ++o) dx[argmax[o]] += dy[o];
}

}  // namespace reference

}  // namespace spn::kernels
