#include <algorithm>

#include "doctest.h"
#include "spn/kernels.hpp"
#include "spn/layers.hpp"
#include "support.hpp"

using namespace spn;
namespace k = spn::kernels;

namespace {

std::vector<double> random_values(std::size_t n, Rng& rng) {
  Tensor t = test::random_tensor({n}, rng);
  return {t.values().begin(), t.values().end()};
}

struct ThreadGuard {
  int saved = k::max_threads();
  ~ThreadGuard() { k::set_num_threads(saved); }
};

}  // namespace

TEST_SUITE("kernels") {
  TEST_CASE("gemm matches the serial reference for every transpose and size") {
    Rng rng(11);
    // Sizes straddle the packing block edges.
    const std::tuple<std::size_t, std::size_t, std::size_t> sizes[] = {
        {1, 1, 1}, {7, 9, 5}, {8, 8, 8}, {65, 17, 257}, {130, 2051, 3}, {3, 5, 600}};
    for (auto [m, n, kk] : sizes)
      for (bool ta : {false, true})
        for (bool tb : {false, true})
          for (bool acc : {false, true}) {
            const k::GemmArgs args{ta, tb, m, n, kk, acc};
            const auto a = random_values(m * kk, rng);
            const auto b = random_values(kk * n, rng);
            auto c1 = random_values(m * n, rng);
            auto c2 = c1;
            k::gemm(args, a, b, c1);
            k::reference::gemm(args, a, b, c2);
            double worst = 0.0;
            for (std::size_t i = 0; i < c1.size(); ++i)
              worst = std::max(worst, std::abs(c1[i] - c2[i]) / std::max(1.0, std::abs(c2[i])));
            INFO("m=" << m << " n=" << n << " k=" << kk << " ta=" << ta << " tb=" << tb << " acc=" << acc);
            CHECK(worst < 1e-12);
          }
  }

  TEST_CASE("reference gemm agrees with the textbook definition") {
    Rng rng(12);
    const std::size_t m = 4, n = 3, kk = 5;
    const auto a = random_values(kk * m, rng);  // stored transposed
    const auto b = random_values(kk * n, rng);
    std::vector<double> c(m * n);
    k::reference::gemm({true, false, m, n, kk, false}, a, b, c);
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) {
        double s = 0.0;
        for (std::size_t t = 0; t < kk; ++t) s += a[t * m + i] * b[t * n + j];
        CHECK(c[i * n + j] == doctest::Approx(s).epsilon(1e-14));
      }
  }

  TEST_CASE("parallel results do not depend on the thread count") {
    ThreadGuard guard;
    Rng rng(13);
    const std::size_t m = 300, n = 70, kk = 400;
    const auto a = random_values(m * kk, rng);
    const auto b = random_values(kk * n, rng);
    std::vector<double> one(m * n), many(m * n);
    k::set_num_threads(1);
    k::gemm({false, false, m, n, kk, false}, a, b, one);
    k::set_num_threads(4);
    k::gemm({false, false, m, n, kk, false}, a, b, many);
    CHECK(one == many);
  }

  TEST_CASE("im2col and col2im match the reference and are adjoint") {
    Rng rng(14);
    for (std::size_t kernel : {1, 3, 5})
      for (Padding pad : {Padding::Same, Padding::Valid})
        for (std::size_t stride : {1, 2}) {
          const Shape xs{2, 7, 6, 3};
          const k::ConvGeometry g = conv_geometry(xs, kernel, pad, stride);
          const auto x = random_values(shape_size(xs), rng);
          std::vector<double> col1(g.rows() * g.patch_size()), col2(col1.size());
          k::im2col(g, x, col1);
          k::reference::im2col(g, x, col2);
          CHECK(col1 == col2);

          const auto c = random_values(col1.size(), rng);
          std::vector<double> dx1(x.size()), dx2(x.size());
          k::col2im(g, c, dx1);
          k::reference::col2im(g, c, dx2);
          CHECK(dx1 == dx2);

          // <im2col(x), c> == <x, col2im(c)>
          double lhs = 0.0, rhs = 0.0;
          for (std::size_t i = 0; i < c.size(); ++i) lhs += col1[i] * c[i];
          for (std::size_t i = 0; i < x.size(); ++i) rhs += x[i] * dx1[i];
          CHECK(lhs == doctest::Approx(rhs).epsilon(1e-12));
        }
  }

  TEST_CASE("max pooling matches the reference") {
    Rng rng(15);
    for (auto [win, stride] : {std::pair<std::size_t, std::size_t>{2, 2}, {3, 3}, {3, 2}, {5, 5}}) {
      k::PoolGeometry g{3, 12, 11, 4, win, stride, (12 - win) / stride + 1, (11 - win) / stride + 1};
      const auto x = random_values(3 * 12 * 11 * 4, rng);
      const std::size_t out = g.batch * g.out_height * g.out_width * g.channels;
      std::vector<double> y1(out), y2(out);
      std::vector<std::size_t> a1(out), a2(out);
      k::maxpool_forward(g, x, y1, a1);
      k::reference::maxpool_forward(g, x, y2, a2);
      CHECK(y1 == y2);
      CHECK(a1 == a2);
      const auto dy = random_values(out, rng);
      std::vector<double> dx1(x.size()), dx2(x.size());
      k::maxpool_backward(g, dy, a1, dx1);
      k::reference::maxpool_backward(g, dy, a2, dx2);
      CHECK(dx1 == dx2);
    }
  }
}
