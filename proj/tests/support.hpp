#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <filesystem>
#include <functional>
#include <random>
#include <string>

#include <unistd.h>

#include "spn/rng.hpp"
#include "spn/tensor.hpp"

namespace spn::test {

inline Tensor random_tensor(Shape shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
  Tensor t(std::move(shape));
  std::uniform_real_distribution<double> u(lo, hi);
  for (double& v : t.values()) v = u(rng);
  return t;
}

/// Like random_tensor but keeps |v| >= gap, away from activation kinks.
inline Tensor random_away_from_zero(Shape shape, Rng& rng, double gap = 0.05) {
  Tensor t = random_tensor(std::move(shape), rng);
  for (double& v : t.values())
    if (std::abs(v) < gap) v = v < 0 ? v - gap : v + gap;
  return t;
}

inline constexpr double kGradStep = 1e-5;
inline constexpr double kGradTolerance = 1e-4;

/// |a - n| / max(|a|, |n|, floor). The floor keeps entries that are
/// numerically zero from turning roundoff into huge relative errors.
inline double rel_error(double a, double n, double floor = 1e-6) {
  return std::abs(a - n) / std::max({std::abs(a), std::abs(n), floor});
}

/// Worst elementwise relative error between the analytic gradient of
/// loss() w.r.t. x and its central-difference estimate.
inline double grad_check(Tensor& x, const Tensor& analytic, const std::function<double()>& loss,
                         double h = kGradStep) {
  if (analytic.shape() != x.shape()) return INFINITY;
  double worst = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double saved = x[i];
    x[i] = saved + h;
    const double up = loss();
    x[i] = saved - h;
    const double down = loss();
    x[i] = saved;
    worst = std::max(worst, rel_error(analytic[i], (up - down) / (2 * h)));
  }
  return worst;
}

/// sum(y * w): a scalar loss whose gradient w.r.t. y is w.
inline double weighted_sum(const Tensor& y, const Tensor& w) {
  double s = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) s += y[i] * w[i];
  return s;
}

/// A fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static std::atomic<unsigned> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("spn-" + tag + "-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

}  // namespace spn::test
