#include "spn/augment.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

namespace spn {

namespace {

void require_image(const Tensor& image, const char* op) {
  if (image.rank() != 3)
    throw ShapeError(std::string(op) + ": expected [h,w,c] image, got " + to_string(image.shape()));
}

}  // namespace

void AugmentPolicy::validate(bool paper_conformant) const {
  if (brightness) throw ValidationError("augmentation: brightness adjustment is not permitted");
  if (shift_max < 0) throw ValidationError("augmentation: shift_max must be >= 0");
  if (!(rotation_max_deg >= 0.0)) throw ValidationError("augmentation: rotation_max_deg must be >= 0");
  if (paper_conformant && shift_max > kConformantShift)
    throw ValidationError("augmentation: shift_max " + std::to_string(shift_max) +
                          " exceeds the 3 px bound");
  if (paper_conformant && rotation_max_deg > kConformantRotation)
    throw ValidationError("augmentation: rotation_max_deg exceeds the 30 degree bound");
}

Tensor shift(const Tensor& image, int dx, int dy, int shift_max) {
  require_image(image, "shift");
  if (std::abs(dx) > shift_max || std::abs(dy) > shift_max)
    throw ValidationError("shift offsets (" + std::to_string(dx) + "," + std::to_string(dy) +
                          ") exceed +/-" + std::to_string(shift_max));
  const auto h = static_cast<long>(image.dim(0)), w = static_cast<long>(image.dim(1));
  const std::size_t c = image.dim(2);
  Tensor out(image.shape());
  for (long r = 0; r < h; ++r) {
    const long sr = r - dy;
    if (sr < 0 || sr >= h) continue;
    for (long col = 0; col < w; ++col) {
      const long sc = col - dx;
      if (sc < 0 || sc >= w) continue;
      std::copy_n(image.data() + (sr * w + sc) * static_cast<long>(c), c,
                  out.data() + (r * w + col) * static_cast<long>(c));
    }
  }
  return out;
}

Tensor rotate(const Tensor& image, double theta_deg, double rotation_max_deg) {
  require_image(image, "rotate");
  if (!(std::abs(theta_deg) <= rotation_max_deg))
    throw ValidationError("rotation angle " + std::to_string(theta_deg) + " exceeds +/-" +
                          std::to_string(rotation_max_deg));
  if (theta_deg == 0.0) return image;
  const std::size_t h = image.dim(0), w = image.dim(1), c = image.dim(2);
  const double theta = theta_deg * std::numbers::pi / 180.0;
  const double cs = std::cos(theta), sn = std::sin(theta);
  const double cy = (static_cast<double>(h) - 1.0) / 2.0;
  const double cx = (static_cast<double>(w) - 1.0) / 2.0;
  auto tap = [&](long r, long col, std::size_t ch) {
    if (r < 0 || col < 0 || r >= static_cast<long>(h) || col >= static_cast<long>(w)) return 0.0;
    return image[(static_cast<std::size_t>(r) * w + static_cast<std::size_t>(col)) * c + ch];
  };
  Tensor out(image.shape());
  for (std::size_t r = 0; r < h; ++r) {
    for (std::size_t col = 0; col < w; ++col) {
      // Inverse map: rotate the output coordinate by -theta.
      const double ox = static_cast<double>(col) - cx;
      const double oy = static_cast<double>(r) - cy;
      const double sx = cs * ox + sn * oy + cx;
      const double sy = -sn * ox + cs * oy + cy;
      const double fx = std::floor(sx), fy = std::floor(sy);
      const double ax = sx - fx, ay = sy - fy;
      const auto x0 = static_cast<long>(fx), y0 = static_cast<long>(fy);
      for (std::size_t ch = 0; ch < c; ++ch) {
        const double v = (1 - ay) * ((1 - ax) * tap(y0, x0, ch) + ax * tap(y0, x0 + 1, ch)) +
                         ay * ((1 - ax) * tap(y0 + 1, x0, ch) + ax * tap(y0 + 1, x0 + 1, ch));
        out[(r * w + col) * c + ch] = std::clamp(v, 0.0, 1.0);
      }
    }
  }
  return out;
}

Tensor flip_h(const Tensor& image) {
  require_image(image, "flip_h");
  const std::size_t h = image.dim(0), w = image.dim(1), c = image.dim(2);
  Tensor out(image.shape());
  for (std::size_t r = 0; r < h; ++r)
    for (std::size_t col = 0; col < w; ++col)
      std::copy_n(image.data() + (r * w + col) * c, c, out.data() + (r * w + (w - 1 - col)) * c);
  return out;
}

Tensor flip_v(const Tensor& image) {
  require_image(image, "flip_v");
  const std::size_t h = image.dim(0), w = image.dim(1), c = image.dim(2);
  Tensor out(image.shape());
  for (std::size_t r = 0; r < h; ++r)
    std::copy_n(image.data() + r * w * c, w * c, out.data() + (h - 1 - r) * w * c);
  return out;
}

Transform sample_transform(const AugmentPolicy& policy, Rng& rng) {
  policy.validate();
  Transform t;
  std::uniform_int_distribution<int> offset(-policy.shift_max, policy.shift_max);
  t.dx = offset(rng);
  t.dy = offset(rng);
  if (policy.rotation_max_deg > 0.0) {
    std::uniform_real_distribution<double> angle(-policy.rotation_max_deg, policy.rotation_max_deg);
    t.theta_deg = angle(rng);
  }
  std::bernoulli_distribution coin(0.5);
  t.hflip = policy.hflip && coin(rng);
  t.vflip = policy.vflip && coin(rng);
  return t;
}

Tensor apply_transform(const Tensor& image, const Transform& t) {
  if (t.is_identity()) return image;
  const double bound = std::abs(t.theta_deg);
  const int shift_bound = std::max(std::abs(t.dx), std::abs(t.dy));
  Tensor out = rotate(image, t.theta_deg, bound);
  out = shift(out, t.dx, t.dy, shift_bound);
  if (t.hflip) out = flip_h(out);
  if (t.vflip) out = flip_v(out);
  return out;
}

}  // namespace spn
