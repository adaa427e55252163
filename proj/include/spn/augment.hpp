#pragma once

#include "spn/errors.hpp"
#include "spn/rng.hpp"
#include "spn/tensor.hpp"

namespace spn {

/// Per-epoch augmentation for centered nodule crops. Brightness changes are
/// never allowed: they produce unrealistic scans.
struct AugmentPolicy {
  int shift_max = 3;
  double rotation_max_deg = 30.0;
  bool hflip = true;
  bool vflip = true;
  bool brightness = false;

  static constexpr int kConformantShift = 3;
  static constexpr double kConformantRotation = 30.0;

  /// Rejects brightness and negative ranges; with paper_conformant also
  /// rejects shifts beyond 3 px and rotations beyond 30 degrees.
  void validate(bool paper_conformant = false) const;

  friend bool operator==(const AugmentPolicy&, const AugmentPolicy&) = default;
};

/// One concrete draw from a policy.
struct Transform {
  int dx = 0;
  int dy = 0;
  double theta_deg = 0.0;
  bool hflip = false;
  bool vflip = false;

  bool is_identity() const { return dx == 0 && dy == 0 && theta_deg == 0.0 && !hflip && !vflip; }
};

/// Integer translation of an [h,w,c] image; dx > 0 moves content right,
/// dy > 0 moves it down. Vacated pixels are zero.
Tensor shift(const Tensor& image, int dx, int dy, int shift_max = AugmentPolicy::kConformantShift);

/// Rotation about the image center by inverse-mapped bilinear sampling.
/// Taps outside the image read 0; the result is clamped to [0,1].
Tensor rotate(const Tensor& image, double theta_deg,
              double rotation_max_deg = AugmentPolicy::kConformantRotation);

Tensor flip_h(const Tensor& image);
Tensor flip_v(const Tensor& image);

Transform sample_transform(const AugmentPolicy& policy, Rng& rng);

/// Applies rotate, then shift, then flips.
Tensor apply_transform(const Tensor& image, const Transform& t);

}  // namespace spn
