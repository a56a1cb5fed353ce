#pragma once

#include "arhq/matrix.hpp"

namespace arhq {

// Per-input-channel smoothing S = diag(s). X -> X S^{-1}, W -> W S leaves
// X W^T unchanged while moving quantization difficulty between the two.
struct SmoothingScales {
  Vector s;
  double alpha = 0.5;  // NaN when the scales were supplied explicitly

  void validate() const;
};

inline constexpr double kMinSmoothingScale = 1e-5;
inline constexpr double kMaxSmoothingScale = 1e5;

// s_j = max_i |X_ij|^alpha / max_k |W_kj|^(1 - alpha), clamped to
// [1e-5, 1e5]; channels where either maximum is zero get s_j = 1.
SmoothingScales compute_scales(const Matrix& x_calib, const Matrix& w, double alpha);

// Wraps user-provided scales (e.g. loaded from a tensor file).
SmoothingScales explicit_scales(Vector s);

Matrix smooth_activations(const Matrix& x, const SmoothingScales& scales);
Matrix smooth_weights(const Matrix& w, const SmoothingScales& scales);

struct SmoothedPair {
  Matrix x;
  Matrix w;
};

SmoothedPair apply_smoothing(const Matrix& x, const Matrix& w, const SmoothingScales& scales);

// Scales 1/s, undoing a previous apply_smoothing.
SmoothingScales inverse(const SmoothingScales& scales);

}  // namespace arhq
