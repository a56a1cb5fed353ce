#include "arhq/smoothing.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "arhq/error.hpp"

namespace arhq {

void SmoothingScales::validate() const {
  if (s.size() == 0) throw DimensionError("smoothing scales are empty");
  for (Index j = 0; j < s.size(); ++j) {
    if (!(s(j) > 0.0) || !std::isfinite(s(j))) {
      throw DataError("smoothing scale " + std::to_string(j) + " is not positive and finite");
    }
  }
}

SmoothingScales compute_scales(const Matrix& x_calib, const Matrix& w, double alpha) {
  if (x_calib.cols() != w.cols()) {
    throw DimensionError("compute_scales: activations have " + std::to_string(x_calib.cols()) +
                         " channels, weight has " + std::to_string(w.cols()));
  }
  if (!(alpha >= 0.0 && alpha <= 1.0)) {
    throw ParameterError("compute_scales: alpha must lie in [0, 1]");
  }
  require_finite(x_calib, "compute_scales: activations");
  require_finite(w, "compute_scales: weight");

  const Vector x_max = x_calib.cwiseAbs().colwise().maxCoeff().transpose();
  const Vector w_max = w.cwiseAbs().colwise().maxCoeff().transpose();

  SmoothingScales out;
  out.alpha = alpha;
  out.s.resize(w.cols());
  for (Index j = 0; j < w.cols(); ++j) {
    if (x_max(j) == 0.0 || w_max(j) == 0.0) {
      out.s(j) = 1.0;
      continue;
    }
    const double v = std::pow(x_max(j), alpha) / std::pow(w_max(j), 1.0 - alpha);
    out.s(j) = std::clamp(v, kMinSmoothingScale, kMaxSmoothingScale);
  }
  return out;
}

SmoothingScales explicit_scales(Vector s) {
  SmoothingScales out{std::move(s), std::numeric_limits<double>::quiet_NaN()};
  out.validate();
  return out;
}

Matrix smooth_activations(const Matrix& x, const SmoothingScales& scales) {
  scales.validate();
  if (x.cols() != scales.s.size()) {
    throw DimensionError("smooth_activations: activations have " + std::to_string(x.cols()) +
                         " channels, scales have " + std::to_string(scales.s.size()));
  }
  Matrix out = x;
  out.array().rowwise() /= scales.s.transpose().array();
  return out;
}

Matrix smooth_weights(const Matrix& w, const SmoothingScales& scales) {
  scales.validate();
  if (w.cols() != scales.s.size()) {
    throw DimensionError("smooth_weights: weight has " + std::to_string(w.cols()) +
                         " channels, scales have " + std::to_string(scales.s.size()));
  }
  Matrix out = w;
  out.array().rowwise() *= scales.s.transpose().array();
  return out;
}

SmoothedPair apply_smoothing(const Matrix& x, const Matrix& w, const SmoothingScales& scales) {
  return {smooth_activations(x, scales), smooth_weights(w, scales)};
}

SmoothingScales inverse(const SmoothingScales& scales) {
  scales.validate();
  return {scales.s.cwiseInverse(), scales.alpha};
}

}  // namespace arhq
