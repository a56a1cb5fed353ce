#include "arhq/quantizers.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "arhq/error.hpp"

namespace arhq {

namespace {

using Group = Eigen::Map<Vector, 0, Eigen::InnerStride<>>;

// Midpoints between consecutive E2M1 magnitudes.
constexpr std::array<double, 7> kFp4Midpoints = {0.25, 0.75, 1.25, 1.75, 2.5, 3.5, 5.0};

// Scale s with fl(fl(top * s) / top) == s. Re-quantizing an already quantized
// group then recovers exactly the same scale, which makes quantize idempotent.
double canonical_scale(double basis, double top) {
  if (basis == 0.0) return 1.0;
  double s = basis / top;
  for (int i = 0; i < 16; ++i) {
    const double next = (top * s) / top;
    if (next == s) break;
    s = next;
  }
  return s;
}

double group_basis(const Group& g, const std::optional<double>& clip) {
  const double absmax = g.size() == 0 ? 0.0 : g.cwiseAbs().maxCoeff();
  return clip ? std::min(absmax, *clip) : absmax;
}

void quantize_uniform_group(Group g, int bits, const std::optional<double>& clip) {
  const double qmax = static_cast<double>((1 << (bits - 1)) - 1);
  const double s = canonical_scale(group_basis(g, clip), qmax);
  for (Index i = 0; i < g.size(); ++i) {
    const double q = std::clamp(std::round(g(i) / s), -qmax, qmax);
    g(i) = q * s + 0.0;  // +0.0 folds -0 into +0
  }
}

double snap_fp4(double magnitude) {
  std::size_t idx = 0;
  while (idx < kFp4Midpoints.size() && magnitude >= kFp4Midpoints[idx]) ++idx;
  return kFp4Grid[idx];
}

void quantize_fp4_group(Group g, const std::optional<double>& clip) {
  const double top = kFp4Grid.back();
  const double s = canonical_scale(group_basis(g, clip), top);
  for (Index i = 0; i < g.size(); ++i) {
    const double v = g(i);
    const double q = snap_fp4(std::abs(v) / s);
    g(i) = std::copysign(q * s, v);
    if (q == 0.0) g(i) = 0.0;
  }
}

template <class Fn>
void for_each_group(Matrix& m, Granularity granularity, Index block_size, Fn&& fn) {
  const Index rows = m.rows();
  const Index cols = m.cols();
  double* data = m.data();
  switch (granularity) {
    case Granularity::per_tensor:
      fn(Group(data, rows * cols, Eigen::InnerStride<>(1)));
      break;
    case Granularity::per_row:
      for (Index i = 0; i < rows; ++i) fn(Group(data + i * cols, cols, Eigen::InnerStride<>(1)));
      break;
    case Granularity::per_column:
      for (Index j = 0; j < cols; ++j) fn(Group(data + j, rows, Eigen::InnerStride<>(cols)));
      break;
    case Granularity::per_block:
      // A trailing partial block behaves like a zero-padded full block.
      for (Index i = 0; i < rows; ++i) {
        for (Index start = 0; start < cols; start += block_size) {
          const Index len = std::min(block_size, cols - start);
          fn(Group(data + i * cols + start, len, Eigen::InnerStride<>(1)));
        }
      }
      break;
  }
}

}  // namespace

QuantizerSpec QuantizerSpec::identity() { return QuantizerSpec{}; }

QuantizerSpec QuantizerSpec::uniform(int bits, Granularity granularity) {
  QuantizerSpec spec;
  spec.family = QuantFamily::uniform_symmetric;
  spec.bits = bits;
  spec.granularity = granularity;
  return spec;
}

QuantizerSpec QuantizerSpec::block_fp4(Index block_size) {
  QuantizerSpec spec;
  spec.family = QuantFamily::block_fp4;
  spec.granularity = Granularity::per_block;
  spec.block_size = block_size;
  return spec;
}

void QuantizerSpec::validate() const {
  if (family == QuantFamily::uniform_symmetric && (bits < 2 || bits > 8)) {
    throw ParameterError("uniform_symmetric quantizer: bits must be in [2, 8], got " +
                         std::to_string(bits));
  }
  if (family == QuantFamily::block_fp4 && granularity != Granularity::per_block) {
    throw ParameterError("block_fp4 quantizer requires per_block granularity");
  }
  if (family != QuantFamily::identity && granularity == Granularity::per_block &&
      block_size < 2) {
    throw ParameterError("block quantizer: block_size must be >= 2, got " +
                         std::to_string(block_size));
  }
  if (clip && !(*clip > 0.0 && std::isfinite(*clip))) {
    throw ParameterError("quantizer clip must be positive and finite");
  }
}

double uniform_step(double absmax, int bits) {
  return 2.0 * absmax / (std::ldexp(1.0, bits) - 2.0);
}

Matrix quantize(const Matrix& x, const QuantizerSpec& spec) {
  spec.validate();
  require_finite(x, "quantize");
  switch (spec.family) {
    case QuantFamily::identity:
      return x;
    case QuantFamily::block_fp4:
      return quantize_block_fp4(x, spec);
    case QuantFamily::uniform_symmetric: {
      Matrix out = x;
      for_each_group(out, spec.granularity, spec.block_size,
                     [&](Group g) { quantize_uniform_group(g, spec.bits, spec.clip); });
      return out;
    }
  }
  return x;
}

Matrix quantize_block_fp4(const Matrix& x, const QuantizerSpec& spec) {
  if (spec.family != QuantFamily::block_fp4) {
    throw ParameterError("quantize_block_fp4: spec family is not block_fp4");
  }
  spec.validate();
  require_finite(x, "quantize_block_fp4");
  Matrix out = x;
  for_each_group(out, Granularity::per_block, spec.block_size,
                 [&](Group g) { quantize_fp4_group(g, spec.clip); });
  return out;
}

std::string_view to_string(QuantFamily f) {
  switch (f) {
    case QuantFamily::identity: return "identity";
    case QuantFamily::uniform_symmetric: return "uniform_symmetric";
    case QuantFamily::block_fp4: return "block_fp4";
  }
  return "?";
}

std::string_view to_string(Granularity g) {
  switch (g) {
    case Granularity::per_tensor: return "per_tensor";
    case Granularity::per_row: return "per_row";
    case Granularity::per_column: return "per_column";
    case Granularity::per_block: return "per_block";
  }
  return "?";
}

std::string_view to_string(ScaleRule) { return "absmax"; }

QuantFamily parse_family(std::string_view s) {
  if (s == "identity") return QuantFamily::identity;
  if (s == "uniform_symmetric") return QuantFamily::uniform_symmetric;
  if (s == "block_fp4") return QuantFamily::block_fp4;
  throw ConfigError("unknown quantizer family '" + std::string(s) + "'");
}

Granularity parse_granularity(std::string_view s) {
  if (s == "per_tensor") return Granularity::per_tensor;
  if (s == "per_row") return Granularity::per_row;
  if (s == "per_column") return Granularity::per_column;
  if (s == "per_block") return Granularity::per_block;
  throw ConfigError("unknown granularity '" + std::string(s) + "'");
}

ScaleRule parse_scale_rule(std::string_view s) {
  if (s == "absmax") return ScaleRule::absmax;
  throw ConfigError("unknown scale rule '" + std::string(s) + "'");
}

}  // namespace arhq
