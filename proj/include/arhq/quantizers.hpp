#pragma once

#include <array>
#include <optional>
#include <string>
#include <string_view>

#include "arhq/matrix.hpp"

namespace arhq {

enum class QuantFamily { identity, uniform_symmetric, block_fp4 };

// Groups that share one absmax scale. per_column treats every input channel
// (matrix column) as a group and is what "per-channel activation
// quantization" means for an N x D_in activation matrix.
enum class Granularity { per_tensor, per_row, per_column, per_block };

enum class ScaleRule { absmax };

// Declarative fake-quantizer description. Value type; validate() checks the
// family-specific invariants.
struct QuantizerSpec {
  QuantFamily family = QuantFamily::identity;
  int bits = 4;
  Granularity granularity = Granularity::per_row;
  Index block_size = 16;
  ScaleRule scale_rule = ScaleRule::absmax;
  // Absolute saturation bound: the scale is computed from min(absmax, clip)
  // and larger magnitudes snap to the outermost grid point.
  std::optional<double> clip;

  static QuantizerSpec identity();
  static QuantizerSpec uniform(int bits, Granularity granularity = Granularity::per_row);
  static QuantizerSpec block_fp4(Index block_size = 16);

  void validate() const;

  bool operator==(const QuantizerSpec&) const = default;
};

// E2M1 magnitudes shared by every block_fp4 quantizer.
inline constexpr std::array<double, 8> kFp4Grid = {0.0, 0.5, 1.0, 1.5, 2.0, 3.0, 4.0, 6.0};

// Grid spacing of a b-bit symmetric uniform quantizer with 2^b - 1 levels.
double uniform_step(double absmax, int bits);

// Quantize-then-dequantize. Output has the input's shape, the identity family
// returns x unchanged, and every family is exactly idempotent.
Matrix quantize(const Matrix& x, const QuantizerSpec& spec);

// NVFP4-style block quantizer: each length-block_size run of a row is scaled
// by absmax/6 and snapped to the signed E2M1 grid (ties away from zero).
Matrix quantize_block_fp4(const Matrix& x, const QuantizerSpec& spec);

std::string_view to_string(QuantFamily f);
std::string_view to_string(Granularity g);
std::string_view to_string(ScaleRule r);
QuantFamily parse_family(std::string_view s);
Granularity parse_granularity(std::string_view s);
ScaleRule parse_scale_rule(std::string_view s);

}  // namespace arhq
