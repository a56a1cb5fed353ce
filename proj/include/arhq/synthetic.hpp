#pragma once

#include <cstdint>

#include "arhq/matrix.hpp"
#include "arhq/quantizers.hpp"

namespace arhq::io {

// Desk-scale stand-in for a transformer projection layer.
struct SynthSpec {
  Index d_in = 128;
  Index d_out = 128;
  Index n_calib = 2048;
  Index n_eval = 512;
  double weight_decay = 0.97;  // sigma_i(W) = weight_decay^i
  double anisotropy = 100.0;   // target condition number of the induced G_x
  std::uint64_t seed = 0;

  void validate() const;

  bool operator==(const SynthSpec&) const = default;
};

struct SynthLayer {
  Matrix w;
  Matrix x_calib;
  Matrix x_eval;
  Vector channel_scales;
  double measured_condition = 0.0;
};

// Quantizer the generator calibrates its anisotropy against: 4-bit symmetric,
// one absmax scale per input channel.
QuantizerSpec synthetic_probe_quantizer();

// lambda_max / lambda_min of the residual covariance Q(x) - x induces.
double residual_condition(const Matrix& x, const QuantizerSpec& spec);

// W = U diag(decay^i) V^T with Haar-random U, V. Activations are i.i.d.
// Gaussian rows scaled per channel by a geometric ladder. The ladder's span
// is tuned until the residual covariance left by per-channel absmax
// quantization has a measured condition number near `anisotropy`; a miss by
// more than 2x throws ParameterError. Deterministic in the spec (including seed).
SynthLayer gen_synthetic(const SynthSpec& spec);

}  // namespace arhq::io
