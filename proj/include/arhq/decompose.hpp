#pragma once

#include <string_view>

#include "arhq/matrix.hpp"
#include "arhq/quantizers.hpp"
#include "arhq/residual.hpp"

namespace arhq {

enum class SplitMethod { arhq, svd_plain, activation_weighted, outlier_absorb };

std::string_view to_string(SplitMethod m);
SplitMethod parse_split_method(std::string_view s);

// W = w_res + b a^T with a: D_in x r (down-projection) and b: D_out x r
// (up-projection).
struct LowRankSplit {
  Matrix w_res;
  Matrix a;
  Matrix b;
  Index rank = 0;
  SplitMethod method = SplitMethod::arhq;

  Matrix low_rank() const { return b * a.transpose(); }
  Matrix recombine() const { return w_res + low_rank(); }
  // r * (D_in + D_out): parameters held by the two factors.
  Index params_added() const { return a.size() + b.size(); }
};

// Closed-form minimizer of ||(W - L) G^{1/2}||_F^2 over rank(L) <= r:
// truncated SVD of M = W G^{1/2}, b = U_r Sigma_r, a = G^{-1/2} V_r.
LowRankSplit arhq_split(const Matrix& w, const ResidualMetric& metric, Index r);

// Unweighted Eckart-Young split, b = U_r Sigma_r and a = V_r.
LowRankSplit svd_split(const Matrix& w, Index r);

// Same machinery as arhq_split with the activation covariance H_x as metric.
LowRankSplit activation_weighted_split(const Matrix& w, const ResidualMetric& h_metric, Index r);

struct OutlierAbsorbSplit {
  LowRankSplit split;
  // ||(W - L) - Q_w(W - L)||_F^2 of the main branch left behind.
  double clipping_objective = 0.0;
};

// Outlier-absorption baseline: plain truncated SVD of the (already smoothed)
// weight, reported with the main-branch clipping error.
OutlierAbsorbSplit outlier_absorb_split(const Matrix& w, Index r, const QuantizerSpec& w_spec);

double clipping_objective(const Matrix& w_res, const QuantizerSpec& w_spec);

// ||(W - b a^T) g_sqrt||_F^2.
double weighted_objective(const Matrix& w, const LowRankSplit& split, const Matrix& g_sqrt);

// Singular values of W G^{1/2}; their tail energies are the optimal objectives.
Vector scaled_spectrum(const Matrix& w, const ResidualMetric& metric);

// Storage precision for exported factors. bf16/f16 are simulated by rounding
// to the nearest representable value (ties to even, f16 saturates at 65504).
enum class FactorPrecision { f64, f32, bf16, f16 };

std::string_view to_string(FactorPrecision p);
FactorPrecision parse_factor_precision(std::string_view s);
Matrix round_to_precision(const Matrix& m, FactorPrecision p);

}  // namespace arhq
