#include "arhq/decompose.hpp"

#include <bit>
#include <cmath>
#include <cstdint>
#include <string>

#include "arhq/error.hpp"
#include "arhq/linalg.hpp"

namespace arhq {

namespace {

void check_rank(const Matrix& w, Index r, std::string_view who) {
  const Index k = std::min(w.rows(), w.cols());
  if (r < 1 || r > k) {
    throw ParameterError(std::string(who) + ": rank " + std::to_string(r) + " outside [1, " +
                         std::to_string(k) + "]");
  }
}

LowRankSplit metric_split(const Matrix& w, const ResidualMetric& metric, Index r,
                          SplitMethod method, std::string_view who) {
  if (w.cols() != metric.dim()) {
    throw DimensionError(std::string(who) + ": weight has " + std::to_string(w.cols()) +
                         " input columns, metric is " + std::to_string(metric.dim()) + "x" +
                         std::to_string(metric.dim()));
  }
  check_rank(w, r, who);
  require_finite(w, who);

  const Matrix m = w * metric.g_sqrt;
  const linalg::TruncatedSVD svd = linalg::truncated_svd(m, r);

  LowRankSplit split;
  split.b = svd.u * svd.sigma.asDiagonal();
  split.a = metric.g_invsqrt * svd.v;
  split.w_res = w - split.b * split.a.transpose();
  split.rank = r;
  split.method = method;
  return split;
}

double round_f16(double x) {
  constexpr double kMax = 65504.0;
  constexpr double kMinNormal = 0x1p-14;
  const double ax = std::abs(x);
  if (ax >= kMax) return std::copysign(kMax, x);
  double ulp;
  if (ax < kMinNormal) {
    ulp = 0x1p-24;
  } else {
    int e = 0;
    std::frexp(ax, &e);  // ax in [2^(e-1), 2^e)
    ulp = std::ldexp(1.0, e - 1 - 10);
  }
  const double r = std::nearbyint(x / ulp) * ulp;
  return std::abs(r) > kMax ? std::copysign(kMax, x) : r;
}

double round_bf16(double x) {
  const auto bits = std::bit_cast<std::uint32_t>(static_cast<float>(x));
  const std::uint32_t lsb = (bits >> 16) & 1u;
  const std::uint32_t rounded = (bits + 0x7FFFu + lsb) & 0xFFFF0000u;
  return static_cast<double>(std::bit_cast<float>(rounded));
}

}  // namespace

std::string_view to_string(SplitMethod m) {
  switch (m) {
    case SplitMethod::arhq: return "arhq";
    case SplitMethod::svd_plain: return "svd";
    case SplitMethod::activation_weighted: return "activation_weighted";
    case SplitMethod::outlier_absorb: return "outlier_absorb";
  }
  return "?";
}

SplitMethod parse_split_method(std::string_view s) {
  if (s == "arhq") return SplitMethod::arhq;
  if (s == "svd" || s == "svd_plain") return SplitMethod::svd_plain;
  if (s == "activation_weighted") return SplitMethod::activation_weighted;
  if (s == "outlier_absorb") return SplitMethod::outlier_absorb;
  throw ConfigError("unknown split method '" + std::string(s) + "'");
}

LowRankSplit arhq_split(const Matrix& w, const ResidualMetric& metric, Index r) {
  return metric_split(w, metric, r, SplitMethod::arhq, "arhq_split");
}

LowRankSplit activation_weighted_split(const Matrix& w, const ResidualMetric& h_metric, Index r) {
  return metric_split(w, h_metric, r, SplitMethod::activation_weighted,
                      "activation_weighted_split");
}

LowRankSplit svd_split(const Matrix& w, Index r) {
  check_rank(w, r, "svd_split");
  const linalg::TruncatedSVD svd = linalg::truncated_svd(w, r);
  LowRankSplit split;
  split.b = svd.u * svd.sigma.asDiagonal();
  split.a = svd.v;
  split.w_res = w - split.b * split.a.transpose();
  split.rank = r;
  split.method = SplitMethod::svd_plain;
  return split;
}

double clipping_objective(const Matrix& w_res, const QuantizerSpec& w_spec) {
  return (w_res - quantize(w_res, w_spec)).squaredNorm();
}

OutlierAbsorbSplit outlier_absorb_split(const Matrix& w, Index r, const QuantizerSpec& w_spec) {
  OutlierAbsorbSplit out;
  out.split = svd_split(w, r);
  out.split.method = SplitMethod::outlier_absorb;
  out.clipping_objective = clipping_objective(out.split.w_res, w_spec);
  return out;
}

double weighted_objective(const Matrix& w, const LowRankSplit& split, const Matrix& g_sqrt) {
  require_shape(split.b, w.rows(), split.rank, "weighted_objective: b");
  require_shape(split.a, w.cols(), split.rank, "weighted_objective: a");
  require_shape(g_sqrt, w.cols(), w.cols(), "weighted_objective: g_sqrt");
  return ((w - split.low_rank()) * g_sqrt).squaredNorm();
}

Vector scaled_spectrum(const Matrix& w, const ResidualMetric& metric) {
  require_shape(metric.g_sqrt, w.cols(), w.cols(), "scaled_spectrum: metric");
  return linalg::singular_values(w * metric.g_sqrt);
}

std::string_view to_string(FactorPrecision p) {
  switch (p) {
    case FactorPrecision::f64: return "f64";
    case FactorPrecision::f32: return "f32";
    case FactorPrecision::bf16: return "bf16";
    case FactorPrecision::f16: return "f16";
  }
  return "?";
}

FactorPrecision parse_factor_precision(std::string_view s) {
  if (s == "f64") return FactorPrecision::f64;
  if (s == "f32") return FactorPrecision::f32;
  if (s == "bf16") return FactorPrecision::bf16;
  if (s == "f16") return FactorPrecision::f16;
  throw ConfigError("unknown factor precision '" + std::string(s) + "'");
}

Matrix round_to_precision(const Matrix& m, FactorPrecision p) {
  switch (p) {
    case FactorPrecision::f64:
      return m;
    case FactorPrecision::f32:
      return m.unaryExpr([](double v) { return static_cast<double>(static_cast<float>(v)); });
    case FactorPrecision::bf16:
      return m.unaryExpr(&round_bf16);
    case FactorPrecision::f16:
      return m.unaryExpr(&round_f16);
  }
  return m;
}

}  // namespace arhq
