#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "arhq/decompose.hpp"
#include "arhq/matrix.hpp"
#include "arhq/quantizers.hpp"
#include "arhq/residual.hpp"
#include "arhq/smoothing.hpp"

namespace arhq {

enum class Variant { raw, smooth };

std::string_view to_string(Variant v);
Variant parse_variant(std::string_view s);

struct SmoothingConfig {
  double alpha = 0.5;
  // Path to a one-column tensor of explicit scales; the caller loads it into
  // `scales`, which then takes precedence over alpha.
  std::string scales_path;
  std::optional<Vector> scales;

  bool operator==(const SmoothingConfig& o) const {
    return alpha == o.alpha && scales_path == o.scales_path;
  }
};

struct LayerConfig {
  Index rank = 128;
  FloorRule floor;
  QuantizerSpec act_quantizer = QuantizerSpec::uniform(4, Granularity::per_row);
  QuantizerSpec weight_quantizer = QuantizerSpec::uniform(4, Granularity::per_row);
  std::optional<SmoothingConfig> smoothing = SmoothingConfig{};
  std::vector<SplitMethod> methods = {SplitMethod::arhq, SplitMethod::svd_plain,
                                      SplitMethod::activation_weighted,
                                      SplitMethod::outlier_absorb};
  std::vector<Variant> variants = {Variant::raw, Variant::smooth};
  std::uint64_t seed = 0;
  // Measure SNR on the calibration activations instead of held-out ones.
  bool eval_in_sample = false;

  void validate() const;

  bool operator==(const LayerConfig&) const = default;
};

// Everything one ARHQ layer run produces: the split lives in
// the smoothed space when `scales` is set.
struct LayerArtifacts {
  Matrix weight;  // original, unsmoothed W
  LowRankSplit split;
  ResidualMetric metric;
  std::optional<SmoothingScales> scales;
  Variant variant = Variant::raw;
  LayerConfig provenance;
};

enum class ForwardMode { reference, baseline_quant, dual_branch };

// Scales used by a variant: none for raw, explicit or alpha-derived otherwise.
std::optional<SmoothingScales> resolve_scales(const Matrix& w, const Matrix& x_calib,
                                              const LayerConfig& cfg, Variant variant);

// Smoothing, residual covariance, eigenvalue floor, scaled truncated SVD and
// factorization, with any split method on top of the same prepared layer.
LayerArtifacts run_layer(const Matrix& w, const Matrix& x_calib, const LayerConfig& cfg,
                         SplitMethod method, Variant variant);

// ARHQ split; smoothing runs iff cfg.smoothing is set.
LayerArtifacts run_arhq_layer(const Matrix& w, const Matrix& x_calib, const LayerConfig& cfg);

Matrix simulate_forward(const Matrix& x_eval, const LayerArtifacts& artifacts,
                        const LayerConfig& cfg, ForwardMode mode);

// Relative error ||Y - Y_hat|| / ||Y|| at or below which snr() reports an
// exact match: well under any quantizer's noise, well above double round-off.
inline constexpr double kExactMatchRelTol = 1e-12;

// 10 log10(||Y||^2 / ||Y - Y_hat||^2). Returns +infinity for an exact match
// (up to kExactMatchRelTol) and throws DataError when the reference has zero
// energy.
double snr(const Matrix& y_ref, const Matrix& y_hat);

inline constexpr std::string_view kBaselineMethod = "baseline";

struct MethodResult {
  std::string method;  // split method name or "baseline"
  Variant variant = Variant::raw;
  double snr_db = 0.0;
  double gain_db = 0.0;
  double objective = 0.0;  // ||(W_s - L) G^{1/2}||_F^2 under the variant's residual metric
  Index params_added = 0;
  double overhead_ratio = 0.0;  // params_added / (D_in * D_out)
  double clipping_objective = 0.0;
  double a_absmax = 0.0;
  double b_absmax = 0.0;
  double w_res_absmax = 0.0;
};

struct LayerReport {
  std::string layer;
  std::uint64_t seed = 0;
  Index rank = 0;
  Index d_in = 0;
  Index d_out = 0;
  LayerConfig config;
  std::vector<MethodResult> rows;

  const MethodResult& row(std::string_view method, Variant variant) const;
};

// Gain of `snr_db` over `baseline_db`; two infinite values give 0.
double snr_gain(double snr_db, double baseline_db);

// Runs the no-split baseline and every requested method x variant, rows
// ordered variant-major in config order with the baseline first.
LayerReport compare_methods(const Matrix& w, const Matrix& x_calib, const Matrix& x_eval,
                            const LayerConfig& cfg, std::string layer = "layer");

struct SweepResult {
  std::vector<LayerReport> reports;  // one per rank, in input order
  std::vector<std::pair<Variant, Vector>> spectra;  // singular values of W_s G^{1/2}
};

SweepResult sweep_rank(const Matrix& w, const Matrix& x_calib, const Matrix& x_eval,
                       const LayerConfig& cfg, const std::vector<Index>& ranks,
                       std::string layer = "layer", int workers = 1);

// Runs fn(0..n-1) on up to `workers` threads.
void parallel_for(std::size_t n, int workers, const std::function<void(std::size_t)>& fn);

}  // namespace arhq
