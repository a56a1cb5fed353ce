#include "arhq/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <string>
#include <thread>

#include "arhq/error.hpp"

namespace arhq {

namespace {

// Shared per-variant state: smoothed tensors and the residual metric.
struct PreparedLayer {
  std::optional<SmoothingScales> scales;
  Matrix x_s;
  Matrix w_s;
  ResidualMetric metric;
};

PreparedLayer prepare(const Matrix& w, const Matrix& x_calib, const LayerConfig& cfg,
                      Variant variant) {
  if (x_calib.rows() < 1) {
    throw EmptyCalibrationError("calibration activations have no rows");
  }
  if (x_calib.cols() != w.cols()) {
    throw DimensionError("calibration activations have " + std::to_string(x_calib.cols()) +
                         " channels, weight has " + std::to_string(w.cols()));
  }
  PreparedLayer p;
  p.scales = resolve_scales(w, x_calib, cfg, variant);
  if (p.scales) {
    p.x_s = smooth_activations(x_calib, *p.scales);
    p.w_s = smooth_weights(w, *p.scales);
  } else {
    p.x_s = x_calib;
    p.w_s = w;
  }
  CovarianceAccumulator acc(p.x_s.cols());
  acc.accumulate(compute_residual(p.x_s, cfg.act_quantizer));
  p.metric = finalize(acc, cfg.floor);
  return p;
}

LowRankSplit split_with(const PreparedLayer& p, const Matrix& w_s, const LayerConfig& cfg,
                        SplitMethod method, Index rank, double* clipping) {
  switch (method) {
    case SplitMethod::arhq:
      return arhq_split(w_s, p.metric, rank);
    case SplitMethod::svd_plain:
      return svd_split(w_s, rank);
    case SplitMethod::activation_weighted:
      return activation_weighted_split(w_s, activation_metric(p.x_s, cfg.floor), rank);
    case SplitMethod::outlier_absorb: {
      OutlierAbsorbSplit o = outlier_absorb_split(w_s, rank, cfg.weight_quantizer);
      if (clipping) *clipping = o.clipping_objective;
      return std::move(o.split);
    }
  }
  throw ParameterError("unknown split method");
}

double absmax(const Matrix& m) { return m.size() == 0 ? 0.0 : m.cwiseAbs().maxCoeff(); }

}  // namespace

std::string_view to_string(Variant v) { return v == Variant::raw ? "raw" : "smooth"; }

Variant parse_variant(std::string_view s) {
  if (s == "raw") return Variant::raw;
  if (s == "smooth") return Variant::smooth;
  throw ConfigError("unknown variant '" + std::string(s) + "'");
}

void LayerConfig::validate() const {
  if (rank < 1) throw ConfigError("rank must be >= 1, got " + std::to_string(rank));
  try {
    floor.validate();
    act_quantizer.validate();
    weight_quantizer.validate();
  } catch (const ParameterError& e) {
    throw ConfigError(e.what());
  }
  if (methods.empty()) throw ConfigError("methods must not be empty");
  if (variants.empty()) throw ConfigError("variants must not be empty");
  if (smoothing) {
    if (!(smoothing->alpha >= 0.0 && smoothing->alpha <= 1.0)) {
      throw ConfigError("smoothing.alpha must lie in [0, 1]");
    }
  } else if (std::find(variants.begin(), variants.end(), Variant::smooth) != variants.end()) {
    throw ConfigError("variant 'smooth' requested but smoothing is disabled");
  }
}

std::optional<SmoothingScales> resolve_scales(const Matrix& w, const Matrix& x_calib,
                                              const LayerConfig& cfg, Variant variant) {
  if (variant == Variant::raw) return std::nullopt;
  if (!cfg.smoothing) throw ConfigError("variant 'smooth' requested but smoothing is disabled");
  if (cfg.smoothing->scales) {
    SmoothingScales s = explicit_scales(*cfg.smoothing->scales);
    if (s.s.size() != w.cols()) {
      throw DimensionError("explicit smoothing scales have " + std::to_string(s.s.size()) +
                           " entries, weight has " + std::to_string(w.cols()) + " channels");
    }
    return s;
  }
  return compute_scales(x_calib, w, cfg.smoothing->alpha);
}

LayerArtifacts run_layer(const Matrix& w, const Matrix& x_calib, const LayerConfig& cfg,
                         SplitMethod method, Variant variant) {
  cfg.validate();
  require_finite(w, "weight");
  require_finite(x_calib, "calibration activations");
  PreparedLayer p = prepare(w, x_calib, cfg, variant);
  LayerArtifacts out;
  out.split = split_with(p, p.w_s, cfg, method, cfg.rank, nullptr);
  out.weight = w;
  out.metric = std::move(p.metric);
  out.scales = std::move(p.scales);
  out.variant = variant;
  out.provenance = cfg;
  return out;
}

LayerArtifacts run_arhq_layer(const Matrix& w, const Matrix& x_calib, const LayerConfig& cfg) {
  return run_layer(w, x_calib, cfg, SplitMethod::arhq,
                   cfg.smoothing ? Variant::smooth : Variant::raw);
}

Matrix simulate_forward(const Matrix& x_eval, const LayerArtifacts& artifacts,
                        const LayerConfig& cfg, ForwardMode mode) {
  const Matrix& w = artifacts.weight;
  if (x_eval.cols() != w.cols()) {
    throw DimensionError("simulate_forward: activations have " + std::to_string(x_eval.cols()) +
                         " channels, layer expects " + std::to_string(w.cols()));
  }
  if (mode == ForwardMode::reference) {
    return x_eval * w.transpose();
  }
  const Matrix x_s = artifacts.scales ? smooth_activations(x_eval, *artifacts.scales) : x_eval;
  const Matrix x_q = quantize(x_s, cfg.act_quantizer);
  if (mode == ForwardMode::baseline_quant) {
    const Matrix w_s = artifacts.scales ? smooth_weights(w, *artifacts.scales) : w;
    return x_q * quantize(w_s, cfg.weight_quantizer).transpose();
  }
  const LowRankSplit& split = artifacts.split;
  require_shape(split.w_res, w.rows(), w.cols(), "simulate_forward: w_res");
  Matrix y = x_q * quantize(split.w_res, cfg.weight_quantizer).transpose();
  y.noalias() += (x_s * split.a) * split.b.transpose();
  return y;
}

double snr(const Matrix& y_ref, const Matrix& y_hat) {
  require_shape(y_hat, y_ref.rows(), y_ref.cols(), "snr");
  const double signal = y_ref.squaredNorm();
  if (!(signal > 0.0)) {
    throw DataError("snr: reference output has zero energy, SNR is undefined");
  }
  const double noise = (y_ref - y_hat).squaredNorm();
  // Two routes to the same product (W_res + B A^T vs W, smoothed vs not)
  // differ by round-off only; that counts as an exact match.
  if (noise <= kExactMatchRelTol * kExactMatchRelTol * signal) {
    return std::numeric_limits<double>::infinity();
  }
  return 10.0 * std::log10(signal / noise);
}

double snr_gain(double snr_db, double baseline_db) {
  if (std::isinf(snr_db) && std::isinf(baseline_db) && snr_db == baseline_db) return 0.0;
  return snr_db - baseline_db;
}

const MethodResult& LayerReport::row(std::string_view method, Variant variant) const {
  for (const MethodResult& r : rows) {
    if (r.method == method && r.variant == variant) return r;
  }
  throw ParameterError("report for layer '" + layer + "' has no row " + std::string(method) +
                       "/" + std::string(to_string(variant)));
}

LayerReport compare_methods(const Matrix& w, const Matrix& x_calib, const Matrix& x_eval,
                            const LayerConfig& cfg, std::string layer) {
  cfg.validate();
  require_finite(w, "weight");
  require_finite(x_calib, "calibration activations");
  const Matrix& x_meas = cfg.eval_in_sample ? x_calib : x_eval;
  require_finite(x_meas, "evaluation activations");
  if (x_meas.cols() != w.cols()) {
    throw DimensionError("evaluation activations have " + std::to_string(x_meas.cols()) +
                         " channels, weight has " + std::to_string(w.cols()));
  }

  LayerReport report;
  report.layer = std::move(layer);
  report.seed = cfg.seed;
  report.rank = cfg.rank;
  report.d_in = w.cols();
  report.d_out = w.rows();
  report.config = cfg;

  const Matrix y_ref = x_meas * w.transpose();
  const double dense_params = static_cast<double>(w.rows() * w.cols());

  for (Variant variant : cfg.variants) {
    PreparedLayer p = prepare(w, x_calib, cfg, variant);

    LayerArtifacts art;
    art.weight = w;
    art.scales = p.scales;
    art.variant = variant;

    MethodResult base;
    base.method = std::string(kBaselineMethod);
    base.variant = variant;
    base.snr_db = snr(y_ref, simulate_forward(x_meas, art, cfg, ForwardMode::baseline_quant));
    base.gain_db = 0.0;
    base.objective = (p.w_s * p.metric.g_sqrt).squaredNorm();
    base.clipping_objective = clipping_objective(p.w_s, cfg.weight_quantizer);
    base.w_res_absmax = absmax(p.w_s);
    report.rows.push_back(base);

    for (SplitMethod method : cfg.methods) {
      double clipping = std::numeric_limits<double>::quiet_NaN();
      art.split = split_with(p, p.w_s, cfg, method, cfg.rank, &clipping);

      MethodResult row;
      row.method = std::string(to_string(method));
      row.variant = variant;
      row.snr_db = snr(y_ref, simulate_forward(x_meas, art, cfg, ForwardMode::dual_branch));
      row.gain_db = snr_gain(row.snr_db, base.snr_db);
      row.objective = weighted_objective(p.w_s, art.split, p.metric.g_sqrt);
      row.params_added = art.split.params_added();
      row.overhead_ratio = static_cast<double>(row.params_added) / dense_params;
      row.clipping_objective =
          std::isnan(clipping) ? clipping_objective(art.split.w_res, cfg.weight_quantizer)
                               : clipping;
      row.a_absmax = absmax(art.split.a);
      row.b_absmax = absmax(art.split.b);
      row.w_res_absmax = absmax(art.split.w_res);
      report.rows.push_back(std::move(row));
    }
  }
  return report;
}

SweepResult sweep_rank(const Matrix& w, const Matrix& x_calib, const Matrix& x_eval,
                       const LayerConfig& cfg, const std::vector<Index>& ranks,
                       std::string layer, int workers) {
  if (ranks.empty()) throw ConfigError("sweep_rank: no ranks given");
  const Index max_rank = std::min(w.rows(), w.cols());
  for (std::size_t i = 0; i < ranks.size(); ++i) {
    if (ranks[i] < 1) throw ConfigError("sweep_rank: rank must be >= 1");
    if (ranks[i] > max_rank) {
      throw ParameterError("sweep_rank: rank " + std::to_string(ranks[i]) + " exceeds " +
                           std::to_string(max_rank));
    }
    if (i > 0 && ranks[i] <= ranks[i - 1]) {
      throw ConfigError("sweep_rank: ranks must be strictly ascending");
    }
  }

  SweepResult out;
  out.reports.resize(ranks.size());
  parallel_for(ranks.size(), workers, [&](std::size_t i) {
    LayerConfig c = cfg;
    c.rank = ranks[i];
    out.reports[i] = compare_methods(w, x_calib, x_eval, c, layer);
  });
  for (Variant variant : cfg.variants) {
    const PreparedLayer p = prepare(w, x_calib, cfg, variant);
    out.spectra.emplace_back(variant, scaled_spectrum(p.w_s, p.metric));
  }
  return out;
}

void parallel_for(std::size_t n, int workers, const std::function<void(std::size_t)>& fn) {
  const std::size_t threads = std::min<std::size_t>(n, static_cast<std::size_t>(std::max(workers, 1)));
  if (threads <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::atomic<bool> failed{false};
  std::vector<std::thread> pool;
  pool.reserve(threads);
  for (std::size_t t = 0; t < threads; ++t) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < n && !failed; i = next++) {
        try {
          fn(i);
        } catch (...) {
          if (!failed.exchange(true)) failure = std::current_exception();
        }
      }
    });
  }
  for (std::thread& th : pool) th.join();
  if (failure) std::rethrow_exception(failure);
}

}  // namespace arhq
