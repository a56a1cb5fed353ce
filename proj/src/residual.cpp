#include "arhq/residual.hpp"

#include <cmath>
#include <string>

#include "arhq/error.hpp"

namespace arhq {

Matrix compute_residual(const Matrix& x, const QuantizerSpec& spec) {
  return quantize(x, spec) - x;
}

CovarianceAccumulator::CovarianceAccumulator(Index dim) : gram_(Matrix::Zero(dim, dim)) {
  if (dim < 1) throw DimensionError("CovarianceAccumulator: dimension must be >= 1");
}

void CovarianceAccumulator::accumulate(const Matrix& batch) {
  if (batch.cols() != dim()) {
    throw DimensionError("accumulate: batch has " + std::to_string(batch.cols()) +
                         " columns, accumulator expects " + std::to_string(dim()));
  }
  require_finite(batch, "accumulate");
  gram_.noalias() += batch.transpose() * batch;
  n_rows_ += batch.rows();
}

void CovarianceAccumulator::merge(const CovarianceAccumulator& other) {
  if (other.dim() != dim()) {
    throw DimensionError("merge: accumulator dimensions differ");
  }
  gram_ += other.gram_;
  n_rows_ += other.n_rows_;
}

Matrix CovarianceAccumulator::covariance() const {
  if (n_rows_ == 0) {
    throw EmptyCalibrationError("residual covariance needs at least one calibration row");
  }
  Matrix cov = gram_ / static_cast<double>(n_rows_);
  return 0.5 * (cov + cov.transpose());
}

void FloorRule::validate() const {
  if (!(value > 0.0) || !std::isfinite(value)) {
    throw ParameterError("floor value must be positive and finite");
  }
  if (kind == Kind::relative && (!(min_abs > 0.0) || !std::isfinite(min_abs))) {
    throw ParameterError("relative floor needs a positive absolute minimum");
  }
}

double FloorRule::resolve(const Vector& eigenvalues) const {
  validate();
  if (kind == Kind::absolute) return value;
  const double mean = eigenvalues.size() == 0 ? 0.0 : eigenvalues.mean();
  return std::max(value * mean, min_abs);
}

namespace {

ResidualMetric metric_from(const linalg::EigenDecomposition& eig, double floor, Index n_rows) {
  linalg::FlooredRoots roots = linalg::floored_roots(eig, floor);
  ResidualMetric m;
  m.g = std::move(roots.floored);
  m.g_sqrt = std::move(roots.sqrt);
  m.g_invsqrt = std::move(roots.inv_sqrt);
  m.eigenvalues = std::move(roots.eigenvalues);
  m.floor = floor;
  m.n_rows = n_rows;
  return m;
}

}  // namespace

ResidualMetric make_metric(const Matrix& covariance, double floor, Index n_rows) {
  return metric_from(linalg::sym_eigendecompose(covariance), floor, n_rows);
}

ResidualMetric make_metric(const Matrix& covariance, const FloorRule& rule, Index n_rows) {
  const linalg::EigenDecomposition eig = linalg::sym_eigendecompose(covariance);
  return metric_from(eig, rule.resolve(eig.eigenvalues), n_rows);
}

ResidualMetric finalize(const CovarianceAccumulator& acc, double floor) {
  return make_metric(acc.covariance(), floor, acc.n_rows());
}

ResidualMetric finalize(const CovarianceAccumulator& acc, const FloorRule& rule) {
  return make_metric(acc.covariance(), rule, acc.n_rows());
}

ResidualMetric activation_metric(const Matrix& x, const FloorRule& rule) {
  CovarianceAccumulator acc(x.cols());
  acc.accumulate(x);
  return finalize(acc, rule);
}

double residual_propagation_loss(const Matrix& w_res, const Matrix& g) {
  require_shape(g, w_res.cols(), w_res.cols(), "residual_propagation_loss");
  return (w_res * g).cwiseProduct(w_res).sum();
}

Matrix residual_propagation_gradient(const Matrix& w_res, const Matrix& g) {
  require_shape(g, w_res.cols(), w_res.cols(), "residual_propagation_gradient");
  return 2.0 * w_res * g;
}

}  // namespace arhq
