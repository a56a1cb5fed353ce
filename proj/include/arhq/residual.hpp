#pragma once

#include "arhq/linalg.hpp"
#include "arhq/matrix.hpp"
#include "arhq/quantizers.hpp"

namespace arhq {

// E_x = Q_x(X) - X.
Matrix compute_residual(const Matrix& x, const QuantizerSpec& spec);

// Streaming sufficient statistics for the residual covariance: the running
// sum of E^T E and the number of rows that went into it. Accumulators over
// disjoint batches combine with merge().
class CovarianceAccumulator {
 public:
  explicit CovarianceAccumulator(Index dim);

  void accumulate(const Matrix& batch);
  void merge(const CovarianceAccumulator& other);

  Index dim() const { return gram_.rows(); }
  Index n_rows() const { return n_rows_; }
  const Matrix& gram() const { return gram_; }

  // gram / n_rows, symmetrized. Throws EmptyCalibrationError when empty.
  Matrix covariance() const;

 private:
  Matrix gram_;
  Index n_rows_ = 0;
};

// How the eigenvalue floor is chosen. `relative` floors at value * mean(lambda)
// but never below min_abs; `absolute` uses value as-is.
struct FloorRule {
  enum class Kind { relative, absolute };
  Kind kind = Kind::relative;
  double value = 1e-6;
  double min_abs = 1e-10;

  static FloorRule absolute(double floor) { return {Kind::absolute, floor, 0.0}; }

  void validate() const;
  double resolve(const Vector& eigenvalues) const;

  bool operator==(const FloorRule&) const = default;
};

// Regularized metric G_eps together with its +-1/2 powers.
struct ResidualMetric {
  Matrix g;
  Matrix g_sqrt;
  Matrix g_invsqrt;
  double floor = 0.0;
  Index n_rows = 0;
  Vector eigenvalues;  // un-floored spectrum of the covariance, descending

  Index dim() const { return g.rows(); }
};

// Builds the floored metric from an already normalized covariance.
ResidualMetric make_metric(const Matrix& covariance, double floor, Index n_rows);
ResidualMetric make_metric(const Matrix& covariance, const FloorRule& rule, Index n_rows);

ResidualMetric finalize(const CovarianceAccumulator& acc, double floor);
ResidualMetric finalize(const CovarianceAccumulator& acc, const FloorRule& rule);

// Activation covariance H_x = X^T X / N as a metric, for activation-aware splits.
ResidualMetric activation_metric(const Matrix& x, const FloorRule& rule);

// Residual propagation loss Tr(W G W^T) and its gradient 2 W G.
double residual_propagation_loss(const Matrix& w_res, const Matrix& g);
Matrix residual_propagation_gradient(const Matrix& w_res, const Matrix& g);

}  // namespace arhq
