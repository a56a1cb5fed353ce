#include "arhq/synthetic.hpp"

#include <cmath>
#include <limits>
#include <random>
#include <string>

#include "arhq/error.hpp"
#include "arhq/linalg.hpp"
#include "arhq/residual.hpp"

namespace arhq::io {

namespace {

Matrix gaussian(Index rows, Index cols, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Matrix m(rows, cols);
  for (Index i = 0; i < m.size(); ++i) m.data()[i] = normal(rng);
  return m;
}

// Haar-distributed n x k matrix with orthonormal columns.
Matrix random_orthonormal(Index n, Index k, std::mt19937_64& rng) {
  const Eigen::MatrixXd g = gaussian(n, k, rng);
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(g);
  Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(n, k);
  const Eigen::MatrixXd r = qr.matrixQR().topRows(k).triangularView<Eigen::Upper>();
  for (Index j = 0; j < k; ++j) {
    if (r(j, j) < 0.0) q.col(j) *= -1.0;
  }
  return q;
}

}  // namespace

void SynthSpec::validate() const {
  if (d_in < 1 || d_out < 1 || n_calib < 1 || n_eval < 1) {
    throw ParameterError("synthetic spec: all dimensions and sample counts must be >= 1");
  }
  if (!(anisotropy >= 1.0) || !std::isfinite(anisotropy)) {
    throw ParameterError("synthetic spec: anisotropy must be a finite value >= 1");
  }
  if (!(weight_decay > 0.0 && weight_decay <= 1.0)) {
    throw ParameterError("synthetic spec: weight_decay must lie in (0, 1]");
  }
}

QuantizerSpec synthetic_probe_quantizer() {
  return QuantizerSpec::uniform(4, Granularity::per_column);
}

double residual_condition(const Matrix& x, const QuantizerSpec& spec) {
  CovarianceAccumulator acc(x.cols());
  acc.accumulate(compute_residual(x, spec));
  const Vector eig = linalg::sym_eigendecompose(acc.covariance()).eigenvalues;
  const double lo = eig(eig.size() - 1);
  if (!(lo > 0.0)) return std::numeric_limits<double>::infinity();
  return eig(0) / lo;
}

SynthLayer gen_synthetic(const SynthSpec& spec) {
  spec.validate();
  if (spec.d_in == 1 && spec.anisotropy > 1.0) {
    throw ParameterError("synthetic spec: anisotropy > 1 needs at least two input channels");
  }
  std::mt19937_64 rng(spec.seed);

  const Index k = std::min(spec.d_in, spec.d_out);
  const Matrix u = random_orthonormal(spec.d_out, k, rng);
  const Matrix v = random_orthonormal(spec.d_in, k, rng);
  Vector sigma(k);
  for (Index i = 0; i < k; ++i) sigma(i) = std::pow(spec.weight_decay, static_cast<double>(i));

  SynthLayer layer;
  layer.w = u * sigma.asDiagonal() * v.transpose();

  const Matrix z_calib = gaussian(spec.n_calib, spec.d_in, rng);
  const Matrix z_eval = gaussian(spec.n_eval, spec.d_in, rng);
  const auto ladder = [&](double span) {
    Vector s(spec.d_in);
    for (Index j = 0; j < spec.d_in; ++j) {
      const double t =
          spec.d_in == 1 ? 0.0 : static_cast<double>(j) / static_cast<double>(spec.d_in - 1);
      s(j) = std::pow(span, t);
    }
    return s;
  };
  const auto scaled = [](const Matrix& z, const Vector& s) {
    Matrix x = z;
    x.array().rowwise() *= s.transpose().array();
    return x;
  };

  // Finite samples add their own spread to the measured spectrum, so the
  // ladder starts at sqrt(anisotropy) and is corrected against the
  // measurement. Residual variances scale with the channel scale squared,
  // hence the square-root update.
  const QuantizerSpec probe = synthetic_probe_quantizer();
  double span = std::sqrt(spec.anisotropy);
  for (int iter = 0; iter < 12; ++iter) {
    layer.channel_scales = ladder(span);
    layer.x_calib = scaled(z_calib, layer.channel_scales);
    layer.measured_condition = residual_condition(layer.x_calib, probe);
    const double ratio = spec.anisotropy / layer.measured_condition;
    if (!std::isfinite(ratio) || std::abs(std::log(ratio)) < std::log(1.05)) break;
    const double next = std::max(1.0, span * std::sqrt(ratio));
    if (next == span) break;
    span = next;
  }
  layer.x_eval = scaled(z_eval, layer.channel_scales);

  if (!(layer.measured_condition >= 0.5 * spec.anisotropy &&
        layer.measured_condition <= 2.0 * spec.anisotropy)) {
    throw ParameterError("synthetic spec: anisotropy " + std::to_string(spec.anisotropy) +
                         " is not attainable with d_in=" + std::to_string(spec.d_in) +
                         ", n_calib=" + std::to_string(spec.n_calib) +
                         " (measured condition number " +
                         std::to_string(layer.measured_condition) + ")");
  }
  return layer;
}

}  // namespace arhq::io
