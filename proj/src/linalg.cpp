#include "arhq/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "arhq/error.hpp"

namespace arhq::linalg {

namespace {

using ColMatrix = Eigen::MatrixXd;

constexpr double kSymmetryTolerance = 1e-8;

}  // namespace

Matrix EigenDecomposition::reconstruct() const {
  return eigenvectors * eigenvalues.asDiagonal() * eigenvectors.transpose();
}

Matrix TruncatedSVD::reconstruct() const {
  return u * sigma.asDiagonal() * v.transpose();
}

EigenDecomposition sym_eigendecompose(const Matrix& s) {
  if (s.rows() != s.cols()) {
    throw DimensionError("sym_eigendecompose: input is " + std::to_string(s.rows()) + "x" +
                         std::to_string(s.cols()) + ", expected square");
  }
  if (s.size() == 0) {
    throw DimensionError("sym_eigendecompose: empty input");
  }
  require_finite(s, "sym_eigendecompose");

  const double scale = s.cwiseAbs().maxCoeff();
  const double asym = (s - s.transpose()).cwiseAbs().maxCoeff();
  if (asym > kSymmetryTolerance * scale) {
    throw DataError("sym_eigendecompose: input is not symmetric (max |S - S^T| = " +
                    std::to_string(asym) + ")");
  }

  const ColMatrix sym = 0.5 * (s + s.transpose());
  Eigen::SelfAdjointEigenSolver<ColMatrix> solver(sym);
  if (solver.info() != Eigen::Success) {
    throw DataError("sym_eigendecompose: eigensolver did not converge");
  }

  // Eigen returns ascending order; flip to descending.
  EigenDecomposition out;
  out.eigenvalues = solver.eigenvalues().reverse();
  out.eigenvectors = solver.eigenvectors().rowwise().reverse();
  return out;
}

TruncatedSVD truncated_svd(const Matrix& m, Index r) {
  const Index k = std::min(m.rows(), m.cols());
  if (r < 1 || r > k) {
    throw ParameterError("truncated_svd: rank " + std::to_string(r) + " outside [1, " +
                         std::to_string(k) + "]");
  }
  require_finite(m, "truncated_svd");

  const ColMatrix cm = m;
  Eigen::BDCSVD<ColMatrix> svd(cm, Eigen::ComputeThinU | Eigen::ComputeThinV);
  if (svd.info() != Eigen::Success) {
    throw DataError("truncated_svd: SVD did not converge");
  }
  TruncatedSVD out;
  out.u = svd.matrixU().leftCols(r);
  out.sigma = svd.singularValues().head(r);
  out.v = svd.matrixV().leftCols(r);
  return out;
}

Vector singular_values(const Matrix& m) {
  if (m.size() == 0) {
    throw DimensionError("singular_values: empty input");
  }
  require_finite(m, "singular_values");
  const ColMatrix cm = m;
  Eigen::BDCSVD<ColMatrix> svd(cm);
  return svd.singularValues();
}

double tail_energy(const Vector& sigma, Index r) {
  double sum = 0.0;
  for (Index i = std::max<Index>(r, 0); i < sigma.size(); ++i) {
    sum += sigma(i) * sigma(i);
  }
  return sum;
}

FlooredRoots floored_roots(const EigenDecomposition& eig, double floor) {
  if (!(floor > 0.0) || !std::isfinite(floor)) {
    throw ParameterError("eigenvalue floor must be positive and finite, got " +
                         std::to_string(floor));
  }
  const Vector clamped = eig.eigenvalues.cwiseMax(floor);
  const Matrix& u = eig.eigenvectors;

  FlooredRoots out;
  out.eigenvalues = eig.eigenvalues;
  out.floored = u * clamped.asDiagonal() * u.transpose();
  out.sqrt = u * clamped.cwiseSqrt().asDiagonal() * u.transpose();
  out.inv_sqrt = u * clamped.cwiseSqrt().cwiseInverse().asDiagonal() * u.transpose();
  // Products of symmetric factors drift from symmetry at round-off level.
  out.floored = 0.5 * (out.floored + out.floored.transpose()).eval();
  out.sqrt = 0.5 * (out.sqrt + out.sqrt.transpose()).eval();
  out.inv_sqrt = 0.5 * (out.inv_sqrt + out.inv_sqrt.transpose()).eval();
  return out;
}

Matrix psd_power(const Matrix& s, double exponent, double floor) {
  if (!(floor > 0.0) || !std::isfinite(floor)) {
    throw ParameterError("psd_power: floor must be positive and finite, got " +
                         std::to_string(floor));
  }
  if (!std::isfinite(exponent)) {
    throw ParameterError("psd_power: exponent must be finite");
  }
  const EigenDecomposition eig = sym_eigendecompose(s);
  const Vector powered =
      eig.eigenvalues.cwiseMax(floor).unaryExpr([exponent](double v) { return std::pow(v, exponent); });
  Matrix out = eig.eigenvectors * powered.asDiagonal() * eig.eigenvectors.transpose();
  return 0.5 * (out + out.transpose());
}

}  // namespace arhq::linalg
