#pragma once

#include "arhq/matrix.hpp"

namespace arhq::linalg {

// Eigenpairs of a symmetric matrix. Column i of `eigenvectors` pairs with
// eigenvalues(i); eigenvalues are sorted in descending order.
struct EigenDecomposition {
  Vector eigenvalues;
  Matrix eigenvectors;

  Matrix reconstruct() const;
};

// Rank-r factors of a truncated SVD: u is rows x r, v is cols x r and sigma is
// descending and non-negative.
struct TruncatedSVD {
  Matrix u;
  Vector sigma;
  Matrix v;

  Index rank() const { return sigma.size(); }
  Matrix reconstruct() const;
};

// Symmetric eigendecomposition. The input must be square, finite and symmetric
// up to 1e-8 of its largest entry; it is symmetrized as (S + S^T)/2 first.
EigenDecomposition sym_eigendecompose(const Matrix& s);

// Best rank-r Frobenius approximation of m, 1 <= r <= min(rows, cols).
// Computed as a full SVD followed by truncation.
TruncatedSVD truncated_svd(const Matrix& m, Index r);

// All min(rows, cols) singular values of m, descending.
Vector singular_values(const Matrix& m);

// Sum of squared singular values beyond the first r.
double tail_energy(const Vector& sigma, Index r);

// U diag(max(lambda_i, floor)^exponent) U^T for a symmetric PSD input.
// floor must be positive; exponents of +1/2 and -1/2 give the metric root and
// its inverse, exponent 1 gives the floored matrix itself.
Matrix psd_power(const Matrix& s, double exponent, double floor);

// Floored matrix and both square roots computed from one eigendecomposition.
struct FlooredRoots {
  Matrix floored;
  Matrix sqrt;
  Matrix inv_sqrt;
  Vector eigenvalues;  // un-floored, descending
};

FlooredRoots floored_roots(const EigenDecomposition& eig, double floor);

}  // namespace arhq::linalg
