#include "oracles.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numeric>

namespace arhq::oracle {

JacobiResult jacobi_eigen(const Matrix& s_in, double tol, int max_sweeps) {
  const Index n = s_in.rows();
  Matrix a = 0.5 * (s_in + s_in.transpose());
  Matrix v = Matrix::Identity(n, n);
  const double scale = std::max(a.norm(), std::numeric_limits<double>::min());
  for (int sweep = 0; sweep < max_sweeps; ++sweep) {
    double off = 0.0;
    for (Index p = 0; p < n; ++p)
      for (Index q = p + 1; q < n; ++q) off += a(p, q) * a(p, q);
    if (std::sqrt(off) <= tol * scale) break;
    for (Index p = 0; p < n; ++p) {
      for (Index q = p + 1; q < n; ++q) {
        if (a(p, q) == 0.0) continue;
        const double theta = (a(q, q) - a(p, p)) / (2.0 * a(p, q));
        const double t = std::copysign(1.0, theta) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        for (Index k = 0; k < n; ++k) {
          const double akp = a(k, p), akq = a(k, q);
          a(k, p) = c * akp - s * akq;
          a(k, q) = s * akp + c * akq;
        }
        for (Index k = 0; k < n; ++k) {
          const double apk = a(p, k), aqk = a(q, k);
          a(p, k) = c * apk - s * aqk;
          a(q, k) = s * apk + c * aqk;
        }
        for (Index k = 0; k < n; ++k) {
          const double vkp = v(k, p), vkq = v(k, q);
          v(k, p) = c * vkp - s * vkq;
          v(k, q) = s * vkp + c * vkq;
        }
      }
    }
  }
  std::vector<Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Index{0});
  std::sort(order.begin(), order.end(), [&](Index i, Index j) { return a(i, i) > a(j, j); });
  JacobiResult out;
  out.values.resize(n);
  out.vectors.resize(n, n);
  for (Index k = 0; k < n; ++k) {
    out.values(k) = a(order[k], order[k]);
    out.vectors.col(k) = v.col(order[k]);
  }
  return out;
}

Vector gram_singular_values(const Matrix& m) {
  const Index k = std::min(m.rows(), m.cols());
  const Matrix gram = m.rows() >= m.cols() ? Matrix(m.transpose() * m) : Matrix(m * m.transpose());
  const JacobiResult j = jacobi_eigen(gram);
  Vector out(k);
  for (Index i = 0; i < k; ++i) out(i) = std::sqrt(std::max(j.values(i), 0.0));
  return out;
}

Matrix jacobi_sqrt(const Matrix& s) {
  const JacobiResult j = jacobi_eigen(s);
  const Vector root = j.values.cwiseMax(0.0).cwiseSqrt();
  return j.vectors * root.asDiagonal() * j.vectors.transpose();
}

AlsResult als_weighted_lowrank(const Matrix& w, const Matrix& g, Index r, int restarts,
                               int iterations, double rel_tol, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  const Matrix wg = w * g;
  auto objective = [&](const Matrix& b, const Matrix& a) {
    const Matrix d = w - b * a.transpose();
    return (d * g).cwiseProduct(d).sum();
  };
  AlsResult best{std::numeric_limits<double>::infinity(), {}, {}};
  for (int start = 0; start < restarts; ++start) {
    Matrix a = random_matrix(w.cols(), r, rng);
    Matrix b;
    double prev = std::numeric_limits<double>::infinity();
    double obj = prev;
    for (int it = 0; it < iterations; ++it) {
      const Matrix agram = a.transpose() * g * a;
      b = agram.ldlt().solve((wg * a).transpose()).transpose();
      const Matrix bgram = b.transpose() * b;
      a = bgram.ldlt().solve((w.transpose() * b).transpose()).transpose();
      obj = objective(b, a);
      if (std::abs(prev - obj) <= rel_tol * std::max(std::abs(obj), 1e-300)) break;
      prev = obj;
    }
    if (obj < best.objective) best = {obj, a, b};
  }
  return best;
}

double nearest_fp4(double v) {
  static constexpr std::array<double, 15> grid = {-6.0, -4.0, -3.0, -2.0, -1.5, -1.0, -0.5, 0.0,
                                                  0.5,  1.0,  1.5,  2.0,  3.0,  4.0,  6.0};
  std::size_t best = 7;
  for (std::size_t k = 0; k < grid.size(); ++k) {
    const double d = std::abs(v - grid[k]);
    const double best_d = std::abs(v - grid[best]);
    if (d < best_d || (d == best_d && std::abs(grid[k]) > std::abs(grid[best]))) best = k;
  }
  return grid[best];
}

Matrix block_fp4_reference(const Matrix& x, Index block_size) {
  Matrix out = x;
  for (Index i = 0; i < x.rows(); ++i) {
    for (Index start = 0; start < x.cols(); start += block_size) {
      const Index len = std::min(block_size, x.cols() - start);
      const double absmax = x.row(i).segment(start, len).cwiseAbs().maxCoeff();
      if (absmax == 0.0) continue;
      const double scale = absmax / 6.0;
      for (Index j = start; j < start + len; ++j) out(i, j) = nearest_fp4(x(i, j) / scale) * scale;
    }
  }
  return out;
}

Matrix fd_gradient(const std::function<double(const Matrix&)>& f, const Matrix& w, double h) {
  Matrix grad(w.rows(), w.cols());
  Matrix probe = w;
  for (Index i = 0; i < w.rows(); ++i) {
    for (Index j = 0; j < w.cols(); ++j) {
      const double orig = probe(i, j);
      probe(i, j) = orig + h;
      const double up = f(probe);
      probe(i, j) = orig - h;
      const double down = f(probe);
      probe(i, j) = orig;
      grad(i, j) = (up - down) / (2.0 * h);
    }
  }
  return grad;
}

Matrix random_matrix(Index rows, Index cols, std::mt19937_64& rng, double scale) {
  std::normal_distribution<double> normal(0.0, scale);
  Matrix m(rows, cols);
  for (Index i = 0; i < m.size(); ++i) m.data()[i] = normal(rng);
  return m;
}

Matrix random_spd(Index n, double cond, std::mt19937_64& rng) {
  const Eigen::MatrixXd g = random_matrix(n, n, rng);
  const Eigen::MatrixXd q = Eigen::HouseholderQR<Eigen::MatrixXd>(g).householderQ();
  Vector lambda(n);
  for (Index i = 0; i < n; ++i) {
    const double t = n == 1 ? 0.0 : static_cast<double>(i) / static_cast<double>(n - 1);
    lambda(i) = std::pow(cond, t);
  }
  Matrix out = q * lambda.asDiagonal() * q.transpose();
  return 0.5 * (out + out.transpose());
}

double rel_error(const Matrix& a, const Matrix& b) {
  return (a - b).norm() / std::max(b.norm(), std::numeric_limits<double>::min());
}

double max_abs(const Matrix& m) { return m.size() == 0 ? 0.0 : m.cwiseAbs().maxCoeff(); }

}  // namespace arhq::oracle
