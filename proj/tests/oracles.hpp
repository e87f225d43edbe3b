#pragma once

// Test-only reference solutions. Nothing here calls the library's solvers.

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>

#include <cmath>
#include <limits>
#include <optional>
#include <random>
#include <vector>

#include "hsu/qp.hpp"
#include "hsu/scene.hpp"

namespace oracle {

using hsu::Matrix;
using hsu::Vector;

struct BruteForceResult {
  Vector x;
  double objective = std::numeric_limits<double>::infinity();
};

// Enumerates every subset of bound indices pinned at zero, solves the
// remaining equality-constrained KKT system with a full-pivot LU and keeps
// the best feasible candidate.
inline BruteForceResult brute_force_qp(const hsu::QpProblem& prob) {
  const int d = prob.dim();
  const int nb = static_cast<int>(prob.nonneg.size());
  BruteForceResult best;
  for (unsigned mask = 0; mask < (1u << nb); ++mask) {
    std::vector<char> pinned(d, 0);
    for (int j = 0; j < nb; ++j)
      if (mask & (1u << j)) pinned[prob.nonneg[j]] = 1;
    std::vector<int> free;
    for (int i = 0; i < d; ++i)
      if (!pinned[i]) free.push_back(i);
    const int nf = static_cast<int>(free.size());
    const bool eq = prob.equality.has_value();
    const int size = nf + (eq ? 1 : 0);
    Vector x = Vector::Zero(d);
    if (size > 0) {
      Matrix kkt = Matrix::Zero(size, size);
      Vector rhs = Vector::Zero(size);
      for (int a = 0; a < nf; ++a) {
        for (int b = 0; b < nf; ++b) kkt(a, b) = prob.P(free[a], free[b]);
        rhs(a) = prob.q(free[a]);
        if (eq) {
          kkt(a, nf) = prob.equality->a(free[a]);
          kkt(nf, a) = prob.equality->a(free[a]);
        }
      }
      if (eq) rhs(nf) = prob.equality->b;
      Eigen::FullPivLU<Matrix> lu(kkt);
      if (!lu.isInvertible()) continue;
      Vector sol = lu.solve(rhs);
      for (int a = 0; a < nf; ++a) x(free[a]) = sol(a);
    } else if (eq && std::abs(prob.equality->b) > 1e-12) {
      continue;
    }
    bool feasible = true;
    for (int i : prob.nonneg)
      if (x(i) < -1e-12) feasible = false;
    if (eq && std::abs(prob.equality->a.dot(x) - prob.equality->b) > 1e-9) feasible = false;
    if (!feasible) continue;
    const double obj = prob.objective(x);
    if (obj < best.objective) {
      best.objective = obj;
      best.x = x;
    }
  }
  return best;
}

struct PrimalKernelResult {
  Vector alpha;
  double objective = 0.0;
};

// Representer-form primal of the (proximal) kernel unmixing problem:
//   min_{alpha, psi} 1/2 (|alpha|^2 + |psi|^2 + 1/mu |r - M alpha - psi(m)|^2 + zeta |alpha - xi|^2)
// psi is parameterized in feature coordinates w with K = B B^T
// (B = U Lambda^{1/2}), so |psi|^2 = |w|^2 and psi(m) = B w. The resulting
// strictly convex QP over (alpha, w) is solved by brute-force enumeration.
inline PrimalKernelResult primal_kernel_oracle(const Vector& r, const Matrix& m, const Matrix& k, double mu,
                                               double zeta, const Vector& xi, bool sum_to_one) {
  const int bands = static_cast<int>(m.rows());
  const int ends = static_cast<int>(m.cols());
  Eigen::SelfAdjointEigenSolver<Matrix> eig(k);
  const Matrix b = eig.eigenvectors() * eig.eigenvalues().cwiseMax(0.0).cwiseSqrt().asDiagonal();

  const int d = ends + bands;
  hsu::QpProblem prob;
  prob.P.setZero(d, d);
  prob.P.topLeftCorner(ends, ends) = (1.0 + zeta) * Matrix::Identity(ends, ends) + m.transpose() * m / mu;
  prob.P.topRightCorner(ends, bands) = m.transpose() * b / mu;
  prob.P.bottomLeftCorner(bands, ends) = b.transpose() * m / mu;
  prob.P.bottomRightCorner(bands, bands) = Matrix::Identity(bands, bands) + b.transpose() * b / mu;
  prob.P = 0.5 * (prob.P + prob.P.transpose()).eval();
  prob.q.resize(d);
  prob.q.head(ends) = m.transpose() * r / mu + zeta * xi;
  prob.q.tail(bands) = b.transpose() * r / mu;
  for (int i = 0; i < ends; ++i) prob.nonneg.push_back(i);
  if (sum_to_one) {
    Vector a = Vector::Zero(d);
    a.head(ends).setOnes();
    prob.equality = hsu::LinearEquality{a, 1.0};
  }
  const BruteForceResult bf = brute_force_qp(prob);
  PrimalKernelResult out;
  out.alpha = bf.x.head(ends);
  out.objective = bf.objective + 0.5 * r.squaredNorm() / mu + 0.5 * zeta * xi.squaredNorm();
  return out;
}

// Dense N x 4N difference operator with periodic neighbors, blocks ordered
// left, right, up, down; column n of block d is e_n - e_{neighbor_d(n)}.
inline Matrix dense_H(int w, int h) {
  const int n = w * h;
  Matrix hm = Matrix::Zero(n, 4 * n);
  for (int row = 0; row < h; ++row) {
    for (int col = 0; col < w; ++col) {
      const int p = row * w + col;
      const int nb[4] = {row * w + (col + w - 1) % w, row * w + (col + 1) % w, ((row + h - 1) % h) * w + col,
                         ((row + 1) % h) * w + col};
      for (int d = 0; d < 4; ++d) {
        hm(p, d * n + p) += 1.0;
        hm(nb[d], d * n + p) -= 1.0;
      }
    }
  }
  return hm;
}

// Random point on the probability simplex (normalized exponentials).
inline Vector random_simplex(int dim, std::mt19937_64& rng) {
  std::exponential_distribution<double> e(1.0);
  Vector v(dim);
  for (int i = 0; i < dim; ++i) v(i) = e(rng);
  return v / v.sum();
}

inline Matrix random_uniform(int rows, int cols, double lo, double hi, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(lo, hi);
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = u(rng);
  return m;
}

}  // namespace oracle
