#include <gtest/gtest.h>

#include <numbers>
#include <random>

#include "hsu/spatial.hpp"
#include "oracles.hpp"

using namespace hsu;

namespace {

Matrix randn(int rows, int cols, std::mt19937_64& rng) {
  std::normal_distribution<double> g;
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = g(rng);
  return m;
}

}  // namespace

TEST(ApplyH, ConstantIsAnnihilated) {
  const GridStencil s(5, 3);
  const Matrix a = Vector::LinSpaced(3, 0.1, 0.5).replicate(1, 15);
  EXPECT_EQ(s.apply_H(a).cwiseAbs().maxCoeff(), 0.0);
  EXPECT_EQ(regularizer_value(a, s), 0.0);
}

TEST(ApplyH, SinglePixelGrid) {
  const GridStencil s(1, 1);
  Matrix a(2, 1);
  a << 0.3, 0.7;
  EXPECT_EQ(s.apply_H(a).cwiseAbs().maxCoeff(), 0.0);
}

TEST(ApplyH, TwoByOneWraparound) {
  const GridStencil s(2, 1);
  Matrix a(1, 2);
  a << 2.0, 5.0;
  const Matrix b = s.apply_H(a);
  ASSERT_EQ(b.cols(), 8);
  EXPECT_DOUBLE_EQ(b(0, 0), -3.0);  // left block: a - b
  EXPECT_DOUBLE_EQ(b(0, 1), 3.0);   //             b - a
  EXPECT_DOUBLE_EQ(b(0, 2), -3.0);  // right block
  EXPECT_DOUBLE_EQ(b(0, 3), 3.0);
  for (int j = 4; j < 8; ++j) EXPECT_EQ(b(0, j), 0.0);  // vertical wrap onto self
}

TEST(Regularizer, TwoByOneHandValue) {
  const GridStencil s(2, 1);
  Matrix a(1, 2);
  a << 0.0, 1.0;
  EXPECT_DOUBLE_EQ(regularizer_value(a, s), 4.0);
}

TEST(Regularizer, Homogeneity) {
  std::mt19937_64 rng(1);
  const GridStencil s(6, 4);
  const Matrix a = randn(3, 24, rng);
  for (double c : {0.0, 0.5, 3.0}) EXPECT_NEAR(regularizer_value(c * a, s), c * regularizer_value(a, s), 1e-12);
}

TEST(Regularizer, ZeroOnlyForConstantMaps) {
  std::mt19937_64 rng(2);
  const GridStencil s(4, 4);
  for (int trial = 0; trial < 50; ++trial) {
    Matrix a = Vector::Constant(2, 0.4).replicate(1, 16);
    std::uniform_int_distribution<int> pix(0, 15);
    a(trial % 2, pix(rng)) += 1e-3;
    EXPECT_GT(regularizer_value(a, s), 0.0);
  }
}

TEST(ApplyH, MatchesDenseOperator) {
  std::mt19937_64 rng(3);
  for (auto [w, h] : {std::pair{4, 4}, {5, 3}, {1, 6}, {7, 2}, {8, 8}}) {
    const GridStencil s(w, h);
    const Matrix hd = oracle::dense_H(w, h);
    const Matrix a = randn(3, w * h, rng);
    EXPECT_LT((s.apply_H(a) - a * hd).cwiseAbs().maxCoeff(), 1e-12);
    const Matrix b = randn(3, 4 * w * h, rng);
    EXPECT_LT((s.apply_Ht(b) - b * hd.transpose()).cwiseAbs().maxCoeff(), 1e-12);
  }
}

TEST(ApplyH, AdjointIdentity) {
  std::mt19937_64 rng(4);
  std::uniform_int_distribution<int> dim(1, 9);
  for (int trial = 0; trial < 100; ++trial) {
    const int w = dim(rng), h = dim(rng);
    const GridStencil s(w, h);
    const Matrix a = randn(2, w * h, rng);
    const Matrix b = randn(2, 4 * w * h, rng);
    const double lhs = (s.apply_H(a).array() * b.array()).sum();
    const double rhs = (a.array() * s.apply_Ht(b).array()).sum();
    EXPECT_NEAR(lhs, rhs, 1e-12 * (1.0 + std::abs(lhs)));
  }
}

TEST(ApplyH, GeometryMismatch) {
  const GridStencil s(3, 3);
  EXPECT_THROW(s.apply_H(Matrix::Zero(2, 8)), InvalidArgument);
  EXPECT_THROW(s.apply_Ht(Matrix::Zero(2, 9)), InvalidArgument);
  EXPECT_THROW(GridStencil(0, 3), InvalidArgument);
}

TEST(UpdateV, EigenvaluesMatchDenseSpectrum) {
  const int w = 4, h = 3;
  const GridStencil s(w, h);
  EXPECT_DOUBLE_EQ(s.eigenvalue(0, 0), 1.0);
  const Matrix hd = oracle::dense_H(w, h);
  const Matrix g = Matrix::Identity(w * h, w * h) + hd * hd.transpose();
  // Every Fourier mode is an eigenvector of I + H H^T.
  for (int ky = 0; ky < h; ++ky) {
    for (int kx = 0; kx < w; ++kx) {
      Vector c(w * h);
      for (int row = 0; row < h; ++row)
        for (int col = 0; col < w; ++col)
          c(row * w + col) = std::cos(2.0 * std::numbers::pi * (kx * col / double(w) + ky * row / double(h)));
      EXPECT_LT((g * c - s.eigenvalue(kx, ky) * c).norm(), 1e-12);
    }
  }
}

TEST(UpdateV, SinglePixelGivesAMinusD1) {
  const GridStencil s(1, 1);
  Matrix a(2, 1), d1(2, 1);
  a << 0.3, 0.7;
  d1 << 0.1, -0.2;
  const Matrix v = update_V(a, Matrix::Zero(2, 4), d1, Matrix::Random(2, 4), s);
  EXPECT_NEAR(v(0, 0), 0.2, 1e-14);
  EXPECT_NEAR(v(1, 0), 0.9, 1e-14);
}

TEST(UpdateV, MatchesDenseSolve) {
  std::mt19937_64 rng(5);
  for (auto [w, h] : {std::pair{4, 4}, {5, 3}, {3, 5}, {8, 1}, {6, 7}}) {
    const GridStencil s(w, h);
    const int n = w * h;
    const Matrix hd = oracle::dense_H(w, h);
    const Matrix g = Matrix::Identity(n, n) + hd * hd.transpose();
    for (int trial = 0; trial < 10; ++trial) {
      const Matrix a = randn(2, n, rng), d1 = randn(2, n, rng);
      const Matrix u = randn(2, 4 * n, rng), d2 = randn(2, 4 * n, rng);
      const Matrix v = update_V(a, u, d1, d2, s);
      const Matrix rhs = a - d1 + (u - d2) * hd.transpose();
      const Matrix dense = g.llt().solve(rhs.transpose()).transpose();
      EXPECT_LT((v - dense).cwiseAbs().maxCoeff(), 1e-10);
      // Gradient of the V-subproblem vanishes.
      EXPECT_LT((v * g - rhs).cwiseAbs().maxCoeff(), 1e-9);
    }
  }
}

TEST(SoftThreshold, Examples) {
  EXPECT_DOUBLE_EQ(soft_threshold(3.0, 1.0), 2.0);
  EXPECT_DOUBLE_EQ(soft_threshold(-3.0, 1.0), -2.0);
  EXPECT_DOUBLE_EQ(soft_threshold(-0.5, 1.0), 0.0);
  EXPECT_DOUBLE_EQ(soft_threshold(0.7, 0.0), 0.7);
}

TEST(SoftThreshold, MinimizesScalarProblemOnGrid) {
  // argmin_u tau |u| + 1/2 (u - x)^2, brute-forced at resolution 1e-4.
  std::mt19937_64 rng(6);
  std::uniform_real_distribution<double> ux(-2.0, 2.0), ut(0.0, 1.5);
  for (int trial = 0; trial < 40; ++trial) {
    const double x = ux(rng), tau = ut(rng);
    double best_u = 0.0, best = std::numeric_limits<double>::infinity();
    for (int i = -30000; i <= 30000; ++i) {
      const double u = i * 1e-4;
      const double f = tau * std::abs(u) + 0.5 * (u - x) * (u - x);
      if (f < best) {
        best = f;
        best_u = u;
      }
    }
    EXPECT_NEAR(soft_threshold(x, tau), best_u, 1e-4);
  }
}

TEST(UpdateU, ZeroEtaIsIdentity) {
  std::mt19937_64 rng(7);
  const GridStencil s(3, 4);
  const Matrix v = randn(2, 12, rng), d2 = randn(2, 48, rng);
  const Matrix u = update_U(v, d2, 0.0, 2.0, s);
  EXPECT_EQ((u - (s.apply_H(v) + d2)).cwiseAbs().maxCoeff(), 0.0);
  EXPECT_THROW(update_U(v, d2, 0.1, 0.0, s), InvalidArgument);
}

TEST(UpdateU, ComponentwiseThreshold) {
  std::mt19937_64 rng(8);
  const GridStencil s(3, 3);
  const Matrix v = randn(2, 9, rng), d2 = randn(2, 36, rng);
  const Matrix u = update_U(v, d2, 0.6, 2.0, s);
  const Matrix x = s.apply_H(v) + d2;
  for (Eigen::Index i = 0; i < u.size(); ++i) EXPECT_DOUBLE_EQ(u.data()[i], soft_threshold(x.data()[i], 0.3));
}
