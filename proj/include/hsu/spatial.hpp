#pragma once

// Four-neighbor difference operators on a periodic grid and the two
// split-Bregman subproblem solutions that involve them.
//
// H = (H_left H_right H_up H_down) is N x 4N; for an R x N abundance matrix
// A, block d of A H holds alpha_n - alpha_{neighbor_d(n)}. Neighbors wrap
// around the image borders, which makes I + H H^T block-circulant and hence
// diagonal in the 2D DFT basis with eigenvalues
//   1 + 4 (1 - cos(2 pi kx / w)) + 4 (1 - cos(2 pi ky / h)).

#include <Eigen/Dense>

#include <array>
#include <cmath>
#include <complex>
#include <memory>
#include <numbers>
#include <span>
#include <vector>

#include "hsu/error.hpp"
#include "hsu/fft.hpp"
#include "hsu/scene.hpp"

namespace hsu {

enum class Direction { left = 0, right = 1, up = 2, down = 3 };

inline constexpr int kDirections = 4;

class GridStencil {
 public:
  GridStencil(int width, int height) : w_(width), h_(height) {
    if (w_ <= 0 || h_ <= 0) throw InvalidArgument("GridStencil: grid must be non-empty");
    fft_ = std::make_shared<detail::RealFft2d>(w_, h_);
    const int sw = fft_->spectrum_width();
    auto inv = std::make_shared<std::vector<std::complex<double>>>(fft_->spectrum_size());
    for (int ky = 0; ky < h_; ++ky) {
      for (int kx = 0; kx < sw; ++kx) {
        (*inv)[static_cast<std::size_t>(ky) * sw + kx] = 1.0 / eigenvalue(kx, ky);
      }
    }
    inverse_spectrum_ = std::move(inv);
  }

  int width() const { return w_; }
  int height() const { return h_; }
  int pixels() const { return w_ * h_; }

  // Eigenvalue of I + H H^T at 2D frequency (kx, ky).
  double eigenvalue(int kx, int ky) const {
    constexpr double two_pi = 2.0 * std::numbers::pi;
    return 1.0 + 4.0 * (1.0 - std::cos(two_pi * kx / w_)) + 4.0 * (1.0 - std::cos(two_pi * ky / h_));
  }

  int neighbor(int n, Direction d) const {
    const int row = n / w_;
    const int col = n % w_;
    switch (d) {
      case Direction::left: return row * w_ + (col + w_ - 1) % w_;
      case Direction::right: return row * w_ + (col + 1) % w_;
      case Direction::up: return ((row + h_ - 1) % h_) * w_ + col;
      case Direction::down: return ((row + 1) % h_) * w_ + col;
    }
    return n;
  }

  // R x N -> R x 4N
  Matrix apply_H(const Matrix& a) const {
    check_cols(a, pixels(), "apply_H");
    const int n_pix = pixels();
    Matrix out(a.rows(), static_cast<Eigen::Index>(kDirections) * n_pix);
    for (int d = 0; d < kDirections; ++d) {
      const auto dir = static_cast<Direction>(d);
      for (int n = 0; n < n_pix; ++n) {
        out.col(static_cast<Eigen::Index>(d) * n_pix + n) = a.col(n) - a.col(neighbor(n, dir));
      }
    }
    return out;
  }

  // Adjoint of apply_H: R x 4N -> R x N.
  Matrix apply_Ht(const Matrix& b) const {
    const int n_pix = pixels();
    check_cols(b, kDirections * n_pix, "apply_Ht");
    Matrix out = Matrix::Zero(b.rows(), n_pix);
    for (int d = 0; d < kDirections; ++d) {
      const auto dir = static_cast<Direction>(d);
      for (int n = 0; n < n_pix; ++n) {
        const auto col = b.col(static_cast<Eigen::Index>(d) * n_pix + n);
        out.col(n) += col;
        out.col(neighbor(n, dir)) -= col;
      }
    }
    return out;
  }

  // Solves V (I + H H^T) = rhs row by row in the Fourier domain.
  Matrix solve_identity_plus_HHt(const Matrix& rhs) const {
    check_cols(rhs, pixels(), "solve_identity_plus_HHt");
    Matrix out(rhs.rows(), rhs.cols());
    std::vector<double> in_row(static_cast<std::size_t>(pixels()));
    std::vector<double> out_row(in_row.size());
    for (Eigen::Index r = 0; r < rhs.rows(); ++r) {
      for (int n = 0; n < pixels(); ++n) in_row[n] = rhs(r, n);
      fft_->apply_multiplier(in_row, out_row, *inverse_spectrum_);
      for (int n = 0; n < pixels(); ++n) out(r, n) = out_row[n];
    }
    return out;
  }

 private:
  static void check_cols(const Matrix& m, int expected, const char* what) {
    if (m.cols() != expected) {
      throw InvalidArgument(std::string(what) + ": expected " + std::to_string(expected) + " columns, got " +
                            std::to_string(m.cols()));
    }
  }

  int w_;
  int h_;
  std::shared_ptr<const detail::RealFft2d> fft_;
  std::shared_ptr<const std::vector<std::complex<double>>> inverse_spectrum_;
};

// |A H|_{1,1}: every ordered neighbor pair counted once per direction.
inline double regularizer_value(const Matrix& a, const GridStencil& stencil) {
  return stencil.apply_H(a).cwiseAbs().sum();
}

inline double soft_threshold(double x, double tau) {
  const double mag = std::abs(x) - tau;
  if (mag <= 0.0) return 0.0;
  return x > 0.0 ? mag : -mag;
}

// V = (A - D1 + (U - D2) H^T) (I + H H^T)^{-1}
inline Matrix update_V(const Matrix& a, const Matrix& u, const Matrix& d1, const Matrix& d2,
                       const GridStencil& stencil) {
  if (a.rows() != d1.rows() || a.cols() != d1.cols()) throw InvalidArgument("update_V: A and D1 shapes differ");
  if (u.rows() != d2.rows() || u.cols() != d2.cols()) throw InvalidArgument("update_V: U and D2 shapes differ");
  if (u.rows() != a.rows()) throw InvalidArgument("update_V: row count mismatch");
  const Matrix rhs = a - d1 + stencil.apply_Ht(u - d2);
  return stencil.solve_identity_plus_HHt(rhs);
}

// U = Thresh(V H + D2, eta / zeta), componentwise.
inline Matrix update_U(const Matrix& v, const Matrix& d2, double eta, double zeta, const GridStencil& stencil) {
  if (!(zeta > 0.0)) throw InvalidArgument("update_U: zeta must be > 0");
  if (!(eta >= 0.0)) throw InvalidArgument("update_U: eta must be >= 0");
  Matrix u = stencil.apply_H(v);
  if (u.rows() != d2.rows() || u.cols() != d2.cols()) throw InvalidArgument("update_U: D2 shape mismatch");
  u += d2;
  const double tau = eta / zeta;
  if (tau > 0.0) u = u.unaryExpr([tau](double x) { return soft_threshold(x, tau); });
  return u;
}

}  // namespace hsu
