#pragma once

// Reproducing kernels over endmember wavelength vectors (rows of M) and the
// L x L Gram matrix shared by every kernel pixel solver.

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>

#include <cmath>
#include <string>

#include "hsu/error.hpp"
#include "hsu/scene.hpp"

namespace hsu {

enum class KernelVariant { polynomial, gaussian };

struct KernelSpec {
  KernelVariant variant = KernelVariant::polynomial;
  double sigma = 1.0;  // gaussian bandwidth

  static KernelSpec polynomial() { return {}; }
  static KernelSpec gaussian(double sigma) {
    if (!(sigma > 0.0) || !std::isfinite(sigma)) throw InvalidArgument("gaussian kernel: sigma must be > 0");
    return {KernelVariant::gaussian, sigma};
  }
};

// Parses "poly" or "gaussian[:sigma]" (sigma defaults to 1).
inline KernelSpec parse_kernel_spec(const std::string& text) {
  if (text == "poly" || text == "polynomial") return KernelSpec::polynomial();
  if (text == "gaussian") return KernelSpec::gaussian(1.0);
  if (text.rfind("gaussian:", 0) == 0) {
    double sigma = detail::parse_double(text.substr(9), "--kernel");
    return KernelSpec::gaussian(sigma);
  }
  throw InvalidArgument("unknown kernel '" + text + "' (expected poly or gaussian[:sigma])");
}

inline std::string to_string(const KernelSpec& k) {
  if (k.variant == KernelVariant::polynomial) return "poly";
  return "gaussian:" + detail::format_double(k.sigma);
}

// polynomial: [1 + (x - 1/2)^T (y - 1/2) / R^2]^2 with R = dim(x)
// gaussian:   exp(-|x - y|^2 / (2 sigma^2))
template <typename DerivedX, typename DerivedY>
double eval_kernel(const KernelSpec& spec, const Eigen::MatrixBase<DerivedX>& x, const Eigen::MatrixBase<DerivedY>& y) {
  if (x.size() != y.size()) throw InvalidArgument("eval_kernel: dimension mismatch");
  if (spec.variant == KernelVariant::polynomial) {
    const double r = static_cast<double>(x.size());
    const double inner = ((x.array() - 0.5) * (y.array() - 0.5)).sum() / (r * r);
    const double base = 1.0 + inner;
    return base * base;
  }
  const double d2 = (x - y).squaredNorm();
  return std::exp(-d2 / (2.0 * spec.sigma * spec.sigma));
}

// [K]_{lp} = kappa(m_l, m_p) over rows of M. Upper triangle computed, then mirrored.
inline Matrix gram(const KernelSpec& spec, const EndmemberMatrix& endmembers) {
  const Matrix& m = endmembers.matrix();
  const Eigen::Index bands = m.rows();
  Matrix k(bands, bands);
  for (Eigen::Index l = 0; l < bands; ++l) {
    for (Eigen::Index p = l; p < bands; ++p) {
      k(l, p) = eval_kernel(spec, m.row(l).transpose(), m.row(p).transpose());
      k(p, l) = k(l, p);
    }
  }
  return k;
}

// Throws SolverError when the smallest eigenvalue is below -1e-10 * |K|_2.
// Asserted, never repaired.
inline void assert_psd(const Matrix& k) {
  Eigen::SelfAdjointEigenSolver<Matrix> eig(k, Eigen::EigenvaluesOnly);
  const double top = eig.eigenvalues().cwiseAbs().maxCoeff();
  const double low = eig.eigenvalues().minCoeff();
  if (low < -1e-10 * top) {
    throw SolverError("Gram matrix is not positive semidefinite (min eigenvalue " + std::to_string(low) + ")");
  }
}

}  // namespace hsu
