#pragma once

// Per-pixel abundance solvers.
//
// Linear (FCLS / NCLS):  min 1/2 |r - M a|^2 + zeta/2 |a - xi|^2
// Kernel (K-Hype / NK-Hype), with psi in the RKHS of kappa:
//   min 1/2 (|a|^2 + |psi|_H^2 + 1/mu |e|^2 + zeta |a - xi|^2)
//   s.t. e_l = r_l - (a^T m_l + psi(m_l)),  a >= 0  [, 1^T a = 1]
// zeta = 0 is the plain per-pixel problem; zeta > 0 is the proximal step used
// inside the split-Bregman loop with xi = V_n + D1_n.
//
// The kernel problem is solved through its dual over x = (beta, gamma[, lambda]).
// Stationarity of the Lagrangian gives
//   a = (M^T beta + gamma - lambda 1 + zeta xi) / (1 + zeta),
//   psi = sum_l beta_l kappa(., m_l),   e = mu beta,
// and substituting back, scaled by (1 + zeta), the negated dual is
//   1/2 x^T Q x - c^T x  with
//   Q = [[(1+zeta)(K + mu I) + M M^T,  M,  -M 1],
//        [M^T,                         I,  -1  ],
//        [-1^T M^T,                  -1^T,  R  ]]
//   c = ((1+zeta) r - zeta M xi,  -zeta xi,  zeta xi^T 1 - (1+zeta)),
// with gamma >= 0. Without sum-to-one the lambda row and column are dropped.

#include <Eigen/Dense>

#include <optional>
#include <string>
#include <vector>

#include "hsu/error.hpp"
#include "hsu/qp.hpp"
#include "hsu/scene.hpp"

namespace hsu {

enum class PixelMethod { fcls, ncls, khype, nkhype };

inline bool is_kernel(PixelMethod m) { return m == PixelMethod::khype || m == PixelMethod::nkhype; }
inline bool uses_sum_to_one(PixelMethod m) { return m == PixelMethod::fcls || m == PixelMethod::khype; }

inline std::string to_string(PixelMethod m) {
  switch (m) {
    case PixelMethod::fcls: return "fcls";
    case PixelMethod::ncls: return "ncls";
    case PixelMethod::khype: return "khype";
    case PixelMethod::nkhype: return "nkhype";
  }
  return "?";
}

struct PixelModel {
  PixelMethod method = PixelMethod::khype;
  double mu = 0.003;

  bool sum_to_one() const { return uses_sum_to_one(method); }
  bool kernel() const { return is_kernel(method); }

  void validate() const {
    if (kernel() && !(mu > 0.0)) throw InvalidArgument("mu must be > 0 for kernel methods");
  }
};

struct DualSolution {
  Vector beta;
  Vector gamma;
  std::optional<double> lambda;
  Vector alpha;
  Vector residual;  // e = mu * beta
  Vector fit;       // y_l = alpha^T m_l + (K beta)_l
  double objective = 0.0;  // optimal primal value, from the dual optimum
  std::vector<char> active;
  int qp_iterations = 0;
  std::vector<double> qp_trace;
};

// Largest negative abundance tolerated (and clamped) before recovery fails.
inline constexpr double kFeasibilityClamp = 1e-6;

namespace detail {

inline void check_pixel_dims(const Vector& r, const Matrix& m, const Vector& xi) {
  if (r.size() != m.rows()) throw InvalidArgument("pixel solve: spectrum length differs from endmember band count");
  if (xi.size() != m.cols()) throw InvalidArgument("pixel solve: xi length differs from endmember count");
}

}  // namespace detail

inline QpProblem build_proximal_dual(const Vector& r, const Matrix& m, const Matrix& k, double mu, double zeta,
                                     const Vector& xi, bool sum_to_one) {
  detail::check_pixel_dims(r, m, xi);
  const Eigen::Index bands = m.rows();
  const Eigen::Index ends = m.cols();
  if (k.rows() != bands || k.cols() != bands) throw InvalidArgument("build_proximal_dual: Gram matrix must be L x L");
  if (!(mu > 0.0)) throw InvalidArgument("build_proximal_dual: mu must be > 0");
  if (!(zeta >= 0.0)) throw InvalidArgument("build_proximal_dual: zeta must be >= 0");

  const Eigen::Index d = bands + ends + (sum_to_one ? 1 : 0);
  const double s = 1.0 + zeta;
  QpProblem prob;
  prob.P.resize(d, d);
  prob.q.resize(d);

  auto bb = prob.P.topLeftCorner(bands, bands);
  bb.noalias() = m * m.transpose();
  bb += s * k;
  bb.diagonal().array() += s * mu;
  prob.P.block(0, bands, bands, ends) = m;
  prob.P.block(bands, 0, ends, bands) = m.transpose();
  prob.P.block(bands, bands, ends, ends).setIdentity();

  prob.q.head(bands) = s * r - zeta * (m * xi);
  prob.q.segment(bands, ends) = -zeta * xi;

  if (sum_to_one) {
    const Eigen::Index li = bands + ends;
    const Vector m1 = m.rowwise().sum();
    prob.P.block(0, li, bands, 1) = -m1;
    prob.P.block(li, 0, 1, bands) = -m1.transpose();
    prob.P.block(bands, li, ends, 1).setConstant(-1.0);
    prob.P.block(li, bands, 1, ends).setConstant(-1.0);
    prob.P(li, li) = static_cast<double>(ends);
    prob.q(li) = zeta * xi.sum() - s;
  }

  prob.nonneg.resize(static_cast<std::size_t>(ends));
  for (Eigen::Index i = 0; i < ends; ++i) prob.nonneg[i] = static_cast<int>(bands + i);
  return prob;
}

// alpha = (M^T beta + gamma - lambda 1 + zeta xi) / (1 + zeta), clamped at zero
// after checking that no entry is below -kFeasibilityClamp.
inline Vector recover_abundance(const DualSolution& dual, const Matrix& m, double zeta, const Vector& xi) {
  if (dual.beta.size() != m.rows() || dual.gamma.size() != m.cols() || xi.size() != m.cols()) {
    throw InvalidArgument("recover_abundance: dimension mismatch");
  }
  Vector alpha = m.transpose() * dual.beta + dual.gamma + zeta * xi;
  if (dual.lambda) alpha.array() -= *dual.lambda;
  alpha /= (1.0 + zeta);
  if (!alpha.allFinite()) throw SolverError("recover_abundance: non-finite abundance");
  if (alpha.minCoeff() < -kFeasibilityClamp) {
    throw SolverError("recover_abundance: abundance " + std::to_string(alpha.minCoeff()) +
                      " violates nonnegativity beyond round-off");
  }
  return alpha.cwiseMax(0.0);
}

// Primal objective of the kernel problem at (alpha, psi = sum beta_l kappa(., m_l)).
inline double kernel_primal_objective(const Vector& r, const Matrix& m, const Matrix& k, double mu, double zeta,
                                      const Vector& xi, const Vector& alpha, const Vector& beta) {
  const Vector kb = k * beta;
  const Vector e = r - m * alpha - kb;
  return 0.5 * (alpha.squaredNorm() + beta.dot(kb) + e.squaredNorm() / mu + zeta * (alpha - xi).squaredNorm());
}

inline DualSolution solve_pixel_kernel(const Vector& r, const Matrix& m, const Matrix& k, const PixelModel& model,
                                       double zeta, const Vector& xi, const QpOptions& opts = {}) {
  if (!model.kernel()) throw InvalidArgument("solve_pixel_kernel: model is not a kernel method");
  model.validate();
  const bool sto = model.sum_to_one();
  const QpProblem prob = build_proximal_dual(r, m, k, model.mu, zeta, xi, sto);
  const QpSolution qp = solve_qp(prob, opts);

  const Eigen::Index bands = m.rows();
  const Eigen::Index ends = m.cols();
  DualSolution dual;
  dual.beta = qp.x.head(bands);
  dual.gamma = qp.x.segment(bands, ends);
  if (sto) dual.lambda = qp.x(bands + ends);
  dual.alpha = recover_abundance(dual, m, zeta, xi);
  dual.residual = model.mu * dual.beta;
  dual.fit = m * dual.alpha + k * dual.beta;
  // Strong duality: primal optimum = -(QP optimum)/(1+zeta) + zeta |xi|^2 / (2 (1+zeta)).
  dual.objective = (-prob.objective(qp.x) + 0.5 * zeta * xi.squaredNorm()) / (1.0 + zeta);
  dual.active = qp.active;
  dual.qp_iterations = qp.iterations;
  dual.qp_trace = qp.objective_trace;
  return dual;
}

struct LinearSolution {
  Vector alpha;
  std::vector<char> active;
  int qp_iterations = 0;
  std::vector<double> qp_trace;
};

// min 1/2 |r - M a|^2 + zeta/2 |a - xi|^2 over a >= 0 [, 1^T a = 1]
inline LinearSolution solve_pixel_linear(const Vector& r, const Matrix& m, const PixelModel& model, double zeta,
                                         const Vector& xi, const QpOptions& opts = {}) {
  if (model.kernel()) throw InvalidArgument("solve_pixel_linear: model is a kernel method");
  detail::check_pixel_dims(r, m, xi);
  if (!(zeta >= 0.0)) throw InvalidArgument("solve_pixel_linear: zeta must be >= 0");
  Matrix p = m.transpose() * m;
  p.diagonal().array() += zeta;
  const Vector q = m.transpose() * r + zeta * xi;
  const QpSolution qp = solve_simplex_qp(p, q, model.sum_to_one(), opts);
  LinearSolution out;
  if (qp.x.minCoeff() < -kFeasibilityClamp) throw SolverError("solve_pixel_linear: infeasible solution");
  out.alpha = qp.x.cwiseMax(0.0);
  out.active = qp.active;
  out.qp_iterations = qp.iterations;
  out.qp_trace = qp.objective_trace;
  return out;
}

// Shared per-run pixel solver: holds M, K and the method, dispatches to the
// linear or kernel route. Immutable and safe to call concurrently.
class PixelSolver {
 public:
  struct Result {
    Vector alpha;
    Vector beta;  // empty for linear methods
    std::vector<char> active;
    std::vector<double> qp_trace;
  };

  PixelSolver(Matrix endmembers, Matrix gram, PixelModel model, QpOptions opts = {})
      : m_(std::move(endmembers)), k_(std::move(gram)), model_(model), opts_(std::move(opts)) {
    model_.validate();
    if (model_.kernel()) {
      if (k_.rows() != m_.rows() || k_.cols() != m_.rows()) throw InvalidArgument("PixelSolver: Gram must be L x L");
      Matrix kmu = k_;
      kmu.diagonal().array() += model_.mu;
      kmu_llt_.compute(kmu);
      if (kmu_llt_.info() != Eigen::Success) throw SolverError("PixelSolver: K + mu I is not positive definite");
    }
  }

  const Matrix& endmembers() const { return m_; }
  const Matrix& gram() const { return k_; }
  const PixelModel& model() const { return model_; }
  int bands() const { return static_cast<int>(m_.rows()); }
  int count() const { return static_cast<int>(m_.cols()); }

  Result solve(const Vector& r, double zeta, const Vector& xi, const std::vector<char>* warm = nullptr) const {
    QpOptions opts = opts_;
    if (warm) opts.initial_active = *warm;
    Result out;
    if (model_.kernel()) {
      DualSolution dual = solve_pixel_kernel(r, m_, k_, model_, zeta, xi, opts);
      out.alpha = std::move(dual.alpha);
      out.beta = std::move(dual.beta);
      out.active = std::move(dual.active);
      out.qp_trace = std::move(dual.qp_trace);
    } else {
      LinearSolution lin = solve_pixel_linear(r, m_, model_, zeta, xi, opts);
      out.alpha = std::move(lin.alpha);
      out.active = std::move(lin.active);
      out.qp_trace = std::move(lin.qp_trace);
    }
    return out;
  }

  // Data-fit term of the unsplit problem at abundance `alpha`. For kernel
  // methods psi is minimized out in closed form:
  //   1/2 |alpha|^2 + 1/2 s^T (K + mu I)^{-1} s,  s = r - M alpha.
  double data_cost(const Vector& r, const Vector& alpha) const {
    const Vector s = r - m_ * alpha;
    if (!model_.kernel()) return 0.5 * s.squaredNorm();
    return 0.5 * alpha.squaredNorm() + 0.5 * s.dot(kmu_llt_.solve(s));
  }

 private:
  Matrix m_;
  Matrix k_;
  PixelModel model_;
  QpOptions opts_;
  Eigen::LLT<Matrix> kmu_llt_;
};

}  // namespace hsu
