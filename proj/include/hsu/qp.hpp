#pragma once

// Dense convex QP with nonnegativity bounds on a subset of the variables and
// at most one linear equality:
//
//   minimize  1/2 x^T P x - q^T x
//   s.t.      x_i >= 0           for i in nonneg
//             a^T x = b          (optional)
//
// Primal active-set method. The working set W holds bound indices pinned at
// zero; each iteration solves the equality-constrained subproblem on the free
// set by Cholesky and either steps to it or stops at the first blocking bound.
// Problems here are small (at most bands + endmembers + 1 variables), so
// every subproblem is refactored from scratch. The ridge only enters the
// factorization; a few refinement steps against the unregularized P remove
// its bias whenever the free block is nonsingular.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "hsu/error.hpp"
#include "hsu/scene.hpp"

namespace hsu {

struct LinearEquality {
  Vector a;
  double b = 0.0;
};

struct QpProblem {
  Matrix P;
  Vector q;
  std::vector<int> nonneg;
  std::optional<LinearEquality> equality;

  int dim() const { return static_cast<int>(q.size()); }
  double objective(const Vector& x) const { return 0.5 * x.dot(P * x) - q.dot(x); }
};

struct QpOptions {
  int max_iter = 500;
  double tol = 1e-11;
  // Added once to the diagonal. Unset means 1e-10 * trace(P) / d.
  std::optional<double> ridge;
  int refine_steps = 2;
  // Warm start: mask over all d indices, nonzero = bound assumed active.
  // Ignored when it does not yield a feasible starting point.
  std::vector<char> initial_active;
  bool record_trace = false;
};

struct QpSolution {
  Vector x;
  int iterations = 0;
  double kkt_residual = 0.0;
  double equality_multiplier = 0.0;
  std::vector<char> active;             // final working set, same layout as QpOptions::initial_active
  std::vector<double> objective_trace;  // objective after every iteration (record_trace only)
  bool warm_started = false;
};

namespace detail {

inline void validate_qp(const QpProblem& prob) {
  const Eigen::Index d = prob.q.size();
  if (d < 1) throw InvalidArgument("solve_qp: empty problem");
  if (prob.P.rows() != d || prob.P.cols() != d) throw InvalidArgument("solve_qp: P must be d x d with d = |q|");
  if (!prob.P.allFinite() || !prob.q.allFinite()) throw InvalidArgument("solve_qp: non-finite entries");
  const double scale = std::max(1.0, prob.P.cwiseAbs().maxCoeff());
  if ((prob.P - prob.P.transpose()).cwiseAbs().maxCoeff() > 1e-12 * scale) {
    throw InvalidArgument("solve_qp: P is not symmetric");
  }
  std::vector<char> seen(static_cast<std::size_t>(d), 0);
  for (int i : prob.nonneg) {
    if (i < 0 || i >= d) throw InvalidArgument("solve_qp: nonneg index out of range");
    if (seen[i]) throw InvalidArgument("solve_qp: duplicate nonneg index");
    seen[i] = 1;
  }
  if (prob.equality) {
    if (prob.equality->a.size() != d) throw InvalidArgument("solve_qp: equality vector has wrong length");
    if (!prob.equality->a.allFinite() || !std::isfinite(prob.equality->b)) {
      throw InvalidArgument("solve_qp: non-finite equality");
    }
    if (prob.equality->a.cwiseAbs().maxCoeff() == 0.0) throw InvalidArgument("solve_qp: zero equality vector");
  }
}

class ActiveSetSolver {
 public:
  ActiveSetSolver(const QpProblem& prob, const QpOptions& opts) : prob_(prob), opts_(opts) {
    d_ = prob.dim();
    const double ridge = opts.ridge ? *opts.ridge : 1e-10 * prob.P.trace() / d_;
    if (ridge < 0.0 || !std::isfinite(ridge)) throw InvalidArgument("solve_qp: ridge must be >= 0");
    if (opts.refine_steps < 0) throw InvalidArgument("solve_qp: refine_steps must be >= 0");
    ridge_ = ridge;
    p_ = prob.P;
    is_bound_.assign(d_, 0);
    for (int i : prob.nonneg) is_bound_[i] = 1;
    scale_ = 1.0 + prob.q.cwiseAbs().maxCoeff();
  }

  QpSolution run() {
    QpSolution sol;
    x_ = Vector::Zero(d_);
    active_.assign(d_, 0);

    bool at_subproblem_optimum = false;
    if (!opts_.initial_active.empty() && try_warm_start()) {
      sol.warm_started = true;
      at_subproblem_optimum = true;
    } else {
      cold_start();
    }

    for (int iter = 1; iter <= opts_.max_iter; ++iter) {
      sol.iterations = iter;
      if (!at_subproblem_optimum) {
        Vector y = solve_subproblem();
        // Ratio test over free bounded variables; lowest index wins ties.
        double step = 1.0;
        int blocking = -1;
        for (int i = 0; i < d_; ++i) {
          if (!is_bound_[i] || active_[i]) continue;
          if (y(i) < 0.0) {
            const double t = x_(i) / (x_(i) - y(i));
            if (t < step) {
              step = t;
              blocking = i;
            }
          }
        }
        if (blocking >= 0) {
          x_ += step * (y - x_);
          x_(blocking) = 0.0;
          active_[blocking] = 1;
          pin_active();
          trace(sol);
          continue;
        }
        x_ = y;
        pin_active();
      }
      at_subproblem_optimum = false;
      trace(sol);

      // Bound multipliers mu_i = g_i + nu a_i must be nonnegative.
      const Vector g = p_ * x_ - prob_.q;
      const double mtol = opts_.tol * (scale_ + p_.cwiseAbs().maxCoeff() * x_.cwiseAbs().maxCoeff());
      int release = -1;
      double most_negative = -mtol;
      for (int i = 0; i < d_; ++i) {
        if (!active_[i]) continue;
        const double mu = g(i) + nu_ * eq_coeff(i);
        if (mu < most_negative) {
          most_negative = mu;
          release = i;
        }
      }
      if (release < 0) {
        sol.x = x_;
        sol.active = active_;
        sol.equality_multiplier = nu_;
        sol.kkt_residual = kkt_residual(g);
        return sol;
      }
      active_[release] = 0;
    }
    const Vector g = p_ * x_ - prob_.q;
    throw SolverError("solve_qp: no convergence after " + std::to_string(opts_.max_iter) +
                      " iterations (KKT residual " + std::to_string(kkt_residual(g)) + ")");
  }

 private:
  double eq_coeff(int i) const { return prob_.equality ? prob_.equality->a(i) : 0.0; }

  void pin_active() {
    for (int i = 0; i < d_; ++i)
      if (active_[i]) x_(i) = 0.0;
  }

  void trace(QpSolution& sol) const {
    if (opts_.record_trace) sol.objective_trace.push_back(0.5 * x_.dot(p_ * x_) - prob_.q.dot(x_));
  }

  std::vector<int> free_indices() const {
    std::vector<int> free;
    free.reserve(d_);
    for (int i = 0; i < d_; ++i)
      if (!active_[i]) free.push_back(i);
    return free;
  }

  bool equality_touches_free(const std::vector<int>& free) const {
    if (!prob_.equality) return false;
    for (int i : free)
      if (prob_.equality->a(i) != 0.0) return true;
    return false;
  }

  // Minimizer of the objective with x_W = 0 (and a^T x = b when the free set
  // supports it). Sets nu_.
  Vector solve_subproblem() {
    const auto free = free_indices();
    Vector y = Vector::Zero(d_);
    nu_ = 0.0;
    if (free.empty()) return y;
    if (free.size() == 1 && equality_touches_free(free)) {
      // Fully determined by the equality; no factorization needed.
      const int f = free.front();
      const double af = prob_.equality->a(f);
      y(f) = prob_.equality->b / af;
      nu_ = -(p_(f, f) * y(f) - prob_.q(f)) / af;
      return y;
    }
    const Matrix pff = p_(free, free);
    const Vector qf = prob_.q(free);
    Matrix reg = pff;
    reg.diagonal().array() += ridge_;
    Eigen::LLT<Matrix> llt(reg);
    if (llt.info() != Eigen::Success) {
      throw SolverError("solve_qp: reduced Hessian is not positive definite (supply a ridge)");
    }
    const bool eq = equality_touches_free(free);
    Vector af, pa;
    if (eq) {
      af = prob_.equality->a(free);
      pa = llt.solve(af);
    }
    // Solves the regularized KKT system for (dy, dnu) given residuals (rq, rb).
    auto kkt_solve = [&](const Vector& rq, double rb, Vector& dy, double& dnu) {
      dy = llt.solve(rq);
      dnu = 0.0;
      if (eq) {
        dnu = (af.dot(dy) - rb) / af.dot(pa);
        dy -= dnu * pa;
      }
    };
    Vector yf;
    kkt_solve(qf, eq ? prob_.equality->b : 0.0, yf, nu_);
    for (int step = 0; step < opts_.refine_steps && ridge_ > 0.0; ++step) {
      Vector rq = qf - pff * yf;
      if (eq) rq -= nu_ * af;
      const double rb = eq ? prob_.equality->b - af.dot(yf) : 0.0;
      Vector dy;
      double dnu = 0.0;
      kkt_solve(rq, rb, dy, dnu);
      yf += dy;
      nu_ += dnu;
    }
    y(free) = yf;
    return y;
  }

  bool try_warm_start() {
    if (static_cast<int>(opts_.initial_active.size()) != d_) return false;
    for (int i = 0; i < d_; ++i) active_[i] = (is_bound_[i] && opts_.initial_active[i]) ? 1 : 0;
    const auto free = free_indices();
    if (prob_.equality && prob_.equality->b != 0.0 && !equality_touches_free(free)) return false;
    Vector y = solve_subproblem();
    for (int i = 0; i < d_; ++i)
      if (is_bound_[i] && !active_[i] && y(i) < 0.0) return false;
    x_ = y;
    return true;
  }

  // All bounds active. If the equality needs a bounded variable, start at the
  // cheapest feasible vertex b/a_j e_j.
  void cold_start() {
    x_.setZero();
    nu_ = 0.0;
    for (int i = 0; i < d_; ++i) active_[i] = is_bound_[i];
    if (!prob_.equality || prob_.equality->b == 0.0) return;
    if (equality_touches_free(free_indices())) return;
    const Vector& a = prob_.equality->a;
    const double b = prob_.equality->b;
    int best = -1;
    double best_obj = std::numeric_limits<double>::infinity();
    for (int j = 0; j < d_; ++j) {
      if (!is_bound_[j] || a(j) * b <= 0.0) continue;
      const double v = b / a(j);
      const double obj = 0.5 * p_(j, j) * v * v - prob_.q(j) * v;
      if (obj < best_obj) {
        best_obj = obj;
        best = j;
      }
    }
    if (best < 0) throw InvalidArgument("solve_qp: equality constraint infeasible with nonnegativity");
    active_[best] = 0;
    x_(best) = b / a(best);
  }

  double kkt_residual(const Vector& g) const {
    double res = 0.0;
    for (int i = 0; i < d_; ++i) {
      const double lag = g(i) + nu_ * eq_coeff(i);
      if (active_[i]) {
        res = std::max(res, std::max(0.0, -lag));
      } else {
        res = std::max(res, std::abs(lag));
        if (is_bound_[i]) res = std::max(res, std::max(0.0, -x_(i)));
      }
    }
    if (prob_.equality) res = std::max(res, std::abs(prob_.equality->a.dot(x_) - prob_.equality->b));
    return res;
  }

  const QpProblem& prob_;
  const QpOptions& opts_;
  int d_ = 0;
  Matrix p_;
  double ridge_ = 0.0;
  std::vector<char> is_bound_;
  std::vector<char> active_;
  Vector x_;
  double nu_ = 0.0;
  double scale_ = 1.0;
};

}  // namespace detail

inline QpSolution solve_qp(const QpProblem& problem, const QpOptions& opts = {}) {
  detail::validate_qp(problem);
  if (opts.max_iter < 0) throw InvalidArgument("solve_qp: max_iter must be >= 0");
  return detail::ActiveSetSolver(problem, opts).run();
}

// x >= 0 and, when sum_to_one, 1^T x = 1.
inline QpSolution solve_simplex_qp(const Matrix& P, const Vector& q, bool sum_to_one, const QpOptions& opts = {}) {
  QpProblem prob{P, q, {}, std::nullopt};
  prob.nonneg.resize(static_cast<std::size_t>(q.size()));
  for (int i = 0; i < q.size(); ++i) prob.nonneg[i] = i;
  if (sum_to_one) prob.equality = LinearEquality{Vector::Ones(q.size()), 1.0};
  return solve_qp(prob, opts);
}

}  // namespace hsu
