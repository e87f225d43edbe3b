#pragma once

// Split-Bregman solver for spatially regularized unmixing:
//
//   min_{A in S_A, psi}  sum_n J_err(alpha_n, psi_n) + eta |U|_{1,1}
//   s.t. V = A, U = V H
//
// Each outer iteration runs
//   1. per-pixel proximal solves with xi_n = V_n + D1_n,
//   2. V = (A - D1 + (U - D2) H^T)(I + H H^T)^{-1},
//   3. U = Thresh(V H + D2, eta / zeta),
// then D1 += V - A and D2 += V H - U.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <iostream>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "hsu/error.hpp"
#include "hsu/parallel.hpp"
#include "hsu/pixel.hpp"
#include "hsu/scene.hpp"
#include "hsu/spatial.hpp"

namespace hsu {

// Default spatial weights. The kernel data term carries a 1/mu factor, so
// linear methods need a correspondingly smaller eta.
inline constexpr double kDefaultEtaKernel = 0.3;
inline constexpr double kDefaultEtaLinear = 0.03;

struct BregmanConfig {
  double eta = kDefaultEtaKernel;
  double zeta0 = 1.0;
  int max_outer = 10;
  double tol = 1e-5;
  bool adapt_zeta = true;
  int threads = 1;
  bool skip_bad_pixels = false;

  void validate() const {
    if (!(eta >= 0.0) || !std::isfinite(eta)) throw InvalidArgument("eta must be a finite value >= 0");
    if (!(zeta0 > 0.0) || !std::isfinite(zeta0)) throw InvalidArgument("zeta0 must be > 0");
    if (max_outer < 1) throw InvalidArgument("max-iter must be >= 1");
    if (!(tol >= 0.0)) throw InvalidArgument("tol must be >= 0");
  }
};

inline constexpr double kZetaMin = 1e-6;
inline constexpr double kZetaMax = 1e6;

struct IterationRecord {
  int iter = 0;
  double rho_A = 0.0;  // |V - A|_F / (N R)
  double rho_U = 0.0;  // |U - V H|_F / (4 N R)
  double r_p = 0.0;    // |(V - A, V H - U)|_F
  double r_d = 0.0;    // zeta |(V - V_prev)(I, H)|_F
  double zeta = 0.0;   // penalty used during this iteration
  double objective = 0.0;
};

struct BregmanState {
  Matrix A, V, U, D1, D2;
  Matrix beta;  // L x N dual coefficients of the last Step 1 (kernel methods)
  double zeta = 1.0;
  int k = 0;
  std::vector<IterationRecord> history;
  std::vector<std::vector<char>> active;  // per-pixel QP working sets for warm starts
  std::vector<int> bad_pixels;
};

struct PixelBatch {
  Matrix alpha;
  Matrix beta;
  std::vector<std::vector<char>> active;
  std::vector<int> bad_pixels;
};

// Solves every pixel of `cube` with penalty zeta toward the columns of `xi`
// (ignored when zeta = 0). Results are stored by pixel index, so the output
// does not depend on the thread count.
inline PixelBatch solve_all_pixels(const SceneCube& cube, const PixelSolver& solver, double zeta, const Matrix* xi,
                                   const std::vector<std::vector<char>>* warm, int threads, bool skip_bad_pixels) {
  const int n_pix = cube.pixels();
  const int ends = solver.count();
  if (cube.bands() != solver.bands()) {
    throw InvalidArgument("cube has " + std::to_string(cube.bands()) + " bands, endmembers have " +
                          std::to_string(solver.bands()));
  }
  PixelBatch out;
  out.alpha.resize(ends, n_pix);
  if (solver.model().kernel()) out.beta = Matrix::Zero(solver.bands(), n_pix);
  out.active.resize(static_cast<std::size_t>(n_pix));
  std::vector<char> failed(static_cast<std::size_t>(n_pix), 0);
  const Vector zero_xi = Vector::Zero(ends);

  parallel_for(n_pix, threads, [&](int n) {
    const Vector r = cube.pixel(n);
    const Vector target = xi ? Vector(xi->col(n)) : zero_xi;
    const std::vector<char>* w = (warm && !(*warm)[n].empty()) ? &(*warm)[n] : nullptr;
    try {
      auto res = solver.solve(r, zeta, target, w);
      out.alpha.col(n) = res.alpha;
      if (res.beta.size()) out.beta.col(n) = res.beta;
      out.active[n] = std::move(res.active);
      if (!res.qp_trace.empty()) {
        static std::mutex trace_mutex;
        std::lock_guard lock(trace_mutex);
        for (std::size_t i = 0; i < res.qp_trace.size(); ++i) {
          std::cerr << "qp pixel=" << n << " iter=" << i + 1 << " objective=" << res.qp_trace[i] << '\n';
        }
      }
    } catch (const SolverError& e) {
      if (!skip_bad_pixels) throw SolverError("pixel " + std::to_string(n) + ": " + e.what());
      out.alpha.col(n).setConstant(1.0 / ends);
      if (out.beta.size()) out.beta.col(n).setZero();
      out.active[n].clear();
      failed[n] = 1;
    }
  });
  for (int n = 0; n < n_pix; ++n)
    if (failed[n]) out.bad_pixels.push_back(n);
  return out;
}

// Unsplit objective at A: per-pixel data term plus eta |A H|_{1,1}.
inline double total_objective(const SceneCube& cube, const PixelSolver& solver, const Matrix& a,
                              const GridStencil& stencil, double eta) {
  double cost = 0.0;
  for (int n = 0; n < cube.pixels(); ++n) cost += solver.data_cost(cube.pixel(n), a.col(n));
  return cost + eta * regularizer_value(a, stencil);
}

// Warm start from the unregularized per-pixel solution: A = V, U = V H, D = 0.
inline BregmanState init_state(const SceneCube& cube, const PixelSolver& solver, const GridStencil& stencil,
                               const BregmanConfig& config) {
  config.validate();
  if (stencil.width() != cube.width() || stencil.height() != cube.height()) {
    throw InvalidArgument("init_state: stencil geometry differs from cube");
  }
  BregmanState st;
  PixelBatch batch = solve_all_pixels(cube, solver, 0.0, nullptr, nullptr, config.threads, config.skip_bad_pixels);
  st.A = std::move(batch.alpha);
  st.beta = std::move(batch.beta);
  st.active = std::move(batch.active);
  st.bad_pixels = std::move(batch.bad_pixels);
  st.V = st.A;
  st.U = stencil.apply_H(st.V);
  st.D1 = Matrix::Zero(st.A.rows(), st.A.cols());
  st.D2 = Matrix::Zero(st.U.rows(), st.U.cols());
  st.zeta = config.zeta0;
  return st;
}

// One split-Bregman sweep (Steps 1-3 and the D updates); appends a history record.
inline void outer_iteration(BregmanState& st, const SceneCube& cube, const PixelSolver& solver,
                            const GridStencil& stencil, const BregmanConfig& config) {
  const Matrix xi = st.V + st.D1;
  PixelBatch batch = solve_all_pixels(cube, solver, st.zeta, &xi, &st.active, config.threads, config.skip_bad_pixels);
  st.A = std::move(batch.alpha);
  st.beta = std::move(batch.beta);
  st.active = std::move(batch.active);
  for (int n : batch.bad_pixels)
    if (std::find(st.bad_pixels.begin(), st.bad_pixels.end(), n) == st.bad_pixels.end()) st.bad_pixels.push_back(n);

  const Matrix v_prev = st.V;
  st.V = update_V(st.A, st.U, st.D1, st.D2, stencil);
  st.U = update_U(st.V, st.D2, config.eta, st.zeta, stencil);
  const Matrix vh = stencil.apply_H(st.V);

  const Matrix split_a = st.V - st.A;
  const Matrix split_u = vh - st.U;
  st.D1 += split_a;
  st.D2 += split_u;

  const Matrix dv = st.V - v_prev;
  const double n_r = static_cast<double>(st.A.rows()) * static_cast<double>(st.A.cols());
  IterationRecord rec;
  rec.iter = ++st.k;
  rec.rho_A = split_a.norm() / n_r;
  rec.rho_U = split_u.norm() / (4.0 * n_r);
  rec.r_p = std::sqrt(split_a.squaredNorm() + split_u.squaredNorm());
  rec.r_d = st.zeta * std::sqrt(dv.squaredNorm() + stencil.apply_H(dv).squaredNorm());
  rec.zeta = st.zeta;
  rec.objective = total_objective(cube, solver, st.A, stencil, config.eta);
  st.history.push_back(rec);
}

// Residual balancing: zeta doubles when r_p > 10 r_d and halves when
// r_d > 10 r_p, clamped to [1e-6, 1e6]. D1 and D2 are rescaled by
// zeta_old / zeta_new so that zeta * D is preserved.
inline void adapt_penalty(BregmanState& st, double r_p, double r_d) {
  double next = st.zeta;
  if (r_p > 10.0 * r_d) {
    next = 2.0 * st.zeta;
  } else if (r_d > 10.0 * r_p) {
    next = 0.5 * st.zeta;
  }
  next = std::clamp(next, kZetaMin, kZetaMax);
  if (next == st.zeta) return;
  const double ratio = st.zeta / next;
  st.D1 *= ratio;
  st.D2 *= ratio;
  st.zeta = next;
}

inline void adapt_penalty(BregmanState& st) {
  if (st.history.empty()) throw InvalidArgument("adapt_penalty: no completed iteration");
  adapt_penalty(st, st.history.back().r_p, st.history.back().r_d);
}

struct BregmanResult {
  AbundanceMatrix abundances;
  Matrix beta;
  std::vector<IterationRecord> history;
  bool converged = false;
  double constraint_violation = 0.0;
  std::vector<int> bad_pixels;
};

// Stops after max_outer iterations, or as soon as rho_A and rho_U are both below tol.
inline BregmanResult run_bregman(const SceneCube& cube, const PixelSolver& solver, const BregmanConfig& config) {
  config.validate();
  const GridStencil stencil(cube.width(), cube.height());
  BregmanState st = init_state(cube, solver, stencil, config);
  BregmanResult out;
  for (int it = 0; it < config.max_outer; ++it) {
    outer_iteration(st, cube, solver, stencil, config);
    const auto& last = st.history.back();
    if (last.rho_A < config.tol && last.rho_U < config.tol) {
      out.converged = true;
      break;
    }
    if (config.adapt_zeta) adapt_penalty(st);
  }
  out.abundances = AbundanceMatrix{std::move(st.A)};
  out.beta = std::move(st.beta);
  out.history = std::move(st.history);
  out.constraint_violation = out.abundances.constraint_violation(solver.model().sum_to_one());
  out.bad_pixels = std::move(st.bad_pixels);
  std::sort(out.bad_pixels.begin(), out.bad_pixels.end());
  return out;
}

}  // namespace hsu
