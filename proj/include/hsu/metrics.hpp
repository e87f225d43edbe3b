#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <string>

#include "hsu/error.hpp"
#include "hsu/scene.hpp"

namespace hsu {

struct EvalReport {
  double rmse = 0.0;
  Vector per_endmember_rmse;  // extension: RMSE restricted to one abundance row
  double reconstruction_rmse = 0.0;
  double runtime_ms_per_pixel = 0.0;
};

// sqrt( 1/(N R) sum_n |alpha_n - alpha*_n|^2 )
inline double rmse(const AbundanceMatrix& truth, const AbundanceMatrix& est) {
  if (truth.values.rows() != est.values.rows() || truth.values.cols() != est.values.cols()) {
    throw InvalidArgument("rmse: shape mismatch");
  }
  if (truth.values.size() == 0) throw InvalidArgument("rmse: empty matrices");
  return std::sqrt((truth.values - est.values).squaredNorm() / static_cast<double>(truth.values.size()));
}

inline Vector per_endmember_rmse(const AbundanceMatrix& truth, const AbundanceMatrix& est) {
  if (truth.values.rows() != est.values.rows() || truth.values.cols() != est.values.cols()) {
    throw InvalidArgument("per_endmember_rmse: shape mismatch");
  }
  const Matrix diff = truth.values - est.values;
  return (diff.rowwise().squaredNorm() / static_cast<double>(diff.cols())).cwiseSqrt();
}

// Fitted spectrum y_n = M alpha_n + K beta_n; `beta` may be empty (linear methods).
inline double reconstruction_rmse(const SceneCube& cube, const Matrix& endmembers, const Matrix& gram,
                                  const AbundanceMatrix& abund, const Matrix& beta) {
  if (endmembers.rows() != cube.bands() || endmembers.cols() != abund.endmembers() ||
      abund.pixels() != cube.pixels()) {
    throw InvalidArgument("reconstruction_rmse: shape mismatch");
  }
  Matrix fit = endmembers * abund.values;
  if (beta.size() != 0) {
    if (beta.rows() != cube.bands() || beta.cols() != cube.pixels() || gram.rows() != cube.bands() ||
        gram.cols() != cube.bands()) {
      throw InvalidArgument("reconstruction_rmse: beta/Gram shape mismatch");
    }
    fit.noalias() += gram * beta;
  }
  return std::sqrt((cube.data() - fit).squaredNorm() / static_cast<double>(cube.data().size()));
}

}  // namespace hsu
