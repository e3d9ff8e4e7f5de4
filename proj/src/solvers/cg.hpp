#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "solvers/gram.hpp"
#include "solvers/nystrom.hpp"
#include "util/linalg.hpp"

namespace sorfgp {

struct SolveOptions {
  double tol = 1e-6;
  std::size_t maxiter = 500;
};

/// Trajectory of a (multi-column) CG run. Column 0 is the Z^T y column;
/// columns 1..n_v are SLQ probes when present.
struct SolveReport {
  Vector weights;
  std::size_t iterations = 0;
  bool converged = false;
  std::vector<std::size_t> column_iterations;
  std::vector<std::vector<double>> residual_history;  // [iteration][column]
  std::vector<std::vector<double>> alphas;            // [iteration][column]
  std::vector<std::vector<double>> betas;             // [iteration][column]
  std::optional<double> logdet_estimate;
  std::size_t num_probes = 0;
};

SolveReport cg_solve(const GramSystem& sys, const Vector& rhs, const SolveOptions& opts = {},
                     const NystromPreconditioner* precond = nullptr);

/// PCG on Z^T y plus n_v probes drawn with covariance P; the probe
/// coefficients give a stochastic Lanczos estimate of log|Z^T Z + l^2 I|.
SolveReport pcg_slq_solve(const GramSystem& sys, const Vector& rhs_zty,
                          const NystromPreconditioner& precond, std::size_t n_v,
                          const SolveOptions& opts, std::uint64_t seed);

/// Lanczos tridiagonal of column `col` rebuilt from the stored coefficients.
Matrix lanczos_tridiagonal(const SolveReport& report, std::size_t col);

struct DenseEigSolution {
  Vector weights;
  Vector eigenvalues;  // descending, >= 0
  Vector rotated;      // U^T Z^T y
  Matrix eigenvectors;
};

inline constexpr std::size_t kDenseGuard = 8192;

/// Eigendecomposition of a symmetric Gram matrix with the relative
/// 1e-5 max(diag) shift added and then removed.
DenseEigSolution dense_eig_solve(const Matrix& gram, const Vector& zty, double y_sq,
                                 double lambda);

}  // namespace sorfgp
