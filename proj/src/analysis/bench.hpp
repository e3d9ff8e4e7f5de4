#pragma once

#include <cstdint>
#include <vector>

#include "solvers/gram.hpp"
#include "solvers/nystrom.hpp"

namespace sorfgp {

struct SorfTiming {
  std::size_t num_rffs = 0;
  double sorf_seconds = 0.0;   // best of the repeats
  double dense_seconds = 0.0;  // dense Gaussian projection baseline, 0 if skipped
};

/// RBF feature generation on a rows x dim batch for each M.
std::vector<SorfTiming> bench_sorf(std::size_t rows, std::size_t dim,
                                   const std::vector<std::size_t>& num_rffs, std::uint64_t seed,
                                   bool dense_baseline, std::size_t repeats = 3);

struct IterationRow {
  std::size_t rank = 0;
  SketchVariant variant = SketchVariant::Gauss;
  std::size_t cg_iterations = 0;
  std::size_t pcg_iterations = 0;
  bool cg_converged = false;
  bool pcg_converged = false;
  double ratio = 0.0;  // beta_L / lambda^2
};

/// Plain CG once, then PCG for every (rank, variant) pair.
std::vector<IterationRow> bench_iterations(const FeatureStream& stream, double lambda,
                                           const std::vector<std::size_t>& ranks,
                                           const std::vector<SketchVariant>& variants, double tol,
                                           std::size_t maxiter, std::uint64_t seed);

}  // namespace sorfgp
