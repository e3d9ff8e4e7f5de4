#pragma once

#include <cstdint>

#include "data/dataset.hpp"
#include "features/feature_map.hpp"
#include "solvers/gram.hpp"
#include "solvers/nystrom.hpp"
#include "util/linalg.hpp"

namespace sorfgp {

/// Negative marginal log likelihood split into its parts.
struct NmllTerms {
  double performance = 0.0;  // y^T K^-1 y / 2
  double logdet = 0.0;       // log|K| / 2
  double constant = 0.0;     // n/2 log(2 pi)
  double total = 0.0;
};

/// Closed-form NMLL over (lambda, beta) from one pass at fixed sigma.
/// Built from the moments of Q = Z / beta (features generated at beta = 1).
class NmllEvaluator {
 public:
  static NmllEvaluator from_moments(const GramMoments& q_moments);
  static NmllEvaluator from_stream(const FeatureStream& q_stream);

  NmllTerms evaluate(double lambda, double beta) const;

  const Vector& eigenvalues() const { return eigenvalues_; }
  const Vector& rotated() const { return rotated_; }
  double yty() const { return yty_; }
  std::size_t rows() const { return rows_; }

 private:
  Vector eigenvalues_;  // of Q^T Q, descending, >= 0
  Vector rotated_;      // U^T Q^T y
  double yty_ = 0.0;
  std::size_t rows_ = 0;
};

/// Spec with beta = 1, so its features are Q = Z / beta.
FeatureMapSpec unit_amplitude(const FeatureMapSpec& spec);

NmllTerms nmll_exact(const DataSource& data, const FeatureMapSpec& spec);

struct ApproxNmllOptions {
  std::size_t precond_rank = 256;
  std::size_t n_v = 25;
  double tol = 1e-5;
  std::size_t maxiter = 500;
  SketchVariant variant = SketchVariant::Srht2;
  std::uint64_t seed = 0;
};

/// PCG weights for the data-fit term and SLQ for the log-determinant.
/// `stream` holds features at the amplitude being evaluated.
NmllTerms nmll_approx(const FeatureStream& stream, double lambda, const ApproxNmllOptions& opts);
NmllTerms nmll_approx(const DataSource& data, const FeatureMapSpec& spec,
                      const ApproxNmllOptions& opts);

}  // namespace sorfgp
