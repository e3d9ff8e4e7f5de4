#pragma once

#include <cstdint>
#include <string>

#include "solvers/gram.hpp"
#include "util/linalg.hpp"

namespace sorfgp {

enum class SketchVariant : std::uint32_t { Gauss = 0, Srht = 1, Srht2 = 2 };

const char* to_string(SketchVariant v);
SketchVariant parse_sketch_variant(const std::string& name);

/// Low-rank approximation U diag(Lambda) U^T of Z^T Z used to precondition
/// (Z^T Z + lambda^2 I).
class NystromPreconditioner {
 public:
  NystromPreconditioner() = default;
  NystromPreconditioner(Matrix u, Vector eigenvalues, double lambda, SketchVariant variant);

  std::size_t dim() const { return static_cast<std::size_t>(u_.rows()); }
  std::size_t rank() const { return static_cast<std::size_t>(u_.cols()); }
  const Matrix& u() const { return u_; }
  const Vector& eigenvalues() const { return lambda_vals_; }
  double beta_l() const { return beta_l_; }
  double lambda() const { return lambda_; }
  SketchVariant variant() const { return variant_; }

  /// Same sketch, different noise level.
  NystromPreconditioner with_lambda(double lambda) const;

  /// (beta_L + l^2) U (Lambda + l^2)^-1 U^T v + (v - U U^T v)
  Matrix apply_inverse(const Matrix& v) const;
  /// Square root of the preconditioner viewed as a covariance.
  Matrix apply_sqrt(const Matrix& g) const;
  /// log|P| = sum log((Lambda_k + l^2) / (beta_L + l^2)).
  double logdet() const;
  double estimate_ratio() const;

 private:
  Matrix u_;
  Vector lambda_vals_;
  double beta_l_ = 0.0;
  double lambda_ = 1.0;
  SketchVariant variant_ = SketchVariant::Gauss;
};

/// Streams the data once (twice for srht_2) to sketch Z^T Z.
NystromPreconditioner build_preconditioner(const FeatureStream& stream, std::size_t rank,
                                           double lambda, SketchVariant variant,
                                           std::uint64_t seed);

inline Matrix apply_inverse(const NystromPreconditioner& p, const Matrix& v) {
  return p.apply_inverse(v);
}
inline Matrix apply_sqrt(const NystromPreconditioner& p, const Matrix& g) {
  return p.apply_sqrt(g);
}
inline double estimate_ratio(const NystromPreconditioner& p) { return p.estimate_ratio(); }

}  // namespace sorfgp
