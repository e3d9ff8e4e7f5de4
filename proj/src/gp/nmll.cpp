#include "gp/nmll.hpp"

#include <cmath>
#include <numbers>

#include "solvers/cg.hpp"
#include "util/error.hpp"
#include "util/rng.hpp"

namespace sorfgp {

NmllEvaluator NmllEvaluator::from_moments(const GramMoments& q) {
  NmllEvaluator out;
  const DenseEigSolution sol = dense_eig_solve(q.gram, q.zty, q.yty, 1.0);
  out.eigenvalues_ = sol.eigenvalues;
  out.rotated_ = sol.rotated;
  out.yty_ = q.yty;
  out.rows_ = q.rows;
  return out;
}

NmllEvaluator NmllEvaluator::from_stream(const FeatureStream& q_stream) {
  if (q_stream.num_features() > kDenseGuard) {
    throw ValidationError("closed-form NMLL refused: " + std::to_string(q_stream.num_features()) +
                          " features exceeds " + std::to_string(kDenseGuard) +
                          "; use the approximate NMLL");
  }
  return from_moments(accumulate_moments(q_stream));
}

NmllTerms NmllEvaluator::evaluate(double lambda, double beta) const {
  if (!(lambda > 0.0) || !(beta > 0.0)) {
    throw ValidationError("NMLL needs lambda > 0 and beta > 0");
  }
  const double l2 = lambda * lambda;
  const double b2 = beta * beta;
  const auto n = static_cast<double>(rows_);
  const auto m = static_cast<double>(eigenvalues_.size());
  const auto denom = (b2 * eigenvalues_.array() + l2).eval();
  NmllTerms t;
  t.performance = -(b2 / (2.0 * l2)) * (rotated_.array().square() / denom).sum() + yty_ / (2.0 * l2);
  t.logdet = (n - m) * std::log(lambda) + 0.5 * denom.log().sum();
  t.constant = 0.5 * n * std::log(2.0 * std::numbers::pi);
  t.total = t.performance + t.logdet + t.constant;
  return t;
}

FeatureMapSpec unit_amplitude(const FeatureMapSpec& spec) {
  FeatureMapSpec s = spec;
  s.hyper.beta = 1.0;
  return s;
}

NmllTerms nmll_exact(const DataSource& data, const FeatureMapSpec& spec) {
  spec.validate();
  MappedFeatureStream stream(data, FeatureMap(unit_amplitude(spec)));
  return NmllEvaluator::from_stream(stream).evaluate(spec.hyper.lambda, spec.hyper.beta);
}

NmllTerms nmll_approx(const FeatureStream& stream, double lambda, const ApproxNmllOptions& opts) {
  require(lambda > 0.0, "lambda must be > 0");
  GramSystem sys(stream, lambda);
  Vector zty;
  double yty;
  sys.rhs(zty, yty);
  const std::size_t m = stream.num_features();
  const NystromPreconditioner pre = build_preconditioner(
      stream, std::min(opts.precond_rank, m), lambda, opts.variant,
      derive_seed(opts.seed, SeedPurpose::Preconditioner));
  const SolveReport rep = pcg_slq_solve(sys, zty, pre, opts.n_v, {opts.tol, opts.maxiter},
                                        derive_seed(opts.seed, SeedPurpose::Probes));
  const double l2 = lambda * lambda;
  const auto n = static_cast<double>(stream.num_rows());
  NmllTerms t;
  // y^T (Z Z^T + l^2 I)^-1 y = (y^T y - (Z^T y)^T w) / l^2
  t.performance = 0.5 * (yty - zty.dot(rep.weights)) / l2;
  t.logdet = (n - static_cast<double>(m)) * std::log(lambda) + 0.5 * *rep.logdet_estimate;
  t.constant = 0.5 * n * std::log(2.0 * std::numbers::pi);
  t.total = t.performance + t.logdet + t.constant;
  return t;
}

NmllTerms nmll_approx(const DataSource& data, const FeatureMapSpec& spec,
                      const ApproxNmllOptions& opts) {
  spec.validate();
  MappedFeatureStream stream(data, FeatureMap(spec));
  return nmll_approx(stream, spec.hyper.lambda, opts);
}

}  // namespace sorfgp
