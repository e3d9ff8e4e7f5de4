#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "data/dataset.hpp"
#include "features/feature_map.hpp"
#include "gp/nmll.hpp"
#include "util/linalg.hpp"
#include "util/rng.hpp"

namespace sorfgp {

enum class TuneMethod : std::uint32_t { Grid = 0, Bayes = 1, ApproxMll = 2 };

const char* to_string(TuneMethod m);
TuneMethod parse_tune_method(const std::string& name);

struct TuneEval {
  Hyperparams hyper;
  double nmll = 0.0;
};

struct TuneResult {
  Hyperparams best;
  double best_nmll = 0.0;
  std::vector<TuneEval> trace;
  TuneMethod method = TuneMethod::Grid;
};

/// `count` values evenly spaced in log10 between lo and hi, inclusive.
std::vector<double> log10_grid(double lo, double hi, std::size_t count);

/// Exhaustive search: per sigma one pass and one eigendecomposition, then
/// every (lambda, beta) pair in closed form. Kernels without sigma ignore
/// sigma_values (pass one value or none).
TuneResult tune_grid(const DataSource& data, const FeatureMapSpec& family,
                     const std::vector<double>& sigma_values,
                     const std::vector<double>& lambda_grid,
                     const std::vector<double>& beta_grid);

/// Same grid evaluated with the PCG + SLQ estimate instead of the closed form.
TuneResult tune_approx(const DataSource& data, const FeatureMapSpec& family,
                       const std::vector<double>& sigma_values,
                       const std::vector<double>& lambda_grid,
                       const std::vector<double>& beta_grid, const ApproxNmllOptions& opts);

/// Exact GP with a Matern-5/2 kernel on standardized values, used as the
/// surrogate in Bayesian tuning.
class MaternSurrogate {
 public:
  /// lengthscale <= 0 selects it by marginal likelihood over a grid.
  MaternSurrogate(Matrix points, Vector values, double lengthscale = 0.0, double jitter = 1e-10);

  static double kernel(double distance, double lengthscale, double amplitude = 1.0);

  Vector mean(const Matrix& x) const;
  Vector stddev(const Matrix& x) const;
  /// `count` joint posterior draws at the rows of x (one column per draw).
  Matrix sample(const Matrix& x, std::size_t count, CounterRng& rng) const;

  double lengthscale() const { return lengthscale_; }
  double jitter() const { return jitter_; }

 private:
  Matrix cross(const Matrix& a, const Matrix& b) const;
  bool factorize(double lengthscale, double jitter);
  double log_marginal() const;

  Matrix x_;
  Vector y_;  // standardized
  double y_mean_ = 0.0;
  double y_scale_ = 1.0;
  double lengthscale_ = 1.0;
  double jitter_ = 0.0;
  Matrix chol_;
  Vector alpha_;
};

inline MaternSurrogate exact_matern_surrogate(const Matrix& points, const Vector& values) {
  return MaternSurrogate(points, values);
}

struct BayesOptions {
  double log10_sigma_lo = -2.0;
  double log10_sigma_hi = 1.0;
  std::size_t n_init = 5;
  std::size_t maxiter = 30;  // total objective evaluations
  std::size_t n_candidates = 500;
  std::size_t m_samples = 1;
  double tol = 1e-3;          // stop when a proposal lands this close to the incumbent
  std::uint64_t seed = 0;
};

struct BayesTrace {
  std::vector<double> x;     // evaluated log10 sigma
  std::vector<double> y;     // objective values
  std::vector<double> best;  // incumbent value after each evaluation
  double best_x = 0.0;
  double best_y = 0.0;
};

/// Thompson-sampling minimization of a scalar function over [lo, hi].
BayesTrace bayes_minimize(const std::function<double(double)>& objective,
                          const BayesOptions& opts);

/// Bayesian search over log10 sigma; each evaluation minimizes (lambda, beta)
/// over the given grids in closed form.
TuneResult tune_bayes(const DataSource& data, const FeatureMapSpec& family,
                      const BayesOptions& opts, const std::vector<double>& lambda_grid,
                      const std::vector<double>& beta_grid);

}  // namespace sorfgp
