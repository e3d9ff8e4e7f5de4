#include "gp/tuning.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>

#include "solvers/gram.hpp"
#include "util/error.hpp"

namespace sorfgp {

const char* to_string(TuneMethod m) {
  switch (m) {
    case TuneMethod::Grid: return "grid";
    case TuneMethod::Bayes: return "bayes";
    case TuneMethod::ApproxMll: return "approx_mll";
  }
  return "unknown";
}

TuneMethod parse_tune_method(const std::string& name) {
  if (name == "grid") return TuneMethod::Grid;
  if (name == "bayes") return TuneMethod::Bayes;
  if (name == "approx_mll") return TuneMethod::ApproxMll;
  throw ValidationError("unknown tuning strategy '" + name + "' (expected grid, bayes or approx_mll)");
}

std::vector<double> log10_grid(double lo, double hi, std::size_t count) {
  require(count >= 1, "grid needs at least one point");
  require(std::isfinite(lo) && std::isfinite(hi) && lo <= hi, "grid bounds must satisfy lo <= hi");
  std::vector<double> out(count);
  for (std::size_t i = 0; i < count; ++i) {
    const double t = count == 1 ? 0.0 : static_cast<double>(i) / static_cast<double>(count - 1);
    out[i] = std::pow(10.0, lo + t * (hi - lo));
  }
  return out;
}

namespace {

void check_grid(const std::vector<double>& g, const char* name) {
  if (g.empty()) throw ValidationError(std::string(name) + " grid is empty");
  for (double v : g) {
    if (!(v > 0.0) || !std::isfinite(v)) {
      throw ValidationError(std::string(name) + " grid values must be finite and > 0");
    }
  }
}

std::vector<double> sigma_list(const FeatureMapSpec& family, const std::vector<double>& sigmas) {
  if (!family.has_sigma()) return {family.hyper.sigma};
  check_grid(sigmas, "sigma");
  return sigmas;
}

void push_eval(TuneResult& r, const Hyperparams& h, double nmll) {
  if (r.trace.empty() || nmll < r.best_nmll) {
    r.best = h;
    r.best_nmll = nmll;
  }
  r.trace.push_back({h, nmll});
}

}  // namespace

TuneResult tune_grid(const DataSource& data, const FeatureMapSpec& family,
                     const std::vector<double>& sigma_values,
                     const std::vector<double>& lambda_grid,
                     const std::vector<double>& beta_grid) {
  check_grid(lambda_grid, "lambda");
  check_grid(beta_grid, "beta");
  TuneResult result;
  result.method = TuneMethod::Grid;
  for (double sigma : sigma_list(family, sigma_values)) {
    FeatureMapSpec s = unit_amplitude(family);
    s.hyper.sigma = sigma;
    MappedFeatureStream stream(data, FeatureMap(s));
    const NmllEvaluator ev = NmllEvaluator::from_stream(stream);
    for (double lambda : lambda_grid) {
      for (double beta : beta_grid) {
        push_eval(result, {lambda, beta, sigma}, ev.evaluate(lambda, beta).total);
      }
    }
  }
  return result;
}

TuneResult tune_approx(const DataSource& data, const FeatureMapSpec& family,
                       const std::vector<double>& sigma_values,
                       const std::vector<double>& lambda_grid,
                       const std::vector<double>& beta_grid, const ApproxNmllOptions& opts) {
  check_grid(lambda_grid, "lambda");
  check_grid(beta_grid, "beta");
  TuneResult result;
  result.method = TuneMethod::ApproxMll;
  for (double sigma : sigma_list(family, sigma_values)) {
    for (double beta : beta_grid) {
      FeatureMapSpec s = family;
      s.hyper.sigma = sigma;
      s.hyper.beta = beta;
      MappedFeatureStream stream(data, FeatureMap(s));
      for (double lambda : lambda_grid) {
        push_eval(result, {lambda, beta, sigma}, nmll_approx(stream, lambda, opts).total);
      }
    }
  }
  return result;
}

// ---------------------------------------------------------------------------

double MaternSurrogate::kernel(double distance, double lengthscale, double amplitude) {
  const double s = std::sqrt(5.0) * distance / lengthscale;
  return amplitude * (1.0 + s + s * s / 3.0) * std::exp(-s);
}

MaternSurrogate::MaternSurrogate(Matrix points, Vector values, double lengthscale, double jitter)
    : x_(std::move(points)) {
  const auto n = x_.rows();
  require(n >= 1 && values.size() == n, "surrogate: need one value per point");
  require(n <= 500, "surrogate: at most 500 points");
  require(values.allFinite(), "surrogate: values must be finite");
  y_mean_ = values.mean();
  const double var = (values.array() - y_mean_).square().mean();
  y_scale_ = var > 0.0 ? std::sqrt(var) : 1.0;
  y_ = (values.array() - y_mean_) / y_scale_;

  double start_jitter = jitter > 0.0 ? jitter : 1e-10;
  auto fit_at = [&](double ls) {
    for (double j = start_jitter; j <= 1e-2; j *= 10.0) {
      if (factorize(ls, j)) return true;
    }
    return false;
  };

  if (lengthscale > 0.0) {
    if (!fit_at(lengthscale)) throw NumericalError("surrogate kernel matrix is singular");
    return;
  }
  double span = 0.0;
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = i + 1; j < n; ++j) span = std::max(span, (x_.row(i) - x_.row(j)).norm());
  if (span == 0.0) span = 1.0;
  double best_ls = 0.0;
  double best_ll = -std::numeric_limits<double>::infinity();
  for (int k = 0; k < 30; ++k) {
    const double ls = span * std::pow(10.0, -2.0 + 2.3 * k / 29.0);
    if (!fit_at(ls)) continue;
    const double ll = log_marginal();
    if (ll > best_ll) {
      best_ll = ll;
      best_ls = ls;
    }
  }
  if (best_ls == 0.0 || !fit_at(best_ls)) throw NumericalError("surrogate kernel matrix is singular");
}

Matrix MaternSurrogate::cross(const Matrix& a, const Matrix& b) const {
  Matrix k(a.rows(), b.rows());
  for (Eigen::Index i = 0; i < a.rows(); ++i)
    for (Eigen::Index j = 0; j < b.rows(); ++j)
      k(i, j) = kernel((a.row(i) - b.row(j)).norm(), lengthscale_);
  return k;
}

bool MaternSurrogate::factorize(double lengthscale, double jitter) {
  lengthscale_ = lengthscale;
  Matrix k = cross(x_, x_);
  k.diagonal().array() += jitter;
  Eigen::LLT<Matrix> llt(k);
  if (llt.info() != Eigen::Success) return false;
  chol_ = llt.matrixL();
  alpha_ = llt.solve(y_);
  jitter_ = jitter;
  return alpha_.allFinite();
}

double MaternSurrogate::log_marginal() const {
  const double logdet = 2.0 * chol_.diagonal().array().log().sum();
  return -0.5 * y_.dot(alpha_) - 0.5 * logdet -
         0.5 * static_cast<double>(y_.size()) * std::log(2.0 * std::numbers::pi);
}

Vector MaternSurrogate::mean(const Matrix& x) const {
  require(x.cols() == x_.cols(), "surrogate: dimension mismatch");
  return (cross(x, x_) * alpha_).array() * y_scale_ + y_mean_;
}

Vector MaternSurrogate::stddev(const Matrix& x) const {
  require(x.cols() == x_.cols(), "surrogate: dimension mismatch");
  const Matrix v = chol_.triangularView<Eigen::Lower>().solve(cross(x_, x));
  const Vector var = (1.0 - v.colwise().squaredNorm().array()).max(0.0);
  return var.array().sqrt() * y_scale_;
}

Matrix MaternSurrogate::sample(const Matrix& x, std::size_t count, CounterRng& rng) const {
  require(x.cols() == x_.cols(), "surrogate: dimension mismatch");
  const auto q = x.rows();
  const Matrix v = chol_.triangularView<Eigen::Lower>().solve(cross(x_, x));
  Matrix cov = cross(x, x) - v.transpose() * v;
  cov = 0.5 * (cov + cov.transpose()).eval();
  Matrix root;
  bool ok = false;
  for (double j = 1e-10; j <= 1e-4 && !ok; j *= 10.0) {
    Matrix c = cov;
    c.diagonal().array() += j;
    Eigen::LLT<Matrix> llt(c);
    if (llt.info() == Eigen::Success) {
      root = llt.matrixL();
      ok = true;
    }
  }
  if (!ok) {
    Eigen::SelfAdjointEigenSolver<Matrix> eig(cov);
    root = eig.eigenvectors() * eig.eigenvalues().cwiseMax(0.0).cwiseSqrt().asDiagonal();
  }
  const Vector mu = mean(x);
  Matrix out(q, static_cast<Eigen::Index>(count));
  Vector eps(q);
  for (std::size_t s = 0; s < count; ++s) {
    for (Eigen::Index i = 0; i < q; ++i) eps[i] = rng.normal();
    out.col(static_cast<Eigen::Index>(s)) = mu + y_scale_ * (root * eps);
  }
  return out;
}

// ---------------------------------------------------------------------------

BayesTrace bayes_minimize(const std::function<double(double)>& objective,
                          const BayesOptions& opts) {
  const double lo = opts.log10_sigma_lo;
  const double hi = opts.log10_sigma_hi;
  if (!(std::isfinite(lo) && std::isfinite(hi) && lo < hi)) {
    throw ValidationError("bayes tuning needs finite bounds with lo < hi");
  }
  require(opts.n_init >= 5, "bayes tuning needs at least 5 initial evaluations");
  require(opts.n_candidates >= 1 && opts.m_samples >= 1, "bayes tuning needs candidates and samples");

  BayesTrace t;
  auto record = [&](double x) {
    const double y = objective(x);
    if (!std::isfinite(y)) throw NumericalError("tuning objective is not finite at " + std::to_string(x));
    t.x.push_back(x);
    t.y.push_back(y);
    if (t.best.empty() || y < t.best_y) {
      t.best_x = x;
      t.best_y = y;
    }
    t.best.push_back(t.best_y);
  };

  CounterRng init_rng(opts.seed, make_stream(StreamTag::Tuning, 0));
  for (std::size_t i = 0; i < opts.n_init; ++i) record(lo + (hi - lo) * init_rng.uniform());

  for (std::size_t iter = 0; t.x.size() < opts.maxiter; ++iter) {
    Matrix pts(static_cast<Eigen::Index>(t.x.size()), 1);
    for (std::size_t i = 0; i < t.x.size(); ++i) pts(static_cast<Eigen::Index>(i), 0) = t.x[i];
    const MaternSurrogate sur(pts, Eigen::Map<const Vector>(t.y.data(), static_cast<Eigen::Index>(t.y.size())));

    CounterRng rng(opts.seed, make_stream(StreamTag::Acquisition, iter));
    Matrix cand(static_cast<Eigen::Index>(opts.n_candidates), 1);
    for (Eigen::Index i = 0; i < cand.rows(); ++i) cand(i, 0) = lo + (hi - lo) * rng.uniform();
    const Matrix draws = sur.sample(cand, opts.m_samples, rng);
    Eigen::Index r, c;
    draws.minCoeff(&r, &c);
    const double x_new = cand(r, 0);
    if (std::abs(x_new - t.best_x) < opts.tol) break;
    record(x_new);
  }
  return t;
}

TuneResult tune_bayes(const DataSource& data, const FeatureMapSpec& family,
                      const BayesOptions& opts, const std::vector<double>& lambda_grid,
                      const std::vector<double>& beta_grid) {
  if (!family.has_sigma()) {
    throw ValidationError(std::string("bayes tuning searches sigma; kernel ") +
                          to_string(family.kernel) + " has none, use grid tuning");
  }
  check_grid(lambda_grid, "lambda");
  check_grid(beta_grid, "beta");
  TuneResult result;
  result.method = TuneMethod::Bayes;
  auto objective = [&](double log10_sigma) {
    FeatureMapSpec s = unit_amplitude(family);
    s.hyper.sigma = std::pow(10.0, log10_sigma);
    MappedFeatureStream stream(data, FeatureMap(s));
    const NmllEvaluator ev = NmllEvaluator::from_stream(stream);
    TuneEval best{{lambda_grid[0], beta_grid[0], s.hyper.sigma}, std::numeric_limits<double>::infinity()};
    for (double lambda : lambda_grid) {
      for (double beta : beta_grid) {
        const double v = ev.evaluate(lambda, beta).total;
        if (v < best.nmll) best = {{lambda, beta, s.hyper.sigma}, v};
      }
    }
    push_eval(result, best.hyper, best.nmll);
    return best.nmll;
  };
  bayes_minimize(objective, opts);
  return result;
}

}  // namespace sorfgp
