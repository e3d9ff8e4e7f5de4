#include "solvers/cg.hpp"

#include <cmath>
#include <limits>

#include <Eigen/Eigenvalues>

#include "util/error.hpp"
#include "util/rng.hpp"

namespace sorfgp {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

struct PcgResult {
  Matrix x;
  Vector r0z0;  // initial r^T M^-1 r per column
  SolveReport report;
};

// Multi-column (preconditioned) CG. Columns freeze individually once their
// residual drops below tol relative to their initial residual.
PcgResult run_pcg(const GramSystem& sys, const Matrix& b, const NystromPreconditioner* precond,
                  const SolveOptions& opts) {
  require(opts.tol > 0.0, "cg: tol must be > 0");
  require(opts.maxiter >= 1, "cg: maxiter must be >= 1");
  const auto m = b.rows();
  const auto k = b.cols();
  auto minv = [&](const Matrix& v) -> Matrix { return precond ? precond->apply_inverse(v) : v; };

  PcgResult out;
  SolveReport& rep = out.report;
  out.x = Matrix::Zero(m, k);
  Matrix r = b;
  Matrix z = minv(r);
  Matrix p = z;
  Vector rz(k);
  Vector r0(k);
  std::vector<bool> active(static_cast<std::size_t>(k), true);
  rep.column_iterations.assign(static_cast<std::size_t>(k), 0);
  for (Eigen::Index j = 0; j < k; ++j) {
    rz[j] = r.col(j).dot(z.col(j));
    r0[j] = r.col(j).norm();
    if (r0[j] == 0.0) active[static_cast<std::size_t>(j)] = false;
  }
  out.r0z0 = rz;

  std::vector<Eigen::Index> idx;
  for (std::size_t it = 0; it < opts.maxiter; ++it) {
    idx.clear();
    for (Eigen::Index j = 0; j < k; ++j)
      if (active[static_cast<std::size_t>(j)]) idx.push_back(j);
    if (idx.empty()) break;

    Matrix pa(m, static_cast<Eigen::Index>(idx.size()));
    for (std::size_t a = 0; a < idx.size(); ++a) pa.col(static_cast<Eigen::Index>(a)) = p.col(idx[a]);
    const Matrix ap = sys.matvec(pa);

    std::vector<double> alpha_row(static_cast<std::size_t>(k), kNaN);
    std::vector<double> beta_row(static_cast<std::size_t>(k), kNaN);
    std::vector<double> res_row(static_cast<std::size_t>(k), kNaN);
    std::vector<Eigen::Index> still;
    for (std::size_t a = 0; a < idx.size(); ++a) {
      const Eigen::Index j = idx[a];
      const auto ai = static_cast<Eigen::Index>(a);
      const double pap = p.col(j).dot(ap.col(ai));
      if (!(pap > 0.0) || !std::isfinite(pap)) {
        throw NumericalError("conjugate gradients broke down at iteration " + std::to_string(it) +
                             ", column " + std::to_string(j) +
                             " (system not positive definite)");
      }
      const double alpha = rz[j] / pap;
      out.x.col(j) += alpha * p.col(j);
      r.col(j) -= alpha * ap.col(ai);
      alpha_row[static_cast<std::size_t>(j)] = alpha;
      const double res = r.col(j).norm() / r0[j];
      res_row[static_cast<std::size_t>(j)] = res;
      rep.column_iterations[static_cast<std::size_t>(j)] = it + 1;
      if (res <= opts.tol) {
        active[static_cast<std::size_t>(j)] = false;
      } else {
        still.push_back(j);
      }
    }
    if (!still.empty()) {
      Matrix rs(m, static_cast<Eigen::Index>(still.size()));
      for (std::size_t a = 0; a < still.size(); ++a) rs.col(static_cast<Eigen::Index>(a)) = r.col(still[a]);
      const Matrix zs = minv(rs);
      for (std::size_t a = 0; a < still.size(); ++a) {
        const Eigen::Index j = still[a];
        const auto ai = static_cast<Eigen::Index>(a);
        const double rz_new = r.col(j).dot(zs.col(ai));
        const double beta = rz_new / rz[j];
        rz[j] = rz_new;
        p.col(j) = zs.col(ai) + beta * p.col(j);
        beta_row[static_cast<std::size_t>(j)] = beta;
      }
    }
    rep.alphas.push_back(std::move(alpha_row));
    rep.betas.push_back(std::move(beta_row));
    rep.residual_history.push_back(std::move(res_row));
    rep.iterations = it + 1;
  }
  rep.converged = true;
  for (bool a : active) rep.converged = rep.converged && !a;
  return out;
}

}  // namespace

SolveReport cg_solve(const GramSystem& sys, const Vector& rhs, const SolveOptions& opts,
                     const NystromPreconditioner* precond) {
  if (static_cast<std::size_t>(rhs.size()) != sys.dim()) {
    throw ValidationError("cg_solve: right-hand side has length " + std::to_string(rhs.size()) +
                          ", system has " + std::to_string(sys.dim()));
  }
  PcgResult res = run_pcg(sys, rhs, precond, opts);
  res.report.weights = res.x.col(0);
  return std::move(res.report);
}

Matrix lanczos_tridiagonal(const SolveReport& report, std::size_t col) {
  const std::size_t steps = report.column_iterations.at(col);
  Matrix t = Matrix::Zero(static_cast<Eigen::Index>(steps), static_cast<Eigen::Index>(steps));
  for (std::size_t i = 0; i < steps; ++i) {
    const double a = report.alphas[i][col];
    double d = 1.0 / a;
    if (i > 0) d += report.betas[i - 1][col] / report.alphas[i - 1][col];
    t(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(i)) = d;
    if (i + 1 < steps) {
      const double off = std::sqrt(report.betas[i][col]) / a;
      t(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(i + 1)) = off;
      t(static_cast<Eigen::Index>(i + 1), static_cast<Eigen::Index>(i)) = off;
    }
  }
  return t;
}

SolveReport pcg_slq_solve(const GramSystem& sys, const Vector& rhs_zty,
                          const NystromPreconditioner& precond, std::size_t n_v,
                          const SolveOptions& opts, std::uint64_t seed) {
  require(n_v >= 1, "pcg_slq_solve: n_v must be >= 1");
  if (static_cast<std::size_t>(rhs_zty.size()) != sys.dim() || precond.dim() != sys.dim()) {
    throw ValidationError("pcg_slq_solve: dimension mismatch between system, rhs and preconditioner");
  }
  if (std::abs(precond.lambda() - sys.lambda()) > 1e-12 * sys.lambda()) {
    throw ValidationError("pcg_slq_solve: preconditioner was built for a different lambda");
  }
  const auto m = static_cast<Eigen::Index>(sys.dim());
  // Rademacher base vectors: identity covariance like Gaussians, but exact
  // when the whitened system is a multiple of I.
  Matrix g(m, static_cast<Eigen::Index>(n_v));
  for (std::size_t j = 0; j < n_v; ++j) {
    CounterRng rng(seed, make_stream(StreamTag::Probe, j));
    for (Eigen::Index i = 0; i < m; ++i) g(i, static_cast<Eigen::Index>(j)) = rng.rademacher();
  }
  Matrix b(m, static_cast<Eigen::Index>(n_v + 1));
  b.col(0) = rhs_zty;
  b.rightCols(static_cast<Eigen::Index>(n_v)) = precond.apply_sqrt(g);

  PcgResult res = run_pcg(sys, b, &precond, opts);
  SolveReport& rep = res.report;
  rep.weights = res.x.col(0);
  rep.num_probes = n_v;

  // Lanczos on P^-1/2 A P^-1/2 started from g; r0^T M^-1 r0 = |g|^2.
  double total = 0.0;
  for (std::size_t j = 1; j <= n_v; ++j) {
    const Matrix t = lanczos_tridiagonal(rep, j);
    if (t.rows() == 0) {
      throw NumericalError("stochastic Lanczos breakdown: probe " + std::to_string(j - 1) +
                           " produced no iterations");
    }
    Eigen::SelfAdjointEigenSolver<Matrix> eig(t);
    const Vector& theta = eig.eigenvalues();
    double quad = 0.0;
    for (Eigen::Index q = 0; q < theta.size(); ++q) {
      if (!(theta[q] > 0.0)) {
        throw NumericalError("stochastic Lanczos breakdown: non-positive Ritz value for probe " +
                             std::to_string(j - 1));
      }
      const double tau = eig.eigenvectors()(0, q);
      quad += tau * tau * std::log(theta[q]);
    }
    total += res.r0z0[static_cast<Eigen::Index>(j)] * quad;
  }
  rep.logdet_estimate = total / static_cast<double>(n_v) + precond.logdet();
  return std::move(rep);
}

DenseEigSolution dense_eig_solve(const Matrix& gram, const Vector& zty, double y_sq,
                                 double lambda) {
  (void)y_sq;
  const auto m = gram.rows();
  if (static_cast<std::size_t>(m) > kDenseGuard) {
    throw ValidationError("dense solve refused: " + std::to_string(m) + " features exceeds " +
                          std::to_string(kDenseGuard) + "; use the pcg solver");
  }
  require(gram.cols() == m && zty.size() == m, "dense_eig_solve: dimension mismatch");
  require(lambda > 0.0, "lambda must be > 0");
  const double delta = 1e-5 * std::max(0.0, gram.diagonal().maxCoeff());
  Matrix shifted = gram;
  shifted.diagonal().array() += delta;
  Eigen::SelfAdjointEigenSolver<Matrix> eig(shifted);
  if (eig.info() != Eigen::Success) throw NumericalError("eigendecomposition failed");
  DenseEigSolution out;
  out.eigenvalues = (eig.eigenvalues().reverse().array() - delta).max(0.0);
  out.eigenvectors = eig.eigenvectors().rowwise().reverse();
  out.rotated = out.eigenvectors.transpose() * zty;
  const Vector coef = out.rotated.array() / (out.eigenvalues.array() + lambda * lambda);
  out.weights = out.eigenvectors * coef;
  return out;
}

}  // namespace sorfgp
