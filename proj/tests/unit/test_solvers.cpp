#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

#include "analysis/synthetic.hpp"
#include "features/feature_map.hpp"
#include "oracles.hpp"
#include "solvers/cg.hpp"
#include "solvers/gram.hpp"
#include "solvers/nystrom.hpp"
#include "util/error.hpp"
#include "util/rng.hpp"

using namespace sorfgp;

namespace {

DenseFeatureStream rbf_stream(std::size_t n, std::size_t d, std::size_t m, double sigma,
                              std::uint64_t seed, std::size_t chunk = 300) {
  const auto data = make_gp_regression(n, d, sigma, 1.0, 0.1, seed);
  FeatureMapSpec spec;
  spec.kernel = KernelKind::Rbf;
  spec.input_width = d;
  spec.num_rffs = m;
  spec.seed = seed + 1;
  spec.hyper = {0.1, 1.0, sigma};
  return DenseFeatureStream(FeatureMap(spec).transform(data.x), data.y, chunk);
}

Matrix dense_a(const DenseFeatureStream& s, double lambda) {
  Matrix a = s.features().transpose() * s.features();
  a.diagonal().array() += lambda * lambda;
  return a;
}

Matrix dense_p(const NystromPreconditioner& p) {
  const double l2 = p.lambda() * p.lambda();
  const Matrix& u = p.u();
  const Vector d = (p.eigenvalues().array() + l2) / (p.beta_l() + l2);
  return u * d.asDiagonal() * u.transpose() +
         (Matrix::Identity(u.rows(), u.rows()) - u * u.transpose());
}

Vector ranks(const std::vector<double>& v) {
  Vector r(static_cast<Eigen::Index>(v.size()));
  for (std::size_t i = 0; i < v.size(); ++i) {
    double less = 0.0, equal = 0.0;
    for (double w : v) {
      less += w < v[i];
      equal += w == v[i];
    }
    r[static_cast<Eigen::Index>(i)] = less + 0.5 * (equal + 1.0);
  }
  return r;
}

double rank_corr(const std::vector<double>& a, const std::vector<double>& b) {
  Vector ra = ranks(a), rb = ranks(b);
  ra.array() -= ra.mean();
  rb.array() -= rb.mean();
  return ra.dot(rb) / (ra.norm() * rb.norm());
}

}  // namespace

TEST(Gram, MatvecMatchesDense) {
  const auto s = rbf_stream(500, 3, 64, 1.0, 1, 128);
  const GramSystem sys(s, 0.3);
  CounterRng rng(2, 0);
  Matrix v(64, 3);
  for (Eigen::Index i = 0; i < v.size(); ++i) v.data()[i] = rng.normal();
  const Matrix ref = dense_a(s, 0.3) * v;
  EXPECT_LT((gram_matvec(sys, v) - ref).cwiseAbs().maxCoeff(), 1e-9 * ref.cwiseAbs().maxCoeff());
  EXPECT_EQ(sys.passes(), 1u);
  EXPECT_EQ(gram_matvec(sys, Matrix::Zero(64, 1)).cwiseAbs().maxCoeff(), 0.0);
}

TEST(Gram, SymmetricOperator) {
  const auto s = rbf_stream(300, 4, 32, 0.7, 3, 100);
  const GramSystem sys(s, 0.1);
  CounterRng rng(3, 0);
  Vector a(32), b(32);
  for (Eigen::Index i = 0; i < 32; ++i) {
    a[i] = rng.normal();
    b[i] = rng.normal();
  }
  EXPECT_NEAR(a.dot(gram_matvec(sys, b).col(0)), b.dot(gram_matvec(sys, a).col(0)), 1e-9);
}

TEST(Gram, MomentsMatchDense) {
  const auto s = rbf_stream(400, 2, 16, 1.0, 5, 70);
  const auto mom = accumulate_moments(s);
  EXPECT_EQ(mom.rows, 400u);
  const Matrix g = s.features().transpose() * s.features();
  EXPECT_LT((Matrix(mom.gram.selfadjointView<Eigen::Lower>()) - g).cwiseAbs().maxCoeff(), 1e-9);
  EXPECT_NEAR(mom.yty, s.targets().squaredNorm(), 1e-9);
}

TEST(Cg, ZeroRhsConvergesImmediately) {
  const auto s = rbf_stream(100, 2, 16, 1.0, 1);
  const GramSystem sys(s, 0.5);
  const auto rep = cg_solve(sys, Vector::Zero(16));
  EXPECT_TRUE(rep.converged);
  EXPECT_LE(rep.iterations, 1u);
  EXPECT_EQ(rep.weights.cwiseAbs().maxCoeff(), 0.0);
}

TEST(Cg, MatchesDenseSolve) {
  const auto s = rbf_stream(2000, 4, 256, 1.0, 7, 500);
  const GramSystem sys(s, 0.5);
  Vector zty;
  double yty;
  sys.rhs(zty, yty);
  const auto rep = cg_solve(sys, zty, {1e-10, 2000});
  ASSERT_TRUE(rep.converged);
  const Vector ref = dense_a(s, 0.5).ldlt().solve(zty);
  EXPECT_LT((rep.weights - ref).norm() / ref.norm(), 1e-8);
}

TEST(Cg, IterationsGrowAsToleranceTightens) {
  const auto s = rbf_stream(1000, 4, 128, 1.0, 8);
  const GramSystem sys(s, 0.05);
  Vector zty;
  double yty;
  sys.rhs(zty, yty);
  std::size_t prev = 0;
  for (double tol : {1e-2, 1e-4, 1e-6, 1e-8}) {
    const auto rep = cg_solve(sys, zty, {tol, 5000});
    EXPECT_GE(rep.iterations, prev);
    prev = rep.iterations;
  }
}

TEST(Cg, NonConvergenceIsReported) {
  const auto s = rbf_stream(1000, 4, 128, 1.0, 8);
  const GramSystem sys(s, 0.01);
  Vector zty;
  double yty;
  sys.rhs(zty, yty);
  const auto rep = cg_solve(sys, zty, {1e-12, 3});
  EXPECT_FALSE(rep.converged);
  EXPECT_EQ(rep.iterations, 3u);
}

TEST(Nystrom, FullRankPcgConvergesFast) {
  const auto s = rbf_stream(1500, 3, 64, 1.0, 9);
  const GramSystem sys(s, 0.01);
  Vector zty;
  double yty;
  sys.rhs(zty, yty);
  for (auto v : {SketchVariant::Gauss, SketchVariant::Srht, SketchVariant::Srht2}) {
    const auto p = build_preconditioner(s, 64, 0.01, v, 3);
    const auto rep = cg_solve(sys, zty, {1e-6, 500}, &p);
    EXPECT_TRUE(rep.converged) << to_string(v);
    EXPECT_LE(rep.iterations, 3u) << to_string(v);
  }
}

TEST(Nystrom, ZeroFeaturesGiveIdentity) {
  const DenseFeatureStream s(RowMatrix::Zero(50, 16), Vector::Ones(50), 20);
  const auto p = build_preconditioner(s, 4, 1.0, SketchVariant::Gauss, 1);
  EXPECT_EQ(p.eigenvalues().cwiseAbs().maxCoeff(), 0.0);
  CounterRng rng(1, 0);
  Matrix v(16, 2);
  for (Eigen::Index i = 0; i < v.size(); ++i) v.data()[i] = rng.normal();
  EXPECT_LT((p.apply_inverse(v) - v).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_LT((p.apply_sqrt(v) - v).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Nystrom, TwoPassNearOptimalLowRankError) {
  const auto s = rbf_stream(2000, 3, 128, 1.0, 10);
  const Matrix g = s.features().transpose() * s.features();
  Eigen::SelfAdjointEigenSolver<Matrix> eig(g);
  const double opt = eig.eigenvalues()[128 - 33];  // (L+1)-th largest
  const auto p = build_preconditioner(s, 32, 0.1, SketchVariant::Srht2, 4);
  const Matrix approx = p.u() * p.eigenvalues().asDiagonal() * p.u().transpose();
  Eigen::SelfAdjointEigenSolver<Matrix> err(Matrix(g - approx));
  EXPECT_LE(err.eigenvalues().cwiseAbs().maxCoeff(), 3.0 * opt);
}

TEST(Nystrom, SinglePassMatchesNystromFormula) {
  // Y (Omega^T Y)^-1 Y^T with Y = A Omega, for the test matrix each variant uses.
  const auto s = rbf_stream(2000, 3, 128, 1.0, 10);
  const Matrix g = s.features().transpose() * s.features();
  for (auto v : {SketchVariant::Gauss, SketchVariant::Srht}) {
    const auto p = build_preconditioner(s, 32, 0.1, v, 4);
    const Matrix approx = p.u() * p.eigenvalues().asDiagonal() * p.u().transpose();
    Matrix omega;
    if (v == SketchVariant::Gauss) {
      CounterRng rng(4, make_stream(StreamTag::NystromGauss, 0));
      Matrix r(128, 32);
      for (Eigen::Index j = 0; j < 32; ++j)
        for (Eigen::Index i = 0; i < 128; ++i) r(i, j) = rng.normal();
      omega = r.householderQr().householderQ() * Matrix::Identity(128, 32);
    } else {
      omega = oracle::dense_srht(SrhtOperator::sample(4, 128, 32)).transpose();
    }
    const Matrix y = g * omega;
    const Matrix ref = y * (omega.transpose() * y).ldlt().solve(y.transpose());
    EXPECT_LT((approx - ref).norm(), 1e-6 * ref.norm()) << to_string(v);
    const Matrix utu = p.u().transpose() * p.u();
    EXPECT_LT((utu - Matrix::Identity(32, 32)).cwiseAbs().maxCoeff(), 1e-10);
  }
}

TEST(Nystrom, InverseSqrtAndLogdetMatchDense) {
  const auto s = rbf_stream(800, 3, 64, 1.0, 11);
  const auto p = build_preconditioner(s, 16, 0.2, SketchVariant::Srht2, 5);
  const Matrix pd = dense_p(p);
  CounterRng rng(5, 0);
  Matrix v(64, 3);
  for (Eigen::Index i = 0; i < v.size(); ++i) v.data()[i] = rng.normal();
  EXPECT_LT((p.apply_inverse(v) - pd.ldlt().solve(v)).cwiseAbs().maxCoeff(), 1e-10);
  const Matrix sq = p.apply_sqrt(Matrix::Identity(64, 64));
  EXPECT_LT((sq * sq.transpose() - pd).cwiseAbs().maxCoeff(), 1e-10);
  EXPECT_LT((p.apply_inverse(p.apply_sqrt(p.apply_sqrt(v))) - v).cwiseAbs().maxCoeff(), 1e-10);
  EXPECT_NEAR(p.logdet(), oracle::logdet_spd(pd), 1e-9);
  // Linearity.
  const Matrix lhs = p.apply_inverse(Matrix(2.0 * v.col(0) - v.col(1)));
  const Matrix rhs = 2.0 * p.apply_inverse(v.col(0)) - p.apply_inverse(v.col(1));
  EXPECT_LT((lhs - rhs).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Nystrom, SampledCovarianceMatchesPreconditioner) {
  const auto s = rbf_stream(500, 2, 32, 1.0, 12);
  const auto p = build_preconditioner(s, 8, 0.3, SketchVariant::Gauss, 6);
  const Matrix pd = dense_p(p);
  CounterRng rng(9, 0);
  Matrix g(32, 100000);
  for (Eigen::Index i = 0; i < g.size(); ++i) g.data()[i] = rng.normal();
  const Matrix x = p.apply_sqrt(g);
  const Matrix cov = x * x.transpose() / static_cast<double>(g.cols());
  EXPECT_LT((cov - pd).cwiseAbs().maxCoeff(), 0.05 * pd.diagonal().maxCoeff());
}

TEST(Nystrom, RatioDecreasesWithRank) {
  const auto s = rbf_stream(1500, 3, 128, 1.0, 13);
  double prev = INFINITY;
  for (std::size_t l : {8, 16, 32, 64}) {
    const auto p = build_preconditioner(s, l, 0.05, SketchVariant::Srht2, 7);
    EXPECT_LE(p.estimate_ratio(), prev * (1.0 + 1e-9));
    prev = p.estimate_ratio();
  }
}

TEST(Nystrom, Validation) {
  const auto s = rbf_stream(100, 2, 16, 1.0, 1);
  EXPECT_THROW(build_preconditioner(s, 17, 0.1, SketchVariant::Gauss, 1), ValidationError);
  EXPECT_THROW(build_preconditioner(s, 0, 0.1, SketchVariant::Gauss, 1), ValidationError);
  EXPECT_THROW(build_preconditioner(s, 4, 0.0, SketchVariant::Gauss, 1), ValidationError);
  EXPECT_EQ(parse_sketch_variant("srht_2"), SketchVariant::Srht2);
  EXPECT_THROW(parse_sketch_variant("fancy"), ValidationError);
}

TEST(Pcg, FewerIterationsThanCgOnIllConditioned) {
  const auto data = make_spectrum_features(3000, 256, 1e6, 3);
  const DenseFeatureStream s(data.x, data.y, 500);
  const GramSystem sys(s, 1e-4);
  Vector zty;
  double yty;
  sys.rhs(zty, yty);
  const auto cg = cg_solve(sys, zty, {1e-6, 5000});
  const auto p = build_preconditioner(s, 128, 1e-4, SketchVariant::Srht2, 1);
  const auto pcg = cg_solve(sys, zty, {1e-6, 5000}, &p);
  EXPECT_TRUE(pcg.converged);
  EXPECT_LT(pcg.iterations, cg.iterations);
}

TEST(Pcg, IterationsTrackRatio) {
  const auto s = rbf_stream(2000, 4, 256, 1.0, 14);
  const double lambda = 1e-2;
  const GramSystem sys(s, lambda);
  Vector zty;
  double yty;
  sys.rhs(zty, yty);
  std::vector<double> iters, ratios;
  for (std::size_t l : {4, 8, 16, 32, 64, 128}) {
    const auto p = build_preconditioner(s, l, lambda, SketchVariant::Srht2, 2);
    const auto rep = cg_solve(sys, zty, {1e-8, 5000}, &p);
    iters.push_back(std::log(static_cast<double>(rep.iterations)));
    ratios.push_back(std::log(p.estimate_ratio()));
  }
  EXPECT_GE(rank_corr(iters, ratios), 0.9);
}

TEST(Slq, LogdetMatchesDense) {
  const auto s = rbf_stream(2000, 3, 512, 1.0, 15, 500);
  const double lambda = 0.3;
  const GramSystem sys(s, lambda);
  Vector zty;
  double yty;
  sys.rhs(zty, yty);
  const auto p = build_preconditioner(s, 128, lambda, SketchVariant::Srht2, 3);
  const auto rep = pcg_slq_solve(sys, zty, p, 25, {1e-5, 500}, 4);
  ASSERT_TRUE(rep.logdet_estimate.has_value());
  const double ref = oracle::logdet_spd(dense_a(s, lambda));
  EXPECT_NEAR(*rep.logdet_estimate, ref, 0.05 * std::abs(ref));
  EXPECT_EQ(rep.num_probes, 25u);
  // Column 0 is the same solve as plain PCG.
  const auto plain = cg_solve(sys, zty, {1e-5, 500}, &p);
  EXPECT_LT((rep.weights - plain.weights).norm(), 1e-8 * plain.weights.norm());
}

TEST(Slq, LargeLambdaLimit) {
  const auto s = rbf_stream(300, 3, 64, 1.0, 16);
  const double norm = accumulate_moments(s).gram.norm();
  const double lambda = std::sqrt(1e6 * norm);
  const GramSystem sys(s, lambda);
  Vector zty;
  double yty;
  sys.rhs(zty, yty);
  const auto p = build_preconditioner(s, 16, lambda, SketchVariant::Gauss, 3);
  const auto rep = pcg_slq_solve(sys, zty, p, 10, {1e-8, 100}, 4);
  const double limit = 2.0 * 64.0 * std::log(lambda);
  EXPECT_NEAR(*rep.logdet_estimate, limit, 1e-3 * std::abs(limit));
  const Vector w_lim = zty / (lambda * lambda);
  EXPECT_LT((rep.weights - w_lim).norm(), 1e-3 * w_lim.norm());
}

TEST(Slq, TridiagonalHasRitzValuesInSpectrum) {
  const auto s = rbf_stream(600, 3, 64, 1.0, 17);
  const GramSystem sys(s, 0.2);
  Vector zty;
  double yty;
  sys.rhs(zty, yty);
  const auto p = build_preconditioner(s, 8, 0.2, SketchVariant::Srht, 1);
  const auto rep = pcg_slq_solve(sys, zty, p, 4, {1e-6, 500}, 2);
  const Matrix pa = dense_p(p).ldlt().solve(dense_a(s, 0.2));
  Eigen::EigenSolver<Matrix> full(pa);
  const double hi = full.eigenvalues().real().maxCoeff(), lo = full.eigenvalues().real().minCoeff();
  for (std::size_t c = 1; c <= 4; ++c) {
    const Matrix t = lanczos_tridiagonal(rep, c);
    Eigen::SelfAdjointEigenSolver<Matrix> e(t);
    EXPECT_GE(e.eigenvalues().minCoeff(), lo * (1 - 1e-6));
    EXPECT_LE(e.eigenvalues().maxCoeff(), hi * (1 + 1e-6));
  }
}

TEST(Slq, LambdaMismatchRejected) {
  const auto s = rbf_stream(100, 2, 16, 1.0, 1);
  const GramSystem sys(s, 0.5);
  const auto p = build_preconditioner(s, 4, 0.4, SketchVariant::Gauss, 1);
  EXPECT_THROW(pcg_slq_solve(sys, Vector::Ones(16), p, 2, {}, 1), ValidationError);
}

TEST(DenseEig, MatchesDirectSolve) {
  const auto s = rbf_stream(1000, 3, 128, 1.0, 18);
  const auto mom = accumulate_moments(s);
  const Matrix g = s.features().transpose() * s.features();
  const auto sol = dense_eig_solve(mom.gram, mom.zty, mom.yty, 0.1);
  const Vector ref = dense_a(s, 0.1).ldlt().solve(mom.zty);
  EXPECT_LT((sol.weights - ref).norm() / ref.norm(), 1e-6);
  for (Eigen::Index i = 1; i < sol.eigenvalues.size(); ++i) EXPECT_GE(sol.eigenvalues[i - 1], sol.eigenvalues[i]);
  EXPECT_GE(sol.eigenvalues.minCoeff(), 0.0);
  EXPECT_LT((sol.rotated - sol.eigenvectors.transpose() * mom.zty).norm(), 1e-9 * mom.zty.norm());
}

TEST(DenseEig, DiagonalGram) {
  Matrix g = Vector::LinSpaced(5, 1.0, 5.0).asDiagonal();
  const Vector b = Vector::Ones(5);
  const auto sol = dense_eig_solve(g, b, 5.0, 1.0);
  for (Eigen::Index i = 0; i < 5; ++i) EXPECT_NEAR(sol.weights[i], 1.0 / (i + 2.0), 1e-12);
  EXPECT_NEAR(sol.eigenvalues[0], 5.0, 1e-12);
}

TEST(DenseEig, CrossSolverAgreement) {
  const auto s = rbf_stream(1500, 3, 256, 1.0, 19, 500);
  const GramSystem sys(s, 0.2);
  const auto mom = accumulate_moments(s);
  const auto dense = dense_eig_solve(mom.gram, mom.zty, mom.yty, 0.2);
  const auto p = build_preconditioner(s, 64, 0.2, SketchVariant::Srht2, 1);
  const auto pcg = cg_solve(sys, mom.zty, {1e-10, 2000}, &p);
  EXPECT_LT((pcg.weights - dense.weights).norm() / dense.weights.norm(), 1e-6);
}
