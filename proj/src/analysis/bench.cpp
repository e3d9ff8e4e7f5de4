#include "analysis/bench.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>

#include "features/feature_map.hpp"
#include "solvers/cg.hpp"
#include "util/error.hpp"
#include "util/rng.hpp"

namespace sorfgp {

namespace {

template <typename F>
double best_time(std::size_t repeats, F&& fn) {
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t r = 0; r < repeats; ++r) {
    const auto t0 = std::chrono::steady_clock::now();
    fn();
    const auto t1 = std::chrono::steady_clock::now();
    best = std::min(best, std::chrono::duration<double>(t1 - t0).count());
  }
  return best;
}

}  // namespace

std::vector<SorfTiming> bench_sorf(std::size_t rows, std::size_t dim,
                                   const std::vector<std::size_t>& num_rffs, std::uint64_t seed,
                                   bool dense_baseline, std::size_t repeats) {
  require(rows >= 1 && dim >= 1 && repeats >= 1, "bench: rows, dim and repeats must be >= 1");
  CounterRng rng(seed, make_stream(StreamTag::Synthetic, 100));
  RowMatrix x(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(dim));
  for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = rng.normal();

  std::vector<SorfTiming> out;
  for (std::size_t m : num_rffs) {
    FeatureMapSpec spec;
    spec.kernel = KernelKind::Rbf;
    spec.input_width = dim;
    spec.num_rffs = m;
    spec.seed = seed;
    const FeatureMap map(spec);
    SorfTiming t;
    t.num_rffs = m;
    volatile double sink = 0.0;
    t.sorf_seconds = best_time(repeats, [&] { sink = sink + map.transform(x)(0, 0); });
    if (dense_baseline) {
      const auto half = static_cast<Eigen::Index>(m / 2);
      Matrix w(static_cast<Eigen::Index>(dim), half);
      for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = rng.normal();
      t.dense_seconds = best_time(repeats, [&] {
        const Matrix proj = x * w;
        Matrix z(proj.rows(), 2 * half);
        z.leftCols(half) = proj.array().cos();
        z.rightCols(half) = proj.array().sin();
        sink = sink + z(0, 0);
      });
    }
    out.push_back(t);
  }
  return out;
}

std::vector<IterationRow> bench_iterations(const FeatureStream& stream, double lambda,
                                           const std::vector<std::size_t>& ranks,
                                           const std::vector<SketchVariant>& variants, double tol,
                                           std::size_t maxiter, std::uint64_t seed) {
  GramSystem sys(stream, lambda);
  Vector zty;
  double yty;
  sys.rhs(zty, yty);
  const SolveReport cg = cg_solve(sys, zty, {tol, maxiter});
  std::vector<IterationRow> out;
  for (SketchVariant v : variants) {
    for (std::size_t rank : ranks) {
      const NystromPreconditioner pre = build_preconditioner(stream, rank, lambda, v, seed);
      const SolveReport pcg = cg_solve(sys, zty, {tol, maxiter}, &pre);
      IterationRow row;
      row.rank = rank;
      row.variant = v;
      row.cg_iterations = cg.iterations;
      row.cg_converged = cg.converged;
      row.pcg_iterations = pcg.iterations;
      row.pcg_converged = pcg.converged;
      row.ratio = pre.estimate_ratio();
      out.push_back(row);
    }
  }
  return out;
}

}  // namespace sorfgp
