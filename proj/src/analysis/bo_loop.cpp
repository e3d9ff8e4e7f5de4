#include "analysis/bo_loop.hpp"

#include <algorithm>
#include <numeric>

#include "analysis/calibration.hpp"
#include "gp/tuning.hpp"
#include "util/error.hpp"
#include "util/rng.hpp"

namespace sorfgp {

const char* to_string(Acquisition a) { return a == Acquisition::Ucb ? "ucb" : "random"; }

Acquisition parse_acquisition(const std::string& name) {
  if (name == "ucb") return Acquisition::Ucb;
  if (name == "random") return Acquisition::Random;
  throw ValidationError("unknown acquisition '" + name + "' (expected ucb or random)");
}

Vector normalize_fitness(const Vector& fitness) {
  require(fitness.size() > 0, "fitness vector is empty");
  const double lo = fitness.minCoeff();
  const double hi = fitness.maxCoeff();
  if (hi == lo) return Vector::Zero(fitness.size());
  return (fitness.array() - lo) / (hi - lo);
}

BoTrajectory run_bo_loop(const RowMatrix& pool, const Vector& fitness, const BoOptions& opts) {
  const auto n = static_cast<std::size_t>(pool.rows());
  require(fitness.size() == pool.rows(), "bo loop: one fitness value per pool entry");
  require(opts.init_size >= 2, "bo loop: init_size must be >= 2");
  require(opts.batch_size >= 1, "bo loop: batch_size must be >= 1");
  if (opts.init_size >= n) {
    throw ValidationError("bo loop: pool of " + std::to_string(n) +
                          " is exhausted by the initial sample of " + std::to_string(opts.init_size));
  }
  if (opts.acquisition == Acquisition::Ucb) {
    require(opts.spec.input_width == static_cast<std::size_t>(pool.cols()),
            "bo loop: surrogate input width does not match the pool");
  }
  const Vector norm = normalize_fitness(fitness);

  BoTrajectory traj;
  traj.seed = opts.seed;
  traj.budget = opts.init_size + opts.iterations * opts.batch_size;
  CounterRng rng(opts.seed, make_stream(StreamTag::ActiveLearning, 0));
  traj.initial = sample_without_replacement(rng, n, opts.init_size);

  std::vector<bool> taken(n, false);
  std::vector<std::size_t> train = traj.initial;
  double best = 0.0;
  for (auto i : train) {
    taken[i] = true;
    best = std::max(best, norm[static_cast<Eigen::Index>(i)]);
  }
  traj.best_so_far.push_back(best);

  for (std::size_t it = 0; it < opts.iterations; ++it) {
    std::vector<std::size_t> remaining;
    for (std::size_t i = 0; i < n; ++i)
      if (!taken[i]) remaining.push_back(i);
    if (remaining.empty()) {
      traj.exhausted = true;
      break;
    }
    std::vector<std::size_t> batch;
    if (remaining.size() <= opts.batch_size) {
      batch = remaining;
    } else if (opts.acquisition == Acquisition::Random) {
      CounterRng pick(opts.seed, make_stream(StreamTag::ActiveLearning, it + 1));
      for (auto j : sample_without_replacement(pick, remaining.size(), opts.batch_size))
        batch.push_back(remaining[j]);
    } else {
      RowMatrix xt(static_cast<Eigen::Index>(train.size()), pool.cols());
      Vector yt(static_cast<Eigen::Index>(train.size()));
      for (std::size_t r = 0; r < train.size(); ++r) {
        xt.row(static_cast<Eigen::Index>(r)) = pool.row(static_cast<Eigen::Index>(train[r]));
        yt[static_cast<Eigen::Index>(r)] = norm[static_cast<Eigen::Index>(train[r])];
      }
      const InMemorySource src = InMemorySource::from_matrix(xt, yt, 2048);
      FeatureMapSpec spec = opts.spec;
      if (opts.tune) {
        const TuneResult tr = tune_grid(src, spec, {spec.hyper.sigma}, opts.lambda_grid, opts.beta_grid);
        spec.hyper = tr.best;
      }
      FitOptions fo;
      fo.mode = SolverMode::Dense;
      const GPModel model = fit(src, spec, fo);

      RowMatrix xr(static_cast<Eigen::Index>(remaining.size()), pool.cols());
      for (std::size_t r = 0; r < remaining.size(); ++r)
        xr.row(static_cast<Eigen::Index>(r)) = pool.row(static_cast<Eigen::Index>(remaining[r]));
      const Prediction pred = predict(model, xr);
      const Vector score = ucb(pred.mean, pred.variance.cwiseMax(0.0).cwiseSqrt(), opts.multiplier);
      std::vector<std::size_t> order(remaining.size());
      std::iota(order.begin(), order.end(), std::size_t{0});
      std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return score[static_cast<Eigen::Index>(a)] > score[static_cast<Eigen::Index>(b)];
      });
      for (std::size_t j = 0; j < opts.batch_size; ++j) batch.push_back(remaining[order[j]]);
    }
    for (auto i : batch) {
      taken[i] = true;
      train.push_back(i);
      best = std::max(best, norm[static_cast<Eigen::Index>(i)]);
    }
    traj.batches.push_back(std::move(batch));
    traj.best_so_far.push_back(best);
  }
  return traj;
}

}  // namespace sorfgp
