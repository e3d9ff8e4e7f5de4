#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "features/feature_map.hpp"
#include "gp/model.hpp"
#include "util/linalg.hpp"

namespace sorfgp {

enum class Acquisition { Ucb, Random };

const char* to_string(Acquisition a);
Acquisition parse_acquisition(const std::string& name);

struct BoOptions {
  std::size_t init_size = 384;
  std::size_t batch_size = 96;
  std::size_t iterations = 5;
  Acquisition acquisition = Acquisition::Ucb;
  double multiplier = 1.0;
  std::uint64_t seed = 0;
  /// Surrogate map; input_width must match the pool. Its lambda and beta are
  /// used when tuning is off.
  FeatureMapSpec spec;
  /// Re-tune lambda and beta on each refit (closed form over the grids).
  bool tune = true;
  std::vector<double> lambda_grid;
  std::vector<double> beta_grid;
};

struct BoTrajectory {
  std::uint64_t seed = 0;
  std::size_t budget = 0;                       // init + iterations * batch
  std::vector<std::size_t> initial;             // ids of the random start set
  std::vector<std::vector<std::size_t>> batches;
  std::vector<double> best_so_far;              // normalized fitness; [0] after init
  bool exhausted = false;                       // pool ran out before the last iteration
};

/// Normalizes fitness to [0, 1] over the whole pool.
Vector normalize_fitness(const Vector& fitness);

/// Simulated active learning over a labeled pool of fixed vectors.
BoTrajectory run_bo_loop(const RowMatrix& pool, const Vector& fitness, const BoOptions& opts);

}  // namespace sorfgp
