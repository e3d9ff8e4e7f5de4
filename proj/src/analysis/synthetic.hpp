#pragma once

#include <cstdint>

#include "util/linalg.hpp"

namespace sorfgp {

struct SyntheticSet {
  RowMatrix x;
  Vector y;
};

/// Standard-normal inputs with targets from a random-feature draw of an RBF
/// GP (amplitude beta, inverse lengthscale sigma) plus Gaussian noise.
SyntheticSet make_gp_regression(std::size_t n, std::size_t d, double sigma, double beta,
                                double noise, std::uint64_t seed);

/// Feature matrix n x m with singular values decaying geometrically from 1
/// to 1/sqrt(cond), so Z^T Z has condition number `cond`. Targets are a
/// noisy linear response.
SyntheticSet make_spectrum_features(std::size_t n, std::size_t m, double cond, std::uint64_t seed);

/// Combinatorial landscape: `sites` positions with `options` choices each,
/// one-hot encoded (options^sites rows). Fitness is exp(scale * additive
/// score) with small pairwise terms; the optimum is unique.
SyntheticSet make_landscape(std::size_t sites, std::size_t options, double scale,
                            std::uint64_t seed);

}  // namespace sorfgp
