#pragma once

#include <vector>

#include "util/linalg.hpp"

namespace sorfgp {

struct CalibrationCurve {
  std::vector<double> levels;    // 0.01 .. 1.00
  std::vector<double> coverage;  // observed fraction inside each central interval
  double auce = 0.0;
};

/// Area under |coverage - level| with a left Riemann sum, step 0.01.
CalibrationCurve auce(const Vector& means, const Vector& stds, const Vector& truths);

/// mean + multiplier * std
Vector ucb(const Vector& means, const Vector& stds, double multiplier);

/// Average-rank Spearman correlation.
double spearman(const Vector& a, const Vector& b);

}  // namespace sorfgp
