#include "analysis/calibration.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <boost/math/distributions/normal.hpp>

#include "util/error.hpp"

namespace sorfgp {

CalibrationCurve auce(const Vector& means, const Vector& stds, const Vector& truths) {
  const auto n = means.size();
  if (n == 0) throw ValidationError("auce: empty inputs");
  require(stds.size() == n && truths.size() == n, "auce: inputs must have equal length");
  for (Eigen::Index i = 0; i < n; ++i) {
    if (!(stds[i] > 0.0) || !std::isfinite(stds[i])) {
      throw ValidationError("auce: standard deviations must be > 0 (index " + std::to_string(i) + ")");
    }
  }
  // Standardized absolute errors, sorted, so each level is one binary search.
  std::vector<double> err(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) err[static_cast<std::size_t>(i)] = std::abs(truths[i] - means[i]) / stds[i];
  std::sort(err.begin(), err.end());

  const boost::math::normal_distribution<double> unit;
  CalibrationCurve out;
  for (int i = 1; i <= 100; ++i) {
    const double p = i / 100.0;
    double covered;
    if (i == 100) {
      covered = 1.0;
    } else {
      const double z = boost::math::quantile(unit, 0.5 * (1.0 + p));
      covered = static_cast<double>(std::upper_bound(err.begin(), err.end(), z) - err.begin()) /
                static_cast<double>(n);
    }
    out.levels.push_back(p);
    out.coverage.push_back(covered);
    out.auce += std::abs(covered - p) * 0.01;
  }
  return out;
}

Vector ucb(const Vector& means, const Vector& stds, double multiplier) {
  if (multiplier < 0.0 || !std::isfinite(multiplier)) {
    throw ValidationError("ucb: multiplier must be finite and >= 0");
  }
  require(means.size() == stds.size(), "ucb: inputs must have equal length");
  if ((stds.array() < 0.0).any()) throw ValidationError("ucb: standard deviations must be >= 0");
  return means + multiplier * stds;
}

namespace {

Vector ranks(const Vector& v) {
  const auto n = static_cast<std::size_t>(v.size());
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  Vector r(v.size());
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j + 1 < n && v[order[j + 1]] == v[order[i]]) ++j;
    const double avg = 0.5 * static_cast<double>(i + j);
    for (std::size_t k = i; k <= j; ++k) r[order[k]] = avg;
    i = j + 1;
  }
  return r;
}

}  // namespace

double spearman(const Vector& a, const Vector& b) {
  require(a.size() == b.size() && a.size() >= 2, "spearman: need two equal-length vectors");
  const Vector ra = ranks(a).array() - ranks(a).mean();
  const Vector rb = ranks(b).array() - ranks(b).mean();
  const double den = ra.norm() * rb.norm();
  return den > 0.0 ? ra.dot(rb) / den : 0.0;
}

}  // namespace sorfgp
