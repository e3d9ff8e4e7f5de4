#include "analysis/synthetic.hpp"

#include <cmath>

#include <Eigen/QR>

#include "features/feature_map.hpp"
#include "util/error.hpp"
#include "util/rng.hpp"

namespace sorfgp {

namespace {

Matrix gaussian(std::size_t rows, std::size_t cols, std::uint64_t seed, std::uint64_t index) {
  CounterRng rng(seed, make_stream(StreamTag::Synthetic, index));
  Matrix g(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
  for (Eigen::Index j = 0; j < g.cols(); ++j)
    for (Eigen::Index i = 0; i < g.rows(); ++i) g(i, j) = rng.normal();
  return g;
}

}  // namespace

SyntheticSet make_gp_regression(std::size_t n, std::size_t d, double sigma, double beta,
                                double noise, std::uint64_t seed) {
  require(n >= 1 && d >= 1, "synthetic: n and d must be >= 1");
  SyntheticSet s;
  s.x = gaussian(n, d, seed, 0);
  FeatureMapSpec spec;
  spec.kernel = KernelKind::Rbf;
  spec.input_width = d;
  spec.num_rffs = 4096;
  spec.hyper = {1.0, beta, sigma};
  spec.seed = seed ^ 0x5eedull;
  const RowMatrix z = FeatureMap(spec).transform(s.x);
  const Matrix w = gaussian(spec.num_rffs, 1, seed, 1);
  const Matrix e = gaussian(n, 1, seed, 2);
  s.y = z * w.col(0) + noise * e.col(0);
  return s;
}

SyntheticSet make_spectrum_features(std::size_t n, std::size_t m, double cond, std::uint64_t seed) {
  require(n >= m && m >= 1, "synthetic: spectrum features need n >= m");
  require(cond >= 1.0, "synthetic: condition number must be >= 1");
  Eigen::HouseholderQR<Matrix> qu(gaussian(n, m, seed, 3));
  Eigen::HouseholderQR<Matrix> qv(gaussian(m, m, seed, 4));
  const Matrix u = qu.householderQ() * Matrix::Identity(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(m));
  const Matrix v = qv.householderQ();
  Vector s(static_cast<Eigen::Index>(m));
  for (Eigen::Index k = 0; k < s.size(); ++k) {
    const double t = m == 1 ? 0.0 : static_cast<double>(k) / static_cast<double>(m - 1);
    s[k] = std::pow(cond, -0.5 * t);
  }
  SyntheticSet out;
  out.x = u * s.asDiagonal() * v.transpose();
  const Matrix w = gaussian(m, 1, seed, 5);
  const Matrix e = gaussian(n, 1, seed, 6);
  out.y = out.x * w.col(0) + 0.01 * e.col(0);
  return out;
}

SyntheticSet make_landscape(std::size_t sites, std::size_t options, double scale,
                            std::uint64_t seed) {
  require(sites >= 1 && options >= 2, "landscape: need sites >= 1 and options >= 2");
  std::size_t rows = 1;
  for (std::size_t s = 0; s < sites; ++s) rows *= options;
  const Matrix single = gaussian(sites, options, seed, 7);
  const Matrix pair = 0.25 * gaussian(sites * sites, options * options, seed, 8);
  SyntheticSet out;
  out.x = RowMatrix::Zero(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(sites * options));
  out.y.resize(static_cast<Eigen::Index>(rows));
  std::vector<std::size_t> code(sites);
  for (std::size_t r = 0; r < rows; ++r) {
    std::size_t v = r;
    for (std::size_t s = 0; s < sites; ++s) {
      code[s] = v % options;
      v /= options;
      out.x(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(s * options + code[s])) = 1.0;
    }
    double f = 0.0;
    for (std::size_t s = 0; s < sites; ++s) {
      f += single(static_cast<Eigen::Index>(s), static_cast<Eigen::Index>(code[s]));
      for (std::size_t t = s + 1; t < sites; ++t) {
        f += pair(static_cast<Eigen::Index>(s * sites + t),
                  static_cast<Eigen::Index>(code[s] * options + code[t]));
      }
    }
    out.y[static_cast<Eigen::Index>(r)] = std::exp(scale * f);
  }
  return out;
}

}  // namespace sorfgp
