#include "solvers/nystrom.hpp"

#include <cmath>
#include <limits>

#include <Eigen/Eigenvalues>
#include <Eigen/QR>
#include <Eigen/SVD>

#include "transform/hadamard.hpp"
#include "util/error.hpp"
#include "util/rng.hpp"

namespace sorfgp {

const char* to_string(SketchVariant v) {
  switch (v) {
    case SketchVariant::Gauss: return "gauss";
    case SketchVariant::Srht: return "srht";
    case SketchVariant::Srht2: return "srht_2";
  }
  return "unknown";
}

SketchVariant parse_sketch_variant(const std::string& name) {
  if (name == "gauss") return SketchVariant::Gauss;
  if (name == "srht") return SketchVariant::Srht;
  if (name == "srht_2" || name == "srht2") return SketchVariant::Srht2;
  throw ValidationError("unknown preconditioner variant '" + name +
                        "' (expected gauss, srht or srht_2)");
}

NystromPreconditioner::NystromPreconditioner(Matrix u, Vector eigenvalues, double lambda,
                                             SketchVariant variant)
    : u_(std::move(u)), lambda_vals_(std::move(eigenvalues)), lambda_(lambda), variant_(variant) {
  require(lambda_ > 0.0 && std::isfinite(lambda_), "preconditioner: lambda must be > 0");
  require(u_.cols() == lambda_vals_.size() && u_.cols() >= 1,
          "preconditioner: U and eigenvalues disagree in rank");
  beta_l_ = lambda_vals_[lambda_vals_.size() - 1];
}

NystromPreconditioner NystromPreconditioner::with_lambda(double lambda) const {
  return NystromPreconditioner(u_, lambda_vals_, lambda, variant_);
}

Matrix NystromPreconditioner::apply_inverse(const Matrix& v) const {
  if (v.rows() != u_.rows()) {
    throw ValidationError("preconditioner: vector length " + std::to_string(v.rows()) +
                          " does not match dimension " + std::to_string(u_.rows()));
  }
  const double l2 = lambda_ * lambda_;
  const Matrix utv = u_.transpose() * v;
  const Vector scale = (beta_l_ + l2) * (lambda_vals_.array() + l2).inverse() - 1.0;
  Matrix out = v;
  out.noalias() += u_ * (scale.asDiagonal() * utv);
  return out;
}

Matrix NystromPreconditioner::apply_sqrt(const Matrix& g) const {
  if (g.rows() != u_.rows()) {
    throw ValidationError("preconditioner: vector length " + std::to_string(g.rows()) +
                          " does not match dimension " + std::to_string(u_.rows()));
  }
  const double l2 = lambda_ * lambda_;
  const Matrix utg = u_.transpose() * g;
  const Vector scale = ((lambda_vals_.array() + l2) / (beta_l_ + l2)).sqrt() - 1.0;
  Matrix out = g;
  out.noalias() += u_ * (scale.asDiagonal() * utg);
  return out;
}

double NystromPreconditioner::logdet() const {
  const double l2 = lambda_ * lambda_;
  return ((lambda_vals_.array() + l2) / (beta_l_ + l2)).log().sum();
}

double NystromPreconditioner::estimate_ratio() const {
  const double l2 = lambda_ * lambda_;
  if (!(l2 > 0.0)) throw ValidationError("estimate_ratio: lambda must be > 0");
  return beta_l_ / l2;
}

// ---------------------------------------------------------------------------

namespace {

Matrix orthonormalize(const Matrix& a) {
  Eigen::HouseholderQR<Matrix> qr(a);
  return qr.householderQ() * Matrix::Identity(a.rows(), a.cols());
}

// Y = sum_c Z_c^T (Z_c Omega), Omega explicit.
Matrix sketch_dense(const FeatureStream& stream, const Matrix& omega) {
  Matrix y = Matrix::Zero(omega.rows(), omega.cols());
  RowMatrix z;
  Vector t;
  Matrix zo;
  for (std::size_t c = 0; c < stream.num_chunks(); ++c) {
    stream.load(c, z, t);
    zo.noalias() = z * omega;
    y.noalias() += z.transpose() * zo;
  }
  return y;
}

// Same product with Z_c Omega formed by the SRHT acting on each padded row.
Matrix sketch_srht(const FeatureStream& stream, const SrhtOperator& op, std::size_t m) {
  const auto rank = static_cast<Eigen::Index>(op.rank());
  Matrix y = Matrix::Zero(static_cast<Eigen::Index>(m), rank);
  RowMatrix z;
  Vector t;
  RowMatrix padded;
  for (std::size_t c = 0; c < stream.num_chunks(); ++c) {
    stream.load(c, z, t);
    padded = RowMatrix::Zero(z.rows(), static_cast<Eigen::Index>(op.dim()));
    padded.leftCols(z.cols()) = z;
    const RowMatrix zo = op.apply(padded);
    y.noalias() += z.transpose() * zo;
  }
  return y;
}

double spacing(double x) {
  return std::nextafter(x, std::numeric_limits<double>::infinity()) - x;
}

NystromPreconditioner finalize(const Matrix& y, const Matrix& omega, double lambda,
                               SketchVariant variant) {
  const auto m = y.rows();
  const double ymax = y.cwiseAbs().maxCoeff();
  if (ymax == 0.0) {
    // Z = 0: nothing to capture, the preconditioner is the identity.
    return NystromPreconditioner(orthonormalize(omega), Vector::Zero(omega.cols()), lambda,
                                 variant);
  }
  const double nu = std::sqrt(static_cast<double>(m)) * spacing(ymax);
  const Matrix y_nu = y + nu * omega;
  Matrix core = omega.transpose() * y_nu;
  core = 0.5 * (core + core.transpose()).eval();
  if (!core.allFinite()) {
    throw NumericalError("degenerate Nystrom sketch (non-finite core); raise the rank or lambda");
  }
  Eigen::SelfAdjointEigenSolver<Matrix> eig(core);
  const Vector& c = eig.eigenvalues();
  const double cmax = c.maxCoeff();
  if (!(cmax > 0.0)) {
    throw NumericalError("degenerate Nystrom sketch (core not positive); raise the rank or lambda");
  }
  // Self-adjoint inverse square root on the numerically positive part.
  const double floor = cmax * static_cast<double>(c.size()) * std::numeric_limits<double>::epsilon();
  Eigen::Index keep = 0;
  for (Eigen::Index k = 0; k < c.size(); ++k) keep += c[k] > floor ? 1 : 0;
  const Matrix v = eig.eigenvectors().rightCols(keep);
  const Vector inv_sqrt = c.tail(keep).array().rsqrt();
  const Matrix b = y_nu * v * inv_sqrt.asDiagonal();

  Eigen::BDCSVD<Matrix> svd(b, Eigen::ComputeThinU);
  const Vector sigma = svd.singularValues();
  Vector lam = (sigma.array().square() - nu).max(0.0);
  return NystromPreconditioner(svd.matrixU(), lam, lambda, variant);
}

}  // namespace

NystromPreconditioner build_preconditioner(const FeatureStream& stream, std::size_t rank,
                                           double lambda, SketchVariant variant,
                                           std::uint64_t seed) {
  const std::size_t m = stream.num_features();
  if (!(lambda > 0.0)) throw ValidationError("preconditioner: lambda must be > 0");
  if (rank < 1 || rank > m) {
    throw ValidationError("preconditioner rank " + std::to_string(rank) +
                          " must be in [1, " + std::to_string(m) + "]");
  }
  require(stream.num_rows() > 0, "preconditioner: dataset is empty");
  const auto mi = static_cast<Eigen::Index>(m);
  const auto li = static_cast<Eigen::Index>(rank);

  if (variant == SketchVariant::Gauss) {
    CounterRng rng(seed, make_stream(StreamTag::NystromGauss, 0));
    Matrix g(mi, li);
    for (Eigen::Index j = 0; j < li; ++j)
      for (Eigen::Index i = 0; i < mi; ++i) g(i, j) = rng.normal();
    const Matrix omega = orthonormalize(g);
    return finalize(sketch_dense(stream, omega), omega, lambda, variant);
  }

  const std::size_t padded = next_power_of_two(m);
  const SrhtOperator op = SrhtOperator::sample(seed, padded, rank);
  // Omega as an explicit M x L matrix: row i is the SRHT of e_i.
  RowMatrix eye = RowMatrix::Zero(mi, static_cast<Eigen::Index>(padded));
  for (Eigen::Index i = 0; i < mi; ++i) eye(i, i) = 1.0;
  const Matrix omega = op.apply(eye);
  const Matrix y = sketch_srht(stream, op, m);
  if (variant == SketchVariant::Srht) return finalize(y, omega, lambda, variant);

  if (y.cwiseAbs().maxCoeff() == 0.0) return finalize(y, omega, lambda, variant);
  const Matrix q = orthonormalize(y);
  return finalize(sketch_dense(stream, q), q, lambda, variant);
}

}  // namespace sorfgp
