#include "solvers/gram.hpp"

#include <algorithm>

#include "util/error.hpp"

namespace sorfgp {

MappedFeatureStream::MappedFeatureStream(const DataSource& source, FeatureMap map)
    : source_(source), map_(std::move(map)) {
  if (source_.width() != map_.spec().input_width) {
    throw ValidationError("feature width mismatch: map expects " +
                          std::to_string(map_.spec().input_width) + ", dataset has " +
                          std::to_string(source_.width()));
  }
}

void MappedFeatureStream::load(std::size_t i, RowMatrix& z, Vector& y) const {
  const Chunk chunk = source_.load_chunk(i);
  z = map_.transform(chunk);
  const auto t = chunk.targets();
  y = Eigen::Map<const Vector>(t.data(), static_cast<Eigen::Index>(t.size()));
}

DenseFeatureStream::DenseFeatureStream(RowMatrix z, Vector y, std::size_t chunk_rows)
    : z_(std::move(z)), y_(std::move(y)), chunk_rows_(chunk_rows) {
  require(z_.rows() == y_.size(), "feature stream: row/target count mismatch");
  require(chunk_rows_ > 0, "chunk_rows must be positive");
}

std::size_t DenseFeatureStream::num_chunks() const {
  return (static_cast<std::size_t>(z_.rows()) + chunk_rows_ - 1) / chunk_rows_;
}

void DenseFeatureStream::load(std::size_t i, RowMatrix& z, Vector& y) const {
  const auto begin = static_cast<Eigen::Index>(i * chunk_rows_);
  const auto rows = std::min<Eigen::Index>(static_cast<Eigen::Index>(chunk_rows_), z_.rows() - begin);
  require(rows > 0, "feature stream: chunk index out of range");
  z = z_.middleRows(begin, rows);
  y = y_.segment(begin, rows);
}

GramMoments accumulate_moments(const FeatureStream& stream) {
  const auto m = static_cast<Eigen::Index>(stream.num_features());
  GramMoments out;
  out.gram = Matrix::Zero(m, m);
  out.zty = Vector::Zero(m);
  RowMatrix z;
  Vector y;
  for (std::size_t c = 0; c < stream.num_chunks(); ++c) {
    stream.load(c, z, y);
    out.gram.selfadjointView<Eigen::Lower>().rankUpdate(z.transpose());
    out.zty.noalias() += z.transpose() * y;
    out.yty += y.squaredNorm();
    out.rows += static_cast<std::size_t>(z.rows());
  }
  out.gram.triangularView<Eigen::StrictlyUpper>() = out.gram.transpose();
  return out;
}

void collect_features(const FeatureStream& stream, RowMatrix& z, Vector& y) {
  z.resize(static_cast<Eigen::Index>(stream.num_rows()),
           static_cast<Eigen::Index>(stream.num_features()));
  y.resize(static_cast<Eigen::Index>(stream.num_rows()));
  RowMatrix zc;
  Vector yc;
  Eigen::Index at = 0;
  for (std::size_t c = 0; c < stream.num_chunks(); ++c) {
    stream.load(c, zc, yc);
    z.middleRows(at, zc.rows()) = zc;
    y.segment(at, yc.size()) = yc;
    at += zc.rows();
  }
}

GramSystem::GramSystem(const FeatureStream& stream, double lambda)
    : stream_(stream), lambda_(lambda) {
  require(lambda > 0.0, "lambda must be > 0");
}

Matrix GramSystem::matvec(const Matrix& v) const {
  if (static_cast<std::size_t>(v.rows()) != dim()) {
    throw ValidationError("gram_matvec: vector length " + std::to_string(v.rows()) +
                          " does not match " + std::to_string(dim()) + " features");
  }
  Matrix out = Matrix::Zero(v.rows(), v.cols());
  RowMatrix z;
  Vector y;
  Matrix zv;
  for (std::size_t c = 0; c < stream_.num_chunks(); ++c) {
    stream_.load(c, z, y);
    zv.noalias() = z * v;
    out.noalias() += z.transpose() * zv;
  }
  out += (lambda_ * lambda_) * v;
  ++passes_;
  return out;
}

void GramSystem::rhs(Vector& zty, double& yty) const {
  zty = Vector::Zero(static_cast<Eigen::Index>(dim()));
  yty = 0.0;
  RowMatrix z;
  Vector y;
  for (std::size_t c = 0; c < stream_.num_chunks(); ++c) {
    stream_.load(c, z, y);
    zty.noalias() += z.transpose() * y;
    yty += y.squaredNorm();
  }
  ++passes_;
}

Matrix gram_matvec(const GramSystem& sys, const Matrix& v_batch) { return sys.matvec(v_batch); }

}  // namespace sorfgp
