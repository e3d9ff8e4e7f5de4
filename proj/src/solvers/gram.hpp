#pragma once

#include <atomic>
#include <cstddef>

#include "data/dataset.hpp"
#include "features/feature_map.hpp"
#include "util/linalg.hpp"

namespace sorfgp {

/// Chunks of a feature matrix Z with their targets, visited in index order.
class FeatureStream {
 public:
  virtual ~FeatureStream() = default;
  virtual std::size_t num_chunks() const = 0;
  virtual std::size_t num_features() const = 0;
  virtual std::size_t num_rows() const = 0;
  virtual void load(std::size_t i, RowMatrix& z, Vector& y) const = 0;
};

/// Regenerates features from the records on every pass.
class MappedFeatureStream : public FeatureStream {
 public:
  MappedFeatureStream(const DataSource& source, FeatureMap map);

  std::size_t num_chunks() const override { return source_.num_chunks(); }
  std::size_t num_features() const override { return map_.num_features(); }
  std::size_t num_rows() const override { return source_.num_records(); }
  void load(std::size_t i, RowMatrix& z, Vector& y) const override;

  const FeatureMap& map() const { return map_; }

 private:
  const DataSource& source_;
  FeatureMap map_;
};

/// Features held in memory, split into fixed-size chunks.
class DenseFeatureStream : public FeatureStream {
 public:
  DenseFeatureStream(RowMatrix z, Vector y, std::size_t chunk_rows);

  std::size_t num_chunks() const override;
  std::size_t num_features() const override { return static_cast<std::size_t>(z_.cols()); }
  std::size_t num_rows() const override { return static_cast<std::size_t>(z_.rows()); }
  void load(std::size_t i, RowMatrix& z, Vector& y) const override;

  const RowMatrix& features() const { return z_; }
  const Vector& targets() const { return y_; }

 private:
  RowMatrix z_;
  Vector y_;
  std::size_t chunk_rows_;
};

/// Z^T Z, Z^T y and y^T y from one pass.
struct GramMoments {
  Matrix gram;
  Vector zty;
  double yty = 0.0;
  std::size_t rows = 0;
};

GramMoments accumulate_moments(const FeatureStream& stream);

/// Feature matrix and targets of a whole stream (small problems only).
void collect_features(const FeatureStream& stream, RowMatrix& z, Vector& y);

/// The regularized system (Z^T Z + lambda^2 I). Every product is one pass.
class GramSystem {
 public:
  GramSystem(const FeatureStream& stream, double lambda);

  std::size_t dim() const { return stream_.num_features(); }
  double lambda() const { return lambda_; }
  const FeatureStream& stream() const { return stream_; }

  Matrix matvec(const Matrix& v) const;
  /// Z^T y and y^T y in one pass.
  void rhs(Vector& zty, double& yty) const;

  std::size_t passes() const { return passes_.load(); }

 private:
  const FeatureStream& stream_;
  double lambda_;
  mutable std::atomic<std::size_t> passes_{0};
};

Matrix gram_matvec(const GramSystem& sys, const Matrix& v_batch);

}  // namespace sorfgp
