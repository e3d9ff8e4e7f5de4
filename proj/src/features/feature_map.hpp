#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "data/dataset.hpp"
#include "transform/hadamard.hpp"
#include "util/linalg.hpp"

namespace sorfgp {

enum class KernelKind : std::uint32_t {
  Rbf = 0,
  ArcCosine1 = 1,
  FhtConv1d = 2,
  FastConv1d = 3,
  GraphRbf = 4,
};

const char* to_string(KernelKind kind);
KernelKind parse_kernel(const std::string& name);

/// lambda: noise, beta: amplitude, sigma: inverse lengthscale (RBF family).
struct Hyperparams {
  double lambda = 1.0;
  double beta = 1.0;
  double sigma = 1.0;
};

struct FeatureMapSpec {
  KernelKind kernel = KernelKind::Rbf;
  std::size_t input_width = 0;     // features per element (K)
  std::size_t window = 1;          // k-mer width for the convolution kernels
  std::size_t num_rffs = 0;        // M
  std::size_t variance_rffs = 0;   // features for the variance path, <= M
  Hyperparams hyper;
  std::uint64_t seed = 0;
  std::size_t stage1_features = 0;  // Fast-Conv-1d filter count; 0 = default
  bool variance_map = false;        // set by variance_spec()

  void validate() const;
  bool trigonometric() const { return kernel != KernelKind::ArcCosine1; }
  bool has_sigma() const { return kernel != KernelKind::ArcCosine1; }
  bool is_convolution() const {
    return kernel == KernelKind::FhtConv1d || kernel == KernelKind::FastConv1d;
  }
  /// Input kind the map consumes.
  InputKind input_kind() const;
  std::size_t stage1_width() const;
  /// Length of the vector handed to the main SORF operator.
  std::size_t sorf_input_dim() const;
  std::size_t num_frequencies() const;
  std::size_t effective_variance_rffs() const;
  /// Same kernel at variance_rffs features with its own seed substream.
  /// Fast-Conv-1d keeps its first-stage filters.
  FeatureMapSpec variance_spec() const;
  /// Seed of the main (last-stage) SORF operator.
  std::uint64_t main_seed() const;
  std::uint64_t stage1_seed() const;
};

/// Immutable random feature map. Operators are shared between copies, so
/// with_hyperparams() is cheap and never resamples.
class FeatureMap {
 public:
  explicit FeatureMap(const FeatureMapSpec& spec);
  FeatureMap(const FeatureMapSpec& spec, SorfOperator main, std::optional<SorfOperator> stage1);

  const FeatureMapSpec& spec() const { return spec_; }
  std::size_t num_features() const { return spec_.num_rffs; }
  const SorfOperator& sorf() const { return *sorf_; }
  const SorfOperator* stage1_sorf() const { return stage1_.get(); }

  FeatureMap with_hyperparams(const Hyperparams& hyper) const;

  /// Feature vector of one record (element rows x input_width).
  void transform_record(const RecordView& record, std::span<double> out) const;
  Vector transform_record(const RowMatrix& record) const;

  /// One fixed-vector record per row (RBF and arc-cosine maps).
  RowMatrix transform(const RowMatrix& x_batch) const;
  RowMatrix transform(const Chunk& chunk) const;

  /// Fast-Conv-1d first stage: ReLU then max over window positions.
  Vector stage1(const RowMatrix& seq) const;
  void stage1(const RecordView& record, std::span<double> out) const;

  /// RBF spec whose features on stage1 output equal this map's features.
  FeatureMapSpec stage2_spec() const;

 private:
  struct Workspace;
  void trig_features(std::span<const double> x, std::span<double> out, Workspace& ws,
                     bool accumulate) const;
  void stage1_impl(const RecordView& record, std::span<double> out, Workspace& ws) const;
  void record_impl(const RecordView& record, std::span<double> out, Workspace& ws) const;

  FeatureMapSpec spec_;
  std::shared_ptr<const SorfOperator> sorf_;
  std::shared_ptr<const SorfOperator> stage1_;
};

// Spellings used throughout the tests and docs.
RowMatrix rbf_features(const FeatureMap& map, const RowMatrix& x_batch);
RowMatrix arccos_features(const FeatureMap& map, const RowMatrix& x_batch);
Vector fht_conv1d_features(const FeatureMap& map, const RowMatrix& seq);
Vector fastconv1d_stage1(const FeatureMap& map, const RowMatrix& seq);
Vector fastconv1d_features(const FeatureMap& map, const RowMatrix& seq);
Vector graph_rbf_features(const FeatureMap& map, const RowMatrix& nodes);

/// Writes the Fast-Conv-1d first stage of every record as a fixed-vector
/// dataset, so the convolution runs once per corpus. Fit the result with
/// map.stage2_spec().
ChunkedDataset persist_stage1(const FeatureMap& map, const DataSource& source,
                              std::size_t chunk_rows, const std::filesystem::path& out_dir);

}  // namespace sorfgp
