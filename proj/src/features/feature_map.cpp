#include "features/feature_map.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <numeric>

#include "util/error.hpp"
#include "util/parallel.hpp"
#include "util/rng.hpp"

namespace sorfgp {

const char* to_string(KernelKind kind) {
  switch (kind) {
    case KernelKind::Rbf: return "rbf";
    case KernelKind::ArcCosine1: return "arccos1";
    case KernelKind::FhtConv1d: return "fht_conv1d";
    case KernelKind::FastConv1d: return "fast_conv1d";
    case KernelKind::GraphRbf: return "graph_rbf";
  }
  return "unknown";
}

KernelKind parse_kernel(const std::string& name) {
  if (name == "rbf") return KernelKind::Rbf;
  if (name == "arccos1") return KernelKind::ArcCosine1;
  if (name == "fht_conv1d") return KernelKind::FhtConv1d;
  if (name == "fast_conv1d") return KernelKind::FastConv1d;
  if (name == "graph_rbf") return KernelKind::GraphRbf;
  throw ValidationError("unknown kernel '" + name +
                        "' (expected rbf, arccos1, fht_conv1d, fast_conv1d or graph_rbf)");
}

// ---------------------------------------------------------------------------

void FeatureMapSpec::validate() const {
  require(input_width >= 1, "feature map: input width must be >= 1");
  require(window >= 1, "feature map: window must be >= 1");
  if (!is_convolution()) require(window == 1, "feature map: window applies to conv kernels only");
  if (trigonometric()) {
    if (num_rffs < 2 || num_rffs % 2 != 0) {
      throw ValidationError("feature map: num_rffs must be even and >= 2 for " +
                            std::string(to_string(kernel)) + ", got " + std::to_string(num_rffs));
    }
  } else {
    require(num_rffs >= 1, "feature map: num_rffs must be >= 1");
  }
  const std::size_t mv = effective_variance_rffs();
  require(mv <= num_rffs, "feature map: variance_rffs must not exceed num_rffs");
  if (trigonometric()) require(mv >= 2 && mv % 2 == 0, "feature map: variance_rffs must be even");
  require(hyper.lambda > 0.0 && std::isfinite(hyper.lambda), "feature map: lambda must be > 0");
  require(hyper.beta > 0.0 && std::isfinite(hyper.beta), "feature map: beta must be > 0");
  if (has_sigma()) {
    require(hyper.sigma > 0.0 && std::isfinite(hyper.sigma), "feature map: sigma must be > 0");
  }
}

InputKind FeatureMapSpec::input_kind() const {
  switch (kernel) {
    case KernelKind::Rbf:
    case KernelKind::ArcCosine1: return InputKind::FixedVector;
    case KernelKind::GraphRbf: return InputKind::Graph;
    default: return InputKind::Sequence;
  }
}

std::size_t FeatureMapSpec::stage1_width() const {
  if (kernel != KernelKind::FastConv1d) return 0;
  if (stage1_features) return stage1_features;
  return 2 * next_power_of_two(window * input_width);
}

std::size_t FeatureMapSpec::sorf_input_dim() const {
  switch (kernel) {
    case KernelKind::Rbf:
    case KernelKind::GraphRbf: return input_width;
    case KernelKind::ArcCosine1: return input_width + 1;
    case KernelKind::FhtConv1d: return window * input_width;
    case KernelKind::FastConv1d: return stage1_width();
  }
  return input_width;
}

std::size_t FeatureMapSpec::num_frequencies() const {
  return trigonometric() ? num_rffs / 2 : num_rffs;
}

std::size_t FeatureMapSpec::effective_variance_rffs() const {
  if (variance_rffs) return variance_rffs;
  return std::min<std::size_t>(num_rffs, 512);
}

std::uint64_t FeatureMapSpec::main_seed() const {
  const std::uint64_t base =
      kernel == KernelKind::FastConv1d ? derive_seed(seed, SeedPurpose::Stage2) : seed;
  return variance_map ? derive_seed(base, SeedPurpose::Variance) : base;
}

std::uint64_t FeatureMapSpec::stage1_seed() const {
  return derive_seed(seed, SeedPurpose::Stage1);
}

FeatureMapSpec FeatureMapSpec::variance_spec() const {
  require(!variance_map, "variance_spec of a variance map");
  FeatureMapSpec v = *this;
  v.num_rffs = effective_variance_rffs();
  v.variance_rffs = v.num_rffs;
  v.variance_map = true;
  return v;
}

// ---------------------------------------------------------------------------

struct FeatureMap::Workspace {
  std::vector<double> scratch;
  std::vector<double> freq;
  std::vector<double> profile;
  std::vector<double> augmented;
  std::vector<double> stage1_out;
  std::vector<double> record;
};

namespace {

std::size_t workspace_scratch(const SorfOperator& a, const SorfOperator* b) {
  return std::max(a.padded_dim(), b ? b->padded_dim() : std::size_t{0});
}

}  // namespace

FeatureMap::FeatureMap(const FeatureMapSpec& spec) : spec_(spec) {
  spec_.validate();
  sorf_ = std::make_shared<const SorfOperator>(
      SorfOperator::sample(spec_.main_seed(), spec_.sorf_input_dim(), spec_.num_frequencies()));
  if (spec_.kernel == KernelKind::FastConv1d) {
    stage1_ = std::make_shared<const SorfOperator>(SorfOperator::sample(
        spec_.stage1_seed(), spec_.window * spec_.input_width, spec_.stage1_width()));
  }
}

FeatureMap::FeatureMap(const FeatureMapSpec& spec, SorfOperator main,
                       std::optional<SorfOperator> stage1)
    : spec_(spec) {
  spec_.validate();
  require(main.input_dim() == spec_.sorf_input_dim() &&
              main.num_outputs() == spec_.num_frequencies(),
          "feature map: stored operator does not match the spec");
  sorf_ = std::make_shared<const SorfOperator>(std::move(main));
  if (spec_.kernel == KernelKind::FastConv1d) {
    require(stage1.has_value(), "feature map: Fast-Conv-1d needs its first-stage operator");
    require(stage1->input_dim() == spec_.window * spec_.input_width &&
                stage1->num_outputs() == spec_.stage1_width(),
            "feature map: stored first-stage operator does not match the spec");
    stage1_ = std::make_shared<const SorfOperator>(std::move(*stage1));
  }
}

FeatureMap FeatureMap::with_hyperparams(const Hyperparams& hyper) const {
  FeatureMap copy = *this;
  copy.spec_.hyper = hyper;
  copy.spec_.validate();
  return copy;
}

FeatureMapSpec FeatureMap::stage2_spec() const {
  require(spec_.kernel == KernelKind::FastConv1d, "stage2_spec: not a Fast-Conv-1d map");
  FeatureMapSpec s = spec_;
  s.kernel = KernelKind::Rbf;
  s.input_width = spec_.stage1_width();
  s.window = 1;
  s.stage1_features = 0;
  s.variance_map = false;
  s.seed = derive_seed(spec_.seed, SeedPurpose::Stage2);
  return s;
}

void FeatureMap::trig_features(std::span<const double> x, std::span<double> out, Workspace& ws,
                               bool accumulate) const {
  const std::size_t half = spec_.num_frequencies();
  sorf_->apply(x, ws.freq, ws.scratch);
  const double sigma = spec_.hyper.sigma;
  const double scale = spec_.hyper.beta / std::sqrt(static_cast<double>(half));
  double* cos_part = out.data();
  double* sin_part = out.data() + half;
  if (accumulate) {
    for (std::size_t k = 0; k < half; ++k) {
      const double y = sigma * ws.freq[k];
      cos_part[k] += scale * std::cos(y);
      sin_part[k] += scale * std::sin(y);
    }
  } else {
    for (std::size_t k = 0; k < half; ++k) {
      const double y = sigma * ws.freq[k];
      cos_part[k] = scale * std::cos(y);
      sin_part[k] = scale * std::sin(y);
    }
  }
}

void FeatureMap::stage1_impl(const RecordView& record, std::span<double> out,
                             Workspace& ws) const {
  const std::size_t w = spec_.window;
  const std::size_t k = spec_.input_width;
  if (record.rows < w) {
    throw ValidationError("sequence too short: " + std::to_string(record.rows) +
                          " positions for window " + std::to_string(w));
  }
  std::fill(out.begin(), out.end(), 0.0);
  const std::size_t m1 = stage1_->num_outputs();
  for (std::size_t pos = 0; pos + w <= record.rows; ++pos) {
    stage1_->apply({record.data + pos * k, w * k}, {ws.stage1_out.data(), m1}, ws.scratch);
    for (std::size_t f = 0; f < m1; ++f) out[f] = std::max(out[f], ws.stage1_out[f]);
  }
}

void FeatureMap::record_impl(const RecordView& record, std::span<double> out,
                             Workspace& ws) const {
  if (record.width != spec_.input_width) {
    throw ValidationError("feature width mismatch: map expects " +
                          std::to_string(spec_.input_width) + ", input has " +
                          std::to_string(record.width));
  }
  require(out.size() == spec_.num_rffs, "feature output span has wrong length");
  if (record.rows == 0) throw ValidationError("empty input record");
  const std::size_t k = spec_.input_width;
  switch (spec_.kernel) {
    case KernelKind::Rbf:
      require(record.rows == 1, "rbf map takes fixed-vector input");
      trig_features({record.data, k}, out, ws, false);
      break;
    case KernelKind::ArcCosine1: {
      require(record.rows == 1, "arc-cosine map takes fixed-vector input");
      ws.augmented[0] = 1.0;
      std::copy(record.data, record.data + k, ws.augmented.begin() + 1);
      sorf_->apply(ws.augmented, ws.freq, ws.scratch);
      const double scale = spec_.hyper.beta / std::sqrt(static_cast<double>(spec_.num_rffs));
      for (std::size_t i = 0; i < spec_.num_rffs; ++i) out[i] = scale * std::max(0.0, ws.freq[i]);
      break;
    }
    case KernelKind::FhtConv1d: {
      const std::size_t w = spec_.window;
      if (record.rows < w) {
        throw ValidationError("sequence too short: " + std::to_string(record.rows) +
                              " positions for window " + std::to_string(w));
      }
      std::fill(out.begin(), out.end(), 0.0);
      // Rows are contiguous, so window `pos` flattened position-major is a
      // plain slice of the record.
      for (std::size_t pos = 0; pos + w <= record.rows; ++pos) {
        trig_features({record.data + pos * k, w * k}, out, ws, true);
      }
      break;
    }
    case KernelKind::FastConv1d:
      stage1_impl(record, ws.profile, ws);
      trig_features(ws.profile, out, ws, false);
      break;
    case KernelKind::GraphRbf: {
      // Canonical node order: hash of the node bytes, then the values.
      std::vector<std::pair<std::uint64_t, std::size_t>> order(record.rows);
      for (std::size_t v = 0; v < record.rows; ++v) {
        ContentHash h;
        h.update(record.data + v * k, k * sizeof(double));
        order[v] = {h.value(), v};
      }
      std::sort(order.begin(), order.end(), [&](const auto& a, const auto& b) {
        if (a.first != b.first) return a.first < b.first;
        const double* ra = record.data + a.second * k;
        const double* rb = record.data + b.second * k;
        return std::lexicographical_compare(ra, ra + k, rb, rb + k);
      });
      std::fill(out.begin(), out.end(), 0.0);
      for (const auto& [hash, v] : order) trig_features({record.data + v * k, k}, out, ws, true);
      break;
    }
  }
}

namespace {

void init_workspace(const FeatureMapSpec& spec, const SorfOperator& main,
                    const SorfOperator* stage1, std::vector<double>& scratch,
                    std::vector<double>& freq, std::vector<double>& profile,
                    std::vector<double>& augmented, std::vector<double>& stage1_out) {
  scratch.resize(workspace_scratch(main, stage1));
  freq.resize(main.num_outputs());
  if (stage1) {
    profile.resize(stage1->num_outputs());
    stage1_out.resize(stage1->num_outputs());
  }
  if (spec.kernel == KernelKind::ArcCosine1) augmented.resize(spec.input_width + 1);
}

}  // namespace

void FeatureMap::transform_record(const RecordView& record, std::span<double> out) const {
  Workspace ws;
  init_workspace(spec_, *sorf_, stage1_.get(), ws.scratch, ws.freq, ws.profile, ws.augmented,
                 ws.stage1_out);
  record_impl(record, out, ws);
}

Vector FeatureMap::transform_record(const RowMatrix& record) const {
  Vector out(spec_.num_rffs);
  transform_record({record.data(), static_cast<std::size_t>(record.rows()),
                    static_cast<std::size_t>(record.cols())},
                   {out.data(), spec_.num_rffs});
  return out;
}

RowMatrix FeatureMap::transform(const RowMatrix& x_batch) const {
  require(spec_.input_kind() == InputKind::FixedVector,
          std::string("batch transform takes fixed vectors; use per-record calls for ") +
              to_string(spec_.kernel));
  if (static_cast<std::size_t>(x_batch.cols()) != spec_.input_width) {
    throw ValidationError("feature width mismatch: map expects " +
                          std::to_string(spec_.input_width) + ", input has " +
                          std::to_string(x_batch.cols()));
  }
  RowMatrix out(x_batch.rows(), spec_.num_rffs);
  parallel_for(static_cast<std::size_t>(x_batch.rows()), 64, [&](std::size_t b, std::size_t e) {
    Workspace ws;
    init_workspace(spec_, *sorf_, stage1_.get(), ws.scratch, ws.freq, ws.profile, ws.augmented,
                   ws.stage1_out);
    for (std::size_t r = b; r < e; ++r) {
      record_impl({x_batch.row(r).data(), 1, spec_.input_width},
                  {out.row(r).data(), spec_.num_rffs}, ws);
    }
  });
  return out;
}

RowMatrix FeatureMap::transform(const Chunk& chunk) const {
  const bool fixed = spec_.input_kind() == InputKind::FixedVector;
  if (fixed != (chunk.kind() == InputKind::FixedVector)) {
    throw ValidationError(std::string("kernel ") + to_string(spec_.kernel) +
                          " cannot consume " + to_string(chunk.kind()) + " input");
  }
  RowMatrix out(chunk.size(), spec_.num_rffs);
  parallel_for(chunk.size(), 16, [&](std::size_t b, std::size_t e) {
    Workspace ws;
    init_workspace(spec_, *sorf_, stage1_.get(), ws.scratch, ws.freq, ws.profile, ws.augmented,
                   ws.stage1_out);
    for (std::size_t r = b; r < e; ++r) {
      const RecordView rec = chunk.record(r, ws.record);
      record_impl(rec, {out.row(r).data(), spec_.num_rffs}, ws);
    }
  });
  return out;
}

void FeatureMap::stage1(const RecordView& record, std::span<double> out) const {
  require(stage1_ != nullptr, "stage1: not a Fast-Conv-1d map");
  if (record.width != spec_.input_width) {
    throw ValidationError("feature width mismatch: map expects " +
                          std::to_string(spec_.input_width) + ", input has " +
                          std::to_string(record.width));
  }
  require(out.size() == stage1_->num_outputs(), "stage1 output span has wrong length");
  Workspace ws;
  init_workspace(spec_, *sorf_, stage1_.get(), ws.scratch, ws.freq, ws.profile, ws.augmented,
                 ws.stage1_out);
  stage1_impl(record, out, ws);
}

Vector FeatureMap::stage1(const RowMatrix& seq) const {
  require(stage1_ != nullptr, "stage1: not a Fast-Conv-1d map");
  Vector out(stage1_->num_outputs());
  stage1({seq.data(), static_cast<std::size_t>(seq.rows()), static_cast<std::size_t>(seq.cols())},
         {out.data(), static_cast<std::size_t>(out.size())});
  return out;
}

// ---------------------------------------------------------------------------

namespace {

void expect_kernel(const FeatureMap& map, KernelKind kind) {
  if (map.spec().kernel != kind) {
    throw ValidationError(std::string("expected a ") + to_string(kind) + " map, got " +
                          to_string(map.spec().kernel));
  }
}

}  // namespace

RowMatrix rbf_features(const FeatureMap& map, const RowMatrix& x_batch) {
  expect_kernel(map, KernelKind::Rbf);
  return map.transform(x_batch);
}

RowMatrix arccos_features(const FeatureMap& map, const RowMatrix& x_batch) {
  expect_kernel(map, KernelKind::ArcCosine1);
  return map.transform(x_batch);
}

Vector fht_conv1d_features(const FeatureMap& map, const RowMatrix& seq) {
  expect_kernel(map, KernelKind::FhtConv1d);
  return map.transform_record(seq);
}

Vector fastconv1d_stage1(const FeatureMap& map, const RowMatrix& seq) {
  expect_kernel(map, KernelKind::FastConv1d);
  return map.stage1(seq);
}

Vector fastconv1d_features(const FeatureMap& map, const RowMatrix& seq) {
  expect_kernel(map, KernelKind::FastConv1d);
  return map.transform_record(seq);
}

Vector graph_rbf_features(const FeatureMap& map, const RowMatrix& nodes) {
  expect_kernel(map, KernelKind::GraphRbf);
  if (nodes.rows() == 0) throw ValidationError("graph has no nodes");
  return map.transform_record(nodes);
}

ChunkedDataset persist_stage1(const FeatureMap& map, const DataSource& source,
                              std::size_t chunk_rows, const std::filesystem::path& out_dir) {
  expect_kernel(map, KernelKind::FastConv1d);
  const std::size_t m1 = map.spec().stage1_width();
  Manifest extra{{"stage1_seed", std::to_string(map.spec().stage1_seed())},
                 {"stage1_source_kernel", "fast_conv1d"},
                 {"stage1_window", std::to_string(map.spec().window)}};
  ChunkWriter writer(out_dir, InputKind::FixedVector, m1, chunk_rows, extra);
  std::vector<double> buffer;
  std::vector<double> profile(m1);
  std::vector<float> as_float(m1);
  for (std::size_t c = 0; c < source.num_chunks(); ++c) {
    const Chunk chunk = source.load_chunk(c);
    for (std::size_t i = 0; i < chunk.size(); ++i) {
      map.stage1(chunk.record(i, buffer), profile);
      std::copy(profile.begin(), profile.end(), as_float.begin());
      writer.add(as_float, 1, chunk.targets()[i]);
    }
  }
  return writer.finish();
}

}  // namespace sorfgp
