#include "transform/hadamard.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "util/error.hpp"
#include "util/rng.hpp"

namespace sorfgp {

namespace {

// Unnormalized butterflies; first two stages fused as radix-4.
void fwht_unnormalized(double* x, std::size_t n) {
  std::size_t h = 1;
  if (n >= 4) {
    for (std::size_t i = 0; i < n; i += 4) {
      const double a = x[i], b = x[i + 1], c = x[i + 2], d = x[i + 3];
      const double s0 = a + b, d0 = a - b, s1 = c + d, d1 = c - d;
      x[i] = s0 + s1;
      x[i + 1] = d0 + d1;
      x[i + 2] = s0 - s1;
      x[i + 3] = d0 - d1;
    }
    h = 4;
  }
  for (; h < n; h <<= 1) {
    for (std::size_t i = 0; i < n; i += 2 * h) {
      double* lo = x + i;
      double* hi = x + i + h;
      for (std::size_t j = 0; j < h; ++j) {
        const double a = lo[j];
        const double b = hi[j];
        lo[j] = a + b;
        hi[j] = a - b;
      }
    }
  }
}

}  // namespace

void fwht_inplace(std::span<double> buf) {
  const std::size_t n = buf.size();
  if (!is_power_of_two(n)) {
    throw ValidationError("fwht: length " + std::to_string(n) + " is not a power of two");
  }
  if (n == 1) return;
  fwht_unnormalized(buf.data(), n);
  const double s = 1.0 / std::sqrt(static_cast<double>(n));
  for (double& v : buf) v *= s;
}

// ---------------------------------------------------------------------------

SorfOperator SorfOperator::sample(std::uint64_t seed, std::size_t input_dim,
                                  std::size_t num_outputs) {
  require(input_dim >= 1, "sorf: input dimension must be >= 1");
  require(num_outputs >= 1, "sorf: number of outputs must be >= 1");
  const std::size_t padded = next_power_of_two(std::max<std::size_t>(input_dim, 2));
  const std::size_t blocks = (num_outputs + padded - 1) / padded;

  std::vector<std::int8_t> signs(blocks * 3 * padded);
  for (std::size_t b = 0; b < blocks; ++b) {
    for (std::size_t k = 0; k < 3; ++k) {
      CounterRng rng(seed, make_stream(StreamTag::SorfSign, b * 3 + k));
      std::int8_t* dst = signs.data() + (b * 3 + k) * padded;
      for (std::size_t i = 0; i < padded; ++i) dst[i] = (rng.next_u32() & 1u) ? 1 : -1;
    }
  }
  std::vector<double> chi(num_outputs);
  CounterRng chi_rng(seed, make_stream(StreamTag::SorfChi, 0));
  for (double& c : chi) c = chi_rng.chi(static_cast<double>(padded));
  return SorfOperator(input_dim, num_outputs, seed, std::move(signs), std::move(chi));
}

SorfOperator::SorfOperator(std::size_t input_dim, std::size_t num_outputs, std::uint64_t seed,
                           std::vector<std::int8_t> signs, std::vector<double> chi)
    : input_dim_(input_dim),
      padded_dim_(next_power_of_two(std::max<std::size_t>(input_dim, 2))),
      num_blocks_((num_outputs + padded_dim_ - 1) / padded_dim_),
      num_outputs_(num_outputs),
      seed_(seed),
      signs_(std::move(signs)),
      chi_(std::move(chi)) {
  require(input_dim_ >= 1 && num_outputs_ >= 1, "sorf: empty operator");
  require(signs_.size() == num_blocks_ * 3 * padded_dim_, "sorf: sign table has wrong size");
  require(chi_.size() == num_outputs_, "sorf: chi vector has wrong size");
  for (auto s : signs_) require(s == 1 || s == -1, "sorf: sign entries must be +-1");
  for (double c : chi_) require(c > 0.0, "sorf: chi entries must be positive");
}

std::span<const std::int8_t> SorfOperator::signs(std::size_t block, std::size_t k) const {
  return {signs_.data() + (block * 3 + k) * padded_dim_, padded_dim_};
}

void SorfOperator::apply(std::span<const double> x, std::span<double> out,
                         std::span<double> scratch) const {
  if (x.size() != input_dim_) {
    throw ValidationError("sorf: expected " + std::to_string(input_dim_) + " input columns, got " +
                          std::to_string(x.size()));
  }
  require(out.size() == num_outputs_, "sorf: output span has wrong length");
  require(scratch.size() >= padded_dim_, "sorf: scratch too small");
  const std::size_t dim = padded_dim_;
  double* buf = scratch.data();
  const double norm = 1.0 / std::sqrt(static_cast<double>(dim));
  // Three normalizations folded into one multiply at the end.
  const double total_norm = norm * norm * norm;
  for (std::size_t b = 0; b < num_blocks_; ++b) {
    std::copy(x.begin(), x.end(), buf);
    std::fill(buf + input_dim_, buf + dim, 0.0);
    for (std::size_t k = 0; k < 3; ++k) {
      const std::int8_t* s = signs_.data() + (b * 3 + k) * dim;
      for (std::size_t i = 0; i < dim; ++i) buf[i] *= s[i];
      fwht_unnormalized(buf, dim);
    }
    const std::size_t begin = b * dim;
    const std::size_t end = std::min(begin + dim, num_outputs_);
    for (std::size_t i = begin; i < end; ++i) out[i] = buf[i - begin] * total_norm * chi_[i];
  }
}

RowMatrix SorfOperator::apply(const RowMatrix& x_batch) const {
  if (static_cast<std::size_t>(x_batch.cols()) != input_dim_) {
    throw ValidationError("sorf: expected " + std::to_string(input_dim_) + " input columns, got " +
                          std::to_string(x_batch.cols()));
  }
  RowMatrix out(x_batch.rows(), num_outputs_);
  std::vector<double> scratch(padded_dim_);
  for (Eigen::Index r = 0; r < x_batch.rows(); ++r) {
    apply({x_batch.row(r).data(), input_dim_}, {out.row(r).data(), num_outputs_}, scratch);
  }
  return out;
}

// ---------------------------------------------------------------------------

SrhtOperator SrhtOperator::sample(std::uint64_t seed, std::size_t dim, std::size_t rank) {
  require(is_power_of_two(dim), "srht: dimension must be a power of two");
  if (rank > dim || rank == 0) {
    throw ValidationError("srht: invalid rank " + std::to_string(rank) + " for dimension " +
                          std::to_string(dim));
  }
  std::vector<double> signs(dim);
  CounterRng sign_rng(seed, make_stream(StreamTag::SrhtSign, 0));
  for (double& s : signs) s = sign_rng.rademacher();
  CounterRng row_rng(seed, make_stream(StreamTag::SrhtRows, 0));
  auto rows = sample_without_replacement(row_rng, dim, rank);
  return SrhtOperator(dim, std::move(signs), std::move(rows));
}

SrhtOperator::SrhtOperator(std::size_t dim, std::vector<double> signs,
                           std::vector<std::size_t> rows)
    : dim_(dim), signs_(std::move(signs)), rows_(std::move(rows)) {
  require(is_power_of_two(dim_), "srht: dimension must be a power of two");
  require(signs_.size() == dim_, "srht: sign vector has wrong length");
  if (rows_.empty() || rows_.size() > dim_) {
    throw ValidationError("srht: invalid rank " + std::to_string(rows_.size()) +
                          " for dimension " + std::to_string(dim_));
  }
  std::vector<bool> seen(dim_, false);
  for (auto r : rows_) {
    require(r < dim_ && !seen[r], "srht: row subset must hold distinct indices below dim");
    seen[r] = true;
  }
  scale_ = std::sqrt(static_cast<double>(dim_) / static_cast<double>(rows_.size()));
}

void SrhtOperator::apply(std::span<const double> v, std::span<double> out,
                         std::span<double> scratch) const {
  require(v.size() == dim_, "srht: input has wrong length");
  require(out.size() == rows_.size(), "srht: output has wrong length");
  require(scratch.size() >= dim_, "srht: scratch too small");
  double* buf = scratch.data();
  for (std::size_t i = 0; i < dim_; ++i) buf[i] = v[i] * signs_[i];
  fwht_inplace({buf, dim_});
  for (std::size_t l = 0; l < rows_.size(); ++l) out[l] = scale_ * buf[rows_[l]];
}

RowMatrix SrhtOperator::apply(const RowMatrix& v_batch) const {
  require(static_cast<std::size_t>(v_batch.cols()) == dim_, "srht: batch has wrong column count");
  RowMatrix out(v_batch.rows(), rows_.size());
  std::vector<double> scratch(dim_);
  for (Eigen::Index r = 0; r < v_batch.rows(); ++r) {
    apply({v_batch.row(r).data(), dim_}, {out.row(r).data(), rows_.size()}, scratch);
  }
  return out;
}

}  // namespace sorfgp
