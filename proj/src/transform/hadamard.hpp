#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "util/linalg.hpp"

namespace sorfgp {

constexpr bool is_power_of_two(std::size_t n) { return n != 0 && (n & (n - 1)) == 0; }

constexpr std::size_t next_power_of_two(std::size_t n) {
  std::size_t p = 1;
  while (p < n) p <<= 1;
  return p;
}

/// Normalized in-place Walsh-Hadamard transform (H * H = I). The length must
/// be a power of two; the 1/sqrt(n) factor is applied before returning.
void fwht_inplace(std::span<double> buf);

/// Structured orthogonal random projection: for each of `num_blocks` blocks
/// the zero-padded input goes through H*D3*H*D2*H*D1 (D1 first), the blocks
/// are concatenated, truncated to `num_outputs` and scaled by a chi diagonal.
class SorfOperator {
 public:
  /// Samples all diagonals from (seed, input_dim, num_outputs). Signs come
  /// from substream SorfSign(block*3 + k), the chi vector from SorfChi(0).
  static SorfOperator sample(std::uint64_t seed, std::size_t input_dim,
                             std::size_t num_outputs);

  /// Rebuilds an operator from stored diagonals.
  SorfOperator(std::size_t input_dim, std::size_t num_outputs, std::uint64_t seed,
               std::vector<std::int8_t> signs, std::vector<double> chi);

  std::size_t input_dim() const { return input_dim_; }
  std::size_t padded_dim() const { return padded_dim_; }
  std::size_t num_blocks() const { return num_blocks_; }
  std::size_t num_outputs() const { return num_outputs_; }
  std::uint64_t seed() const { return seed_; }

  /// Sign diagonal k (0 = applied first) of the given block.
  std::span<const std::int8_t> signs(std::size_t block, std::size_t k) const;
  std::span<const std::int8_t> all_signs() const { return signs_; }
  std::span<const double> chi() const { return chi_; }

  /// `scratch` must hold at least padded_dim() values.
  void apply(std::span<const double> x, std::span<double> out,
             std::span<double> scratch) const;

  RowMatrix apply(const RowMatrix& x_batch) const;

 private:
  std::size_t input_dim_;
  std::size_t padded_dim_;
  std::size_t num_blocks_;
  std::size_t num_outputs_;
  std::uint64_t seed_;
  std::vector<std::int8_t> signs_;  // num_blocks * 3 * padded_dim
  std::vector<double> chi_;         // num_outputs
};

/// Subsampled randomized Hadamard transform sqrt(M/L) * S * H * D.
class SrhtOperator {
 public:
  static SrhtOperator sample(std::uint64_t seed, std::size_t dim, std::size_t rank);

  SrhtOperator(std::size_t dim, std::vector<double> signs, std::vector<std::size_t> rows);

  std::size_t dim() const { return dim_; }
  std::size_t rank() const { return rows_.size(); }
  double scale() const { return scale_; }
  std::span<const double> signs() const { return signs_; }
  std::span<const std::size_t> rows() const { return rows_; }

  /// v has length dim(), out length rank(), scratch at least dim().
  void apply(std::span<const double> v, std::span<double> out, std::span<double> scratch) const;

  RowMatrix apply(const RowMatrix& v_batch) const;

 private:
  std::size_t dim_;
  std::vector<double> signs_;
  std::vector<std::size_t> rows_;
  double scale_;
};

// Free-function spellings of the operator entry points.
inline RowMatrix sorf_apply(const SorfOperator& op, const RowMatrix& x_batch) {
  return op.apply(x_batch);
}
inline RowMatrix srht_apply(const SrhtOperator& op, const RowMatrix& v_batch) {
  return op.apply(v_batch);
}
inline SorfOperator sample_diagonals(std::uint64_t seed, std::size_t d, std::size_t m) {
  return SorfOperator::sample(seed, d, m);
}

}  // namespace sorfgp
