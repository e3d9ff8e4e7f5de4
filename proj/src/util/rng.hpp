#pragma once

#include <array>
#include <cstdint>
#include <string_view>
#include <vector>

namespace sorfgp {

// Identity recorded in dataset and model manifests.
inline constexpr std::string_view kRngIdentity = "philox4x32-10/stream-v1";

// Substream tags. A substream is addressed by (seed, tag, index); the tag
// occupies the top byte of the 64-bit stream id and the index the rest.
enum class StreamTag : std::uint64_t {
  SorfSign = 1,      // index = block * 3 + diagonal
  SorfChi = 2,
  SrhtSign = 3,
  SrhtRows = 4,
  NystromGauss = 5,
  Probe = 6,
  Tuning = 7,
  Acquisition = 8,
  Clustering = 9,
  ActiveLearning = 10,
  Synthetic = 11,
  Derive = 15,       // child seeds, index = SeedPurpose
};

enum class SeedPurpose : std::uint64_t {
  Variance = 1,
  Stage1 = 2,
  Stage2 = 3,
  Preconditioner = 4,
  Probes = 5,
};

constexpr std::uint64_t make_stream(StreamTag tag, std::uint64_t index) {
  return (static_cast<std::uint64_t>(tag) << 56) | (index & 0x00FFFFFFFFFFFFFFull);
}

// Philox4x32 with 10 rounds. Key = seed, counter words 0-1 = block position
// within the substream, counter words 2-3 = stream id.
std::array<std::uint32_t, 4> philox4x32_10(std::array<std::uint32_t, 4> ctr,
                                           std::array<std::uint32_t, 2> key);

class CounterRng {
 public:
  CounterRng(std::uint64_t seed, std::uint64_t stream);

  std::uint32_t next_u32();
  std::uint64_t next_u64();
  // Open interval (0, 1), 53-bit resolution.
  double uniform();
  double normal();
  double gamma(double shape);
  double chi(double dof);
  double rademacher() { return (next_u32() & 1u) ? 1.0 : -1.0; }
  // Unbiased integer in [0, n).
  std::uint64_t below(std::uint64_t n);

 private:
  std::array<std::uint32_t, 2> key_;
  std::uint64_t stream_;
  std::uint64_t block_ = 0;
  std::array<std::uint32_t, 4> buf_{};
  int pos_ = 4;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

std::uint64_t derive_seed(std::uint64_t seed, SeedPurpose purpose);

// k distinct indices from [0, n), in draw order.
std::vector<std::size_t> sample_without_replacement(CounterRng& rng, std::size_t n,
                                                    std::size_t k);

}  // namespace sorfgp
