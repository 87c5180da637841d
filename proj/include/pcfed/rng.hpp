#pragma once

#include <array>
#include <cstdint>
#include <cstddef>
#include <vector>

namespace pcfed {

// Counter-keyed xoshiro256** stream. Every consumer of randomness owns a
// (seed, stream_id) pair; two streams with different ids never correlate and
// draws on one stream do not perturb another. The generator, the uniform
// double construction, the gaussian transform and the index sampler are all
// written out explicitly so a given (seed, stream_id) replays the same
// sequence on any build.
class RngStream {
 public:
  RngStream(std::uint64_t seed, std::uint64_t stream_id);

  std::uint64_t seed() const { return seed_; }
  std::uint64_t stream_id() const { return stream_id_; }

  std::uint64_t next_u64();

  // Uniform on [0, 1) with 53 random bits.
  double next_unit();

  // Standard normal via Box-Muller; caches the paired draw.
  double next_gaussian();

  // Uniform on {0, ..., bound-1}, rejection-corrected so every value has
  // exactly equal probability. bound must be >= 1.
  std::uint64_t next_below(std::uint64_t bound);

 private:
  std::array<std::uint64_t, 4> state_{};
  std::uint64_t seed_ = 0;
  std::uint64_t stream_id_ = 0;
  double spare_gaussian_ = 0.0;
  bool has_spare_ = false;
};

// batch distinct indices drawn uniformly without replacement from
// {0, ..., population-1} (Floyd's algorithm, insertion order).
// Requires 1 <= batch <= population.
std::vector<std::size_t> sample_indices(RngStream& stream, std::size_t population,
                                        std::size_t batch);

// Stream-id allocation. Gradient streams use the agent index directly; every
// other consumer gets a reserved id in the upper half so adding agents never
// collides with bookkeeping streams.
inline constexpr std::uint64_t kKstarStreamId = (1ULL << 63);
inline constexpr std::uint64_t kParticipationStreamId = (1ULL << 63) + 1;
inline constexpr std::uint64_t kDiagnosticsStreamId = (1ULL << 63) + 2;
inline constexpr std::uint64_t kProblemStreamId = (1ULL << 63) + 3;
inline constexpr std::uint64_t kPartitionStreamId = (1ULL << 63) + 4;
inline constexpr std::uint64_t kDataStreamId = (1ULL << 63) + 5;

}  // namespace pcfed
