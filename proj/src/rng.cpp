#include "pcfed/rng.hpp"

#include <cmath>
#include <unordered_set>

#include "pcfed/errors.hpp"

namespace pcfed {

namespace {

inline std::uint64_t rotl(std::uint64_t x, int k) {
  return (x << k) | (x >> (64 - k));
}

inline std::uint64_t splitmix_next(std::uint64_t& state) {
  state += 0x9E3779B97F4A7C15ULL;
  std::uint64_t z = state;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

constexpr double kTwoPi = 6.283185307179586476925286766559;

}  // namespace

RngStream::RngStream(std::uint64_t seed, std::uint64_t stream_id)
    : seed_(seed), stream_id_(stream_id) {
  std::uint64_t mixer = seed ^ (stream_id * 0x9E3779B97F4A7C15ULL + 0xBF58476D1CE4E5B9ULL);
  for (auto& word : state_) word = splitmix_next(mixer);
  if ((state_[0] | state_[1] | state_[2] | state_[3]) == 0) {
    state_[0] = 0x9E3779B97F4A7C15ULL;
  }
}

std::uint64_t RngStream::next_u64() {
  const std::uint64_t result = rotl(state_[1] * 5, 7) * 9;
  const std::uint64_t t = state_[1] << 17;
  state_[2] ^= state_[0];
  state_[3] ^= state_[1];
  state_[1] ^= state_[2];
  state_[0] ^= state_[3];
  state_[2] ^= t;
  state_[3] = rotl(state_[3], 45);
  return result;
}

double RngStream::next_unit() {
  return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double RngStream::next_gaussian() {
  if (has_spare_) {
    has_spare_ = false;
    return spare_gaussian_;
  }
  // First uniform shifted into (0, 1] so the log is finite.
  const double u1 = static_cast<double>((next_u64() >> 11) + 1) * 0x1.0p-53;
  const double u2 = next_unit();
  const double radius = std::sqrt(-2.0 * std::log(u1));
  const double angle = kTwoPi * u2;
  spare_gaussian_ = radius * std::sin(angle);
  has_spare_ = true;
  return radius * std::cos(angle);
}

std::uint64_t RngStream::next_below(std::uint64_t bound) {
  if (bound == 0) throw ValidationError("next_below: bound must be positive");
  const std::uint64_t threshold = (0 - bound) % bound;
  for (;;) {
    const std::uint64_t r = next_u64();
    if (r >= threshold) return r % bound;
  }
}

std::vector<std::size_t> sample_indices(RngStream& stream, std::size_t population,
                                        std::size_t batch) {
  if (batch == 0 || batch > population) {
    throw ValidationError("sample_indices: need 1 <= batch <= population");
  }
  // Floyd: for j in [population-batch, population), draw t in [0, j]; insert t
  // unless taken, else insert j. Uniform over subsets, no rejection loop.
  std::vector<std::size_t> out;
  out.reserve(batch);
  std::unordered_set<std::size_t> taken;
  taken.reserve(batch * 2);
  for (std::size_t j = population - batch; j < population; ++j) {
    const std::size_t t = static_cast<std::size_t>(stream.next_below(j + 1));
    if (taken.insert(t).second) {
      out.push_back(t);
    } else {
      taken.insert(j);
      out.push_back(j);
    }
  }
  return out;
}

}  // namespace pcfed
