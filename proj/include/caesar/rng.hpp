#pragma once

#include <cstdint>
#include <span>
#include <stdexcept>

namespace caesar {

/// Counter-based seeded generator. A (seed, stream) pair fully determines the
/// sequence of draws; distinct stream ids give statistically independent
/// streams, which is how sampling phases keep their data disjoint.
class RngStream {
 public:
  explicit RngStream(std::uint64_t seed, std::uint64_t stream = 0)
      : seed_(seed), stream_(stream), state_(init_state(seed, stream)) {}

  std::uint64_t next_u64() {
    // splitmix64
    std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ULL);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

  /// Uniform double in [0, 1), 53-bit resolution.
  double next_double() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  /// Draw an index from a (normalized) probability row. Falls back to the
  /// last positive entry if rounding pushes the draw past the cumulative sum.
  int categorical(std::span<const double> probs) {
    const double u = next_double();
    double acc = 0.0;
    int last_positive = -1;
    for (int i = 0; i < static_cast<int>(probs.size()); ++i) {
      if (probs[i] > 0.0) last_positive = i;
      acc += probs[i];
      if (u < acc) return i;
    }
    if (last_positive < 0) throw std::invalid_argument("categorical: all-zero probability row");
    return last_positive;
  }

  /// Derive an independent child stream. Children with distinct ids are
  /// disjoint from each other and from the parent.
  RngStream substream(std::uint64_t id) const {
    return RngStream(seed_, mix(stream_ ^ 0xD6E8FEB86659FD93ULL) ^ mix(id));
  }

  std::uint64_t seed() const { return seed_; }
  std::uint64_t stream() const { return stream_; }

 private:
  static std::uint64_t mix(std::uint64_t z) {
    z += 0x9E3779B97F4A7C15ULL;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }
  static std::uint64_t init_state(std::uint64_t seed, std::uint64_t stream) {
    return mix(mix(seed) ^ mix(~stream));
  }

  std::uint64_t seed_;
  std::uint64_t stream_;
  std::uint64_t state_;
};

}  // namespace caesar
