#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace metaccent {

// Deterministic PRNG (xoshiro256**) with explicit, serializable state.
// std::mt19937 plus the standard distributions are not bit-stable across
// standard libraries, and checkpoints must replay byte-identical runs, so
// every random draw in the project goes through this class.
//
// Independent streams are derived with split("key"): the derived stream
// depends only on the seed this generator was constructed from and the key,
// never on how many values were drawn in between.
class Rng {
 public:
  explicit Rng(std::uint64_t seed);

  std::uint64_t next_u64();

  // Uniform in [0, 1), 53-bit resolution.
  double uniform();
  double uniform(double lo, double hi);

  // Standard normal via Box-Muller (no cached spare, so the draw count is
  // a pure function of call count).
  double normal();

  // Unbiased uniform integer in [0, n). n must be > 0.
  std::uint64_t below(std::uint64_t n);

  template <typename It>
  void shuffle(It first, It last) {
    const auto n = static_cast<std::uint64_t>(last - first);
    for (std::uint64_t i = n; i > 1; --i) {
      const std::uint64_t j = below(i);
      std::swap(first[i - 1], first[j]);
    }
  }

  // First k elements of a seeded shuffle of [0, n): sampling without
  // replacement.
  std::vector<std::size_t> sample_indices(std::size_t n, std::size_t k);

  // Stream keyed by (construction seed, key); draws made on this generator
  // do not affect it.
  Rng split(std::string_view key) const;

  // State round-trip for checkpoints: "seed:s0:s1:s2:s3" in hex.
  std::string state_hex() const;
  static Rng from_state_hex(const std::string& hex);

 private:
  Rng() = default;

  std::uint64_t origin_seed_ = 0;
  std::array<std::uint64_t, 4> s_{};
};

}  // namespace metaccent
