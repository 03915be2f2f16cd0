#include "metaccent/rng.hpp"

#include <bit>
#include <cmath>
#include <cstdio>
#include <numbers>

#include "metaccent/error.hpp"

namespace metaccent {

namespace {

std::uint64_t splitmix64(std::uint64_t& x) {
  x += 0x9e3779b97f4a7c15ULL;
  std::uint64_t z = x;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace

Rng::Rng(std::uint64_t seed) : origin_seed_(seed) {
  std::uint64_t x = seed;
  for (auto& word : s_) word = splitmix64(x);
}

std::uint64_t Rng::next_u64() {
  const std::uint64_t result = std::rotl(s_[1] * 5, 7) * 9;
  const std::uint64_t t = s_[1] << 17;
  s_[2] ^= s_[0];
  s_[3] ^= s_[1];
  s_[1] ^= s_[2];
  s_[0] ^= s_[3];
  s_[2] ^= t;
  s_[3] = std::rotl(s_[3], 45);
  return result;
}

double Rng::uniform() {
  return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double Rng::uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

double Rng::normal() {
  const double u1 = 1.0 - uniform();  // (0, 1]
  const double u2 = uniform();
  return std::sqrt(-2.0 * std::log(u1)) *
         std::cos(2.0 * std::numbers::pi * u2);
}

std::uint64_t Rng::below(std::uint64_t n) {
  if (n == 0) throw UsageError("rng.below: n must be positive");
  const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                              std::numeric_limits<std::uint64_t>::max() % n;
  std::uint64_t v = next_u64();
  while (v >= limit) v = next_u64();
  return v % n;
}

std::vector<std::size_t> Rng::sample_indices(std::size_t n, std::size_t k) {
  std::vector<std::size_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = i;
  shuffle(idx.begin(), idx.end());
  if (k < n) idx.resize(k);
  return idx;
}

Rng Rng::split(std::string_view key) const {
  std::uint64_t mixed = origin_seed_ ^ (fnv1a(key) + 0x9e3779b97f4a7c15ULL);
  return Rng(splitmix64(mixed));
}

std::string Rng::state_hex() const {
  char buf[5 * 17];
  std::snprintf(buf, sizeof(buf), "%016llx:%016llx:%016llx:%016llx:%016llx",
                static_cast<unsigned long long>(origin_seed_),
                static_cast<unsigned long long>(s_[0]),
                static_cast<unsigned long long>(s_[1]),
                static_cast<unsigned long long>(s_[2]),
                static_cast<unsigned long long>(s_[3]));
  return buf;
}

Rng Rng::from_state_hex(const std::string& hex) {
  Rng r;
  unsigned long long w[5];
  if (std::sscanf(hex.c_str(), "%llx:%llx:%llx:%llx:%llx", &w[0], &w[1], &w[2],
                  &w[3], &w[4]) != 5) {
    throw DataError("rng.from_state_hex: malformed state string '" + hex + "'");
  }
  r.origin_seed_ = w[0];
  for (int i = 0; i < 4; ++i) r.s_[i] = w[i + 1];
  return r;
}

}  // namespace metaccent
