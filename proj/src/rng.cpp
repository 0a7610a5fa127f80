#include "pbgan/rng.hpp"

#include <algorithm>

namespace pbgan {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

namespace {

std::uint64_t derive_key(std::uint64_t seed, RngPurpose purpose, std::initializer_list<std::uint64_t> indices) {
  std::uint64_t k = splitmix64(seed);
  k = splitmix64(k ^ static_cast<std::uint64_t>(purpose));
  std::uint64_t position = 0;
  for (std::uint64_t i : indices) {
    // Mixing in the position keeps (1, 2) and (2, 1) apart.
    k = splitmix64(k ^ splitmix64(i + (++position) * 0xD1B54A32D192ED03ULL));
  }
  return splitmix64(k ^ indices.size());
}

}  // namespace

RngStream::RngStream(std::uint64_t seed, RngPurpose purpose, std::initializer_list<std::uint64_t> indices)
    : key_(derive_key(seed, purpose, indices)), engine_(key_) {}

double RngStream::uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

int RngStream::uniform_int(int lo, int hi) {
  const std::uint64_t span = static_cast<std::uint64_t>(hi - lo) + 1;
  return lo + static_cast<int>(engine_() % span);
}

double RngStream::normal(double mean, double stddev) { return mean + stddev * normal_(engine_); }

}  // namespace pbgan
