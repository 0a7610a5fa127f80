#pragma once

#include <cstdint>
#include <initializer_list>
#include <algorithm>
#include <random>

namespace pbgan {

/// What a random stream is used for. Streams with different purposes or
/// indices never share state.
enum class RngPurpose : std::uint64_t {
  init = 1,
  data_scene = 2,
  data_split = 3,
  shuffle = 4,
  projection = 5,
  probe = 6,
  test = 7,
};

/// Deterministic stream keyed by (seed, purpose, indices...).
///
/// The key is derived by folding the inputs through the SplitMix64 finalizer,
/// so any sub-stream can be opened directly without replaying its siblings.
class RngStream {
 public:
  RngStream(std::uint64_t seed, RngPurpose purpose, std::initializer_list<std::uint64_t> indices = {});

  std::uint64_t key() const { return key_; }

  std::uint64_t next_u64() { return engine_(); }
  /// Uniform in [0, 1) with 53 random bits.
  double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  /// Uniform integer in [lo, hi].
  int uniform_int(int lo, int hi);
  double normal(double mean = 0.0, double stddev = 1.0);

  template <typename It>
  void shuffle(It first, It last) {
    std::shuffle(first, last, engine_);
  }

 private:
  std::uint64_t key_;
  std::mt19937_64 engine_;
  std::normal_distribution<double> normal_;
};

std::uint64_t splitmix64(std::uint64_t x);

}  // namespace pbgan
