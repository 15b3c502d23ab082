#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace magr {

/// xoshiro256** seeded through splitmix64.
///
/// The raw 64-bit stream is fully specified and therefore identical on every
/// platform: state words are s[i] = splitmix64 outputs 0..3 started from
/// `seed`, and next_u64() is the reference xoshiro256** step (rotl(s1*5,7)*9).
/// uniform() maps the top 53 bits to [0,1). uniform_index() uses Lemire's
/// multiply-shift with rejection, so it is unbiased and also bit-exact.
/// normal() is Box-Muller over two uniform() draws; it is reproducible
/// wherever std::log/std::sqrt/std::cos are correctly rounded.
class SeededRng {
 public:
  explicit SeededRng(std::uint64_t seed = 0);

  std::uint64_t seed() const noexcept { return seed_; }

  std::uint64_t next_u64();
  double uniform();
  /// Uniform integer in [0, n); n must be positive.
  std::size_t uniform_index(std::size_t n);
  double normal();

  /// Independent stream derived from this generator's seed and a stream id.
  SeededRng fork(std::uint64_t stream) const;

  template <typename T>
  void shuffle(std::span<T> items) {
    for (std::size_t i = items.size(); i > 1; --i) {
      const std::size_t j = uniform_index(i);
      std::swap(items[i - 1], items[j]);
    }
  }

 private:
  std::uint64_t seed_;
  std::uint64_t s_[4];
  bool has_spare_ = false;
  double spare_ = 0.0;
};

std::uint64_t splitmix64(std::uint64_t& state);

}  // namespace magr
