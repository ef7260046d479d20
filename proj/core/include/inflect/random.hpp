#pragma once

// Seeded random streams. All randomness in the toolkit comes from one master
// seed split into named sub-streams, so turning one feature on or off never
// shifts another feature's draws. The helpers below avoid the
// implementation-defined std:: distributions so results match across
// standard libraries.

#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <string_view>
#include <utility>

namespace inflect {

using Rng = std::mt19937_64;

std::uint64_t splitmix64(std::uint64_t x);

// Seed for sub-stream `name` (and optional index) of `master`.
std::uint64_t derive_seed(std::uint64_t master, std::string_view name, std::uint64_t index = 0);

inline Rng make_stream(std::uint64_t master, std::string_view name, std::uint64_t index = 0) {
  return Rng(derive_seed(master, name, index));
}

// Uniform integer in [0, n). n must be positive.
std::size_t uniform_index(Rng& rng, std::size_t n);

// Uniform double in [0, 1).
double uniform01(Rng& rng);

inline bool bernoulli(Rng& rng, double p) {
  if (p <= 0.0) return false;
  if (p >= 1.0) return true;
  return uniform01(rng) < p;
}

template <class T>
void shuffle(std::span<T> items, Rng& rng) {
  for (std::size_t i = items.size(); i > 1; --i) {
    const std::size_t j = uniform_index(rng, i);
    using std::swap;
    swap(items[i - 1], items[j]);
  }
}

}  // namespace inflect
