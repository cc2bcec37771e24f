#pragma once

#include <cstdint>
#include <numeric>
#include <random>
#include <vector>

namespace mrmbench {

// std::uniform_int_distribution and std::shuffle are implementation-defined,
// so index draws and shuffles are spelled out to stay portable across
// standard libraries. The engine itself (mt19937_64) is fully specified.
using Rng = std::mt19937_64;

/// Uniform integer in [0, bound) by rejection sampling. `bound` must be > 0.
inline std::uint64_t uniform_below(Rng& rng, std::uint64_t bound) {
  const std::uint64_t limit = UINT64_MAX - (UINT64_MAX % bound + 1) % bound;
  std::uint64_t draw = rng();
  while (draw > limit) draw = rng();
  return draw % bound;
}

/// In-place Fisher-Yates shuffle driven by `rng`.
template <typename T>
void fisher_yates(std::vector<T>& items, Rng& rng) {
  for (std::size_t i = items.size(); i > 1; --i) {
    const auto j = static_cast<std::size_t>(uniform_below(rng, i));
    std::swap(items[i - 1], items[j]);
  }
}

/// 0..n-1 in seeded Fisher-Yates order.
inline std::vector<std::size_t> shuffled_indices(std::size_t n, std::uint64_t seed) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(seed);
  fisher_yates(order, rng);
  return order;
}

}  // namespace mrmbench
