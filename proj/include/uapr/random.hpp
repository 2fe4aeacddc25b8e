#ifndef UAPR_RANDOM_HPP_
#define UAPR_RANDOM_HPP_

#include <cstdint>
#include <random>

namespace uapr {

// Generator keyed on (seed, stream) so independent draws need no shared state.
inline std::mt19937_64 keyed_rng(std::uint64_t seed, std::uint64_t stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32)};
  return std::mt19937_64(seq);
}

}  // namespace uapr

#endif  // UAPR_RANDOM_HPP_
