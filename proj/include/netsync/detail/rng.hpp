#ifndef NETSYNC_DETAIL_RNG_HPP_
#define NETSYNC_DETAIL_RNG_HPP_

#include <cstdint>
#include <random>

namespace netsync::detail {

/// Uniform double in [0, 1) from the top 53 bits of the generator output.
/// Used instead of std::uniform_real_distribution so that streams are
/// bit-identical across standard library implementations.
inline double uniform_unit(std::mt19937_64& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

inline double uniform(std::mt19937_64& rng, double lo, double hi) {
  return lo + (hi - lo) * uniform_unit(rng);
}

/// Independent substream for (seed, a, b), e.g. one per directed edge.
inline std::mt19937_64 substream(std::uint64_t seed, int a, int b) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed),
                    static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(a),
                    static_cast<std::uint32_t>(b)};
  return std::mt19937_64(seq);
}

}  // namespace netsync::detail

#endif  // NETSYNC_DETAIL_RNG_HPP_
