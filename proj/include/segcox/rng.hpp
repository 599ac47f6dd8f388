#pragma once

#include <cstdint>
#include <random>

namespace segcox {

using RngStream = std::mt19937_64;

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Purpose tags for the sub-streams of one replication.
enum class StreamPurpose : std::uint64_t { Cohort = 1, Validation = 2, Bootstrap = 3 };

/// Counter-based split: the stream for (root, counter, purpose) depends on
/// nothing else, so replications can be generated in any order.
inline RngStream make_stream(std::uint64_t root, std::uint64_t counter, std::uint64_t purpose) {
  const std::uint64_t a = splitmix64(root);
  const std::uint64_t b = splitmix64(a ^ splitmix64(counter + 0x632be59bd9b4e019ULL));
  const std::uint64_t c = splitmix64(b ^ splitmix64(purpose * 0x8cb92ba72f3d8dd7ULL));
  std::seed_seq seq{static_cast<std::uint32_t>(c), static_cast<std::uint32_t>(c >> 32),
                    static_cast<std::uint32_t>(b), static_cast<std::uint32_t>(b >> 32)};
  return RngStream(seq);
}

inline RngStream make_stream(std::uint64_t root, std::uint64_t counter, StreamPurpose purpose) {
  return make_stream(root, counter, static_cast<std::uint64_t>(purpose));
}

}  // namespace segcox
