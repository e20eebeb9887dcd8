#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>

namespace mrsa {

using Rng = std::mt19937_64;

// splitmix64 finalizer; used to turn (seed, tag, ...) tuples into
// well-separated stream seeds.
constexpr std::uint64_t mix64(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

constexpr std::uint64_t derive_seed(std::uint64_t seed,
                                    std::initializer_list<std::uint64_t> tags) noexcept {
  std::uint64_t h = mix64(seed);
  for (std::uint64_t t : tags) h = mix64(h ^ mix64(t));
  return h;
}

// Independent stream for a (seed, tags...) coordinate, e.g. (seed, round, user).
inline Rng derive_stream(std::uint64_t seed, std::initializer_list<std::uint64_t> tags) {
  return Rng(derive_seed(seed, tags));
}

// Stream tags; fixed values so derived streams are stable across releases.
namespace stream_tag {
inline constexpr std::uint64_t kRun = 0x52554eULL;
inline constexpr std::uint64_t kLocal = 0x4c4f43ULL;
inline constexpr std::uint64_t kData = 0x444154ULL;
inline constexpr std::uint64_t kModels = 0x4d4f44ULL;
inline constexpr std::uint64_t kDrift = 0x445249ULL;
inline constexpr std::uint64_t kTrial = 0x545249ULL;
inline constexpr std::uint64_t kDropout = 0x44524fULL;
}  // namespace stream_tag

}  // namespace mrsa
