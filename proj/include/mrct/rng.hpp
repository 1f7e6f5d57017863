#pragma once

#include <cstdint>
#include <string_view>

#include <boost/random/mersenne_twister.hpp>
#include <boost/random/normal_distribution.hpp>

namespace mrct {

/// Recorded in every result file so that a run can be matched to the
/// generator that produced it. Boost's ziggurat normal sampler is a fixed
/// algorithm, unlike std::normal_distribution whose output is
/// implementation-defined.
inline constexpr std::string_view kRngName = "mt19937_64/boost-ziggurat-normal/splitmix-streams-v1";

/// SplitMix64 finalizer.
constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

/// Derives an independent stream seed from a root seed and a path of
/// indices, e.g. stream_seed(seed, row, replicate).
template <typename... Ix>
constexpr std::uint64_t stream_seed(std::uint64_t root, Ix... path) noexcept {
  std::uint64_t s = mix64(root);
  ((s = mix64(s ^ mix64(static_cast<std::uint64_t>(path) + 0x632be59bd9b4e019ULL))), ...);
  return s;
}

/// Standard normal variates from a seeded stream.
class NormalStream {
 public:
  explicit NormalStream(std::uint64_t seed) : engine_(seed) {}

  double operator()() { return normal_(engine_); }

  boost::random::mt19937_64& engine() { return engine_; }

 private:
  boost::random::mt19937_64 engine_;
  boost::random::normal_distribution<double> normal_{0.0, 1.0};
};

}  // namespace mrct
