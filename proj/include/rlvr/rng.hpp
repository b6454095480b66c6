#pragma once

#include <cstdint>

namespace rlvr {

/// SplitMix64 finalizer (Steele, Lea, Flood 2014).
constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Counter-based generator keyed by (run_seed, step). Draw d of a stream is
///
///   k0 = splitmix64(run_seed)
///   k1 = splitmix64(k0 ^ (step * 0xd1b54a32d192ed03))
///   x  = splitmix64(k1 ^ (d * 0xaef17502108ef2d9 + 0x632be59bd9b4e019))
///
/// and uniform() maps the top 53 bits of x onto [0, 1). The output depends only
/// on the three integers, so any (seed, step) batch can be regenerated in
/// isolation and in any order.
class SeedStream {
 public:
  constexpr SeedStream(std::uint64_t run_seed, std::uint64_t step) noexcept
      : key_(splitmix64(splitmix64(run_seed) ^ (step * 0xd1b54a32d192ed03ULL))) {}

  constexpr std::uint64_t bits(std::uint64_t draw) const noexcept {
    return splitmix64(key_ ^ (draw * 0xaef17502108ef2d9ULL + 0x632be59bd9b4e019ULL));
  }

  constexpr double uniform(std::uint64_t draw) const noexcept {
    return static_cast<double>(bits(draw) >> 11) * 0x1.0p-53;
  }

 private:
  std::uint64_t key_;
};

/// Sequential convenience wrapper over SeedStream for code that just needs
/// "the next number" (property-test generators, oracle restarts).
class CounterRng {
 public:
  explicit CounterRng(std::uint64_t seed, std::uint64_t stream = 0) : stream_(seed, stream) {}

  std::uint64_t next_u64() noexcept { return stream_.bits(counter_++); }
  double next_uniform() noexcept { return stream_.uniform(counter_++); }
  double uniform(double lo, double hi) noexcept { return lo + (hi - lo) * next_uniform(); }
  /// Integer in [lo, hi], inclusive. Multiply-shift; bias is below 2^-32 for small ranges.
  std::uint64_t uniform_int(std::uint64_t lo, std::uint64_t hi) noexcept {
    const unsigned __int128 span = static_cast<unsigned __int128>(hi - lo) + 1;
    return lo + static_cast<std::uint64_t>((static_cast<unsigned __int128>(next_u64()) * span) >> 64);
  }

 private:
  SeedStream stream_;
  std::uint64_t counter_ = 0;
};

}  // namespace rlvr
