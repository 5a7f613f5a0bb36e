#pragma once

#include <cmath>
#include <cstdint>

namespace csb {

namespace detail {

// SplitMix64 finalizer. Good avalanche, cheap, and stateless.
inline std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

inline std::uint64_t mix2(std::uint64_t a, std::uint64_t b) {
  return mix64(a ^ (0x9e3779b97f4a7c15ull + (b << 6) + (b >> 2)) ^ mix64(b));
}

}  // namespace detail

/// Counter-based generator: the stream identity is a key, draws advance a
/// counter, and child streams derive from (key, salt). Derivation is what
/// makes node/row/epoch streams independent of execution order, so sampling
/// stays bit-reproducible under any thread count.
class Rng {
 public:
  Rng() : key_(0), ctr_(0) {}
  explicit Rng(std::uint64_t seed) : key_(detail::mix64(seed ^ 0xc5b0c5b0c5b0c5b0ull)), ctr_(0) {}

  /// Independent child stream. Does not disturb this stream's counter.
  Rng derive(std::uint64_t salt) const {
    Rng r;
    r.key_ = detail::mix2(key_, salt);
    r.ctr_ = 0;
    return r;
  }
  Rng derive(std::uint64_t a, std::uint64_t b) const { return derive(detail::mix2(a, b)); }
  Rng derive(std::uint64_t a, std::uint64_t b, std::uint64_t c) const {
    return derive(detail::mix2(detail::mix2(a, b), c));
  }

  std::uint64_t next_u64() { return detail::mix2(key_, ctr_++); }

  /// Uniform on (0,1]: never returns 0, so log() below is safe.
  double uniform01() {
    const std::uint64_t u = next_u64();
    return (static_cast<double>(u >> 11) + 1.0) * 0x1.0p-53;
  }

  /// Uniform on [lo, hi).
  double uniform(double lo, double hi) { return lo + (hi - lo) * (uniform01() - 0x1.0p-53); }

  /// Standard normal via Box-Muller. Consumes exactly two draws per call
  /// (no caching), keeping the stream position a pure function of the call
  /// count.
  double normal() {
    const double u1 = uniform01();
    const double u2 = uniform01();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925286766559 * u2);
  }

  std::uint64_t key() const { return key_; }

 private:
  std::uint64_t key_;
  std::uint64_t ctr_;
};

/// FNV-1a over bytes; used for config/content hashes in reports.
inline std::uint64_t fnv1a(const void* data, std::size_t n, std::uint64_t h = 0xcbf29ce484222325ull) {
  const unsigned char* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ull;
  }
  return h;
}

}  // namespace csb
