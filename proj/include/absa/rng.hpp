#pragma once

#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "absa/common.hpp"

namespace absa {

// Deterministic random stream: std::mt19937_64 (bit-exact across platforms by
// the standard) plus explicit float mapping, so the same seed yields the same
// draw sequence everywhere. Every raw draw is counted, which lets a stream be
// serialized as (name, seed, count) and restored exactly.
class RngStream {
 public:
  RngStream() : RngStream(0, "root") {}
  RngStream(uint64_t seed, std::string name)
      : name_(std::move(name)), seed_(seed), gen_(seed) {}

  // Named child stream. Child seed = splitmix64(seed ^ fnv1a64(name)), so
  // distinct names give independent, reproducible streams.
  RngStream substream(std::string_view name) const {
    uint64_t s = splitmix64(seed_ ^ fnv1a64(name));
    return RngStream(s, name_ + "/" + std::string(name));
  }

  uint64_t next_u64() {
    ++count_;
    return gen_();
  }

  // Uniform on [0,1) with 53-bit resolution.
  double uniform01() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  // Uniform on the open interval (lo, hi): the mantissa is offset by half an
  // ulp so neither endpoint can be produced.
  double uniform_open(double lo, double hi) {
    double u = (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53;
    return lo + (hi - lo) * u;
  }

  // Unbiased integer in [0, n). Rejection sampling; draw count stays
  // deterministic for a fixed seed.
  uint64_t below(uint64_t n) {
    if (n == 0) throw std::invalid_argument("RngStream::below: n must be positive");
    uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    uint64_t x;
    do {
      x = next_u64();
    } while (x >= limit);
    return x % n;
  }

  bool bernoulli(double p) { return uniform01() < p; }

  // In-place Fisher-Yates. std::shuffle is implementation-defined, this is not.
  template <class V>
  void shuffle(V& v) {
    for (size_t i = v.size(); i > 1; --i) {
      size_t j = static_cast<size_t>(below(i));
      std::swap(v[i - 1], v[j]);
    }
  }

  const std::string& name() const { return name_; }
  uint64_t seed() const { return seed_; }
  uint64_t draw_count() const { return count_; }

  // Rebuild a stream mid-sequence from its serialized (seed, count) state.
  static RngStream restore(uint64_t seed, std::string name, uint64_t count) {
    RngStream s(seed, std::move(name));
    s.gen_.discard(count);
    s.count_ = count;
    return s;
  }

  static uint64_t splitmix64(uint64_t x) {
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
  }

 private:
  std::string name_;
  uint64_t seed_ = 0;
  uint64_t count_ = 0;
  std::mt19937_64 gen_;
};

}  // namespace absa
