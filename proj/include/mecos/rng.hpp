#pragma once

#include <cstdint>
#include <limits>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "mecos/error.hpp"

namespace mecos {

/// Seeded random stream. Distributions are computed here rather than with
/// the <random> distribution classes, whose output is implementation-defined,
/// so a seed reproduces the same draws with any standard library.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : engine_(seed) {}

  std::uint64_t next() { return engine_(); }

  /// Uniform integer in [0, n).
  std::size_t index(std::size_t n) {
    if (n == 0) throw DomainError("index() over an empty range");
    const std::uint64_t bound = static_cast<std::uint64_t>(n);
    const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                                std::numeric_limits<std::uint64_t>::max() % bound;
    std::uint64_t x;
    do {
      x = engine_();
    } while (x >= limit);
    return static_cast<std::size_t>(x % bound);
  }

  /// Uniform integer in [lo, hi].
  std::int64_t between(std::int64_t lo, std::int64_t hi) {
    return lo + static_cast<std::int64_t>(index(static_cast<std::size_t>(hi - lo + 1)));
  }

  /// Uniform real in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  bool bernoulli(double p) { return uniform() < p; }

  template <typename V>
  void shuffle(std::vector<V>& values) {
    for (std::size_t i = values.size(); i > 1; --i) std::swap(values[i - 1], values[index(i)]);
  }

  /// k distinct values from [0, n), in random order.
  std::vector<std::size_t> distinct(std::size_t n, std::size_t k) {
    if (k > n) throw DomainError("cannot draw " + std::to_string(k) + " distinct of " + std::to_string(n));
    std::vector<std::size_t> out;
    out.reserve(k);
    if (2 * k >= n) {
      std::vector<std::size_t> all(n);
      for (std::size_t i = 0; i < n; ++i) all[i] = i;
      for (std::size_t i = 0; i < k; ++i) std::swap(all[i], all[i + index(n - i)]);
      out.assign(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(k));
      return out;
    }
    while (out.size() < k) {
      const std::size_t candidate = index(n);
      bool seen = false;
      for (std::size_t v : out) seen = seen || v == candidate;
      if (!seen) out.push_back(candidate);
    }
    return out;
  }

  /// Independent child stream; deterministic in (this seed, salt).
  static Rng derive(std::uint64_t seed, std::uint64_t salt) {
    return Rng(splitmix(seed ^ splitmix(salt + 0x632be59bd9b4e019ULL)));
  }

  std::string state() const {
    std::ostringstream os;
    os << engine_;
    return os.str();
  }

  void restore(const std::string& state) {
    std::istringstream is(state);
    is >> engine_;
    if (!is) throw CheckpointError("unreadable RNG state");
  }

  friend bool operator==(const Rng& a, const Rng& b) { return a.engine_ == b.engine_; }

 private:
  static std::uint64_t splitmix(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
  }

  std::mt19937_64 engine_;
};

}  // namespace mecos
