#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <sstream>
#include <random>
#include <string>

namespace uavsac {

// SplitMix64 finalizer. Used to derive independent stream seeds from one master seed.
constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Stream tags for seed splitting.
enum class SeedStream : std::uint64_t {
  environment = 0x656e76ULL,   // "env"
  network_init = 0x6e6574ULL,  // "net"
  action_noise = 0x616374ULL,  // "act"
  replay = 0x726570ULL,        // "rep"
  evaluation = 0x6576616cULL,  // "eval"
};

constexpr std::uint64_t derive_seed(std::uint64_t master, SeedStream stream) noexcept {
  return splitmix64(master ^ splitmix64(static_cast<std::uint64_t>(stream)));
}

// Seed of episode `index` within a stream; episodes are reproducible in isolation.
constexpr std::uint64_t episode_seed(std::uint64_t stream_seed, std::uint64_t index) noexcept {
  return splitmix64(stream_seed + 0x632be59bd9b4e019ULL * (index + 1));
}

// mt19937_64 with library-independent real/normal conversions, so that a
// given seed yields the same draws with any standard library. The normal
// sampler holds no cached spare, so the full state is the engine state.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  // Uniform in [0, 1).
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n) {
    const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                                std::numeric_limits<std::uint64_t>::max() % n;
    std::uint64_t x = engine_();
    while (x >= limit) x = engine_();
    return x % n;
  }

  bool bernoulli(double p) { return uniform() < p; }

  // Box-Muller, one output per call.
  double normal() {
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  }

  double normal(double mean, double stddev) { return mean + stddev * normal(); }

  std::string serialize() const {
    std::ostringstream os;
    os << engine_;
    return os.str();
  }

  void deserialize(const std::string& state) {
    std::istringstream is(state);
    is >> engine_;
  }

  friend bool operator==(const Rng& a, const Rng& b) { return a.engine_ == b.engine_; }

 private:
  std::mt19937_64 engine_;
};

}  // namespace uavsac
