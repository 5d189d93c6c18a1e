#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <string_view>

namespace ntnopt {

/// Deterministic random stream derived from a master seed and a purpose
/// label, so independent parts of a run (node placement, rain draw, phase
/// sampling, Monte Carlo workers) consume independent substreams and the
/// whole pipeline reproduces bit-identically from one seed.
///
/// Gaussian draws use an explicit Box-Muller transform instead of
/// std::normal_distribution, whose output is not pinned down by the
/// standard and differs across library implementations.
class RandomStream {
 public:
  RandomStream(std::uint64_t seed, std::string_view label)
      : state_hash_(splitmix(seed ^ label_hash(label))),
        engine_(state_hash_) {}

  /// Substream for a worker index (Monte Carlo partitioning).
  RandomStream fork(std::uint64_t index) const {
    return RandomStream(splitmix(state_hash_ ^ (0x9e3779b97f4a7c15ULL + index)));
  }

  std::uint64_t next_u64() { return engine_(); }

  /// Uniform on [0, 1).
  double next_uniform() {
    return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
  }

  /// Standard normal via Box-Muller; caches the second deviate.
  double next_normal() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    double u1 = next_uniform();
    const double u2 = next_uniform();
    // Guard the log singularity at u1 = 0.
    while (u1 <= 0.0) u1 = next_uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double a = 2.0 * 3.141592653589793238462643383279502884 * u2;
    spare_ = r * std::sin(a);
    have_spare_ = true;
    return r * std::cos(a);
  }

  double next_normal(double mean, double stddev) {
    return mean + stddev * next_normal();
  }

 private:
  explicit RandomStream(std::uint64_t derived)
      : state_hash_(derived), engine_(derived) {}

  static std::uint64_t splitmix(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
  }

  static std::uint64_t label_hash(std::string_view label) {
    // FNV-1a.
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (char c : label) {
      h ^= static_cast<std::uint8_t>(c);
      h *= 0x100000001b3ULL;
    }
    return h;
  }

  std::uint64_t state_hash_ = 0;
  std::mt19937_64 engine_;
  bool have_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace ntnopt
