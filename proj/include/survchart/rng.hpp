#pragma once

#include <cmath>
#include <cstdint>

namespace survchart {

// Counter-based generator (splitmix64 finalizer applied to key + counter).
// Each (seed, stream) pair yields an independent sequence, so draws for a
// given simulation unit never depend on evaluation order or thread layout.
class CounterRng {
public:
  CounterRng(std::uint64_t seed, std::uint64_t stream) : key_(derive(seed, stream)) {}

  std::uint64_t next_u64() {
    std::uint64_t z = key_ + (++ctr_) * 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  // uniform on the open interval (0,1); never returns an exact 0 or 1,
  // so -log(u) stays finite
  double uniform01() {
    return (static_cast<double>(next_u64() >> 12) + 0.5) * (1.0 / 4503599627370496.0);
  }

  double exponential(double rate) { return -std::log(uniform01()) / rate; }

  bool bernoulli(double p) { return uniform01() < p; }

  // index uniform on {0,...,n-1} via multiply-shift
  std::uint64_t below(std::uint64_t n) {
    return static_cast<std::uint64_t>(
        (static_cast<unsigned __int128>(next_u64()) * n) >> 64);
  }

  // standard normal, Box-Muller; the sine mate is cached
  double normal() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    double u1 = uniform01();
    double u2 = uniform01();
    double r = std::sqrt(-2.0 * std::log(u1));
    double a = 6.283185307179586476925286766559 * u2;
    spare_ = r * std::sin(a);
    have_spare_ = true;
    return r * std::cos(a);
  }

  double normal(double mean, double sd) { return mean + sd * normal(); }

  // truncated normal via rejection; the draw sequence is deterministic
  // for a fixed stream
  double normal_at_least(double mean, double sd, double lo) {
    for (;;) {
      double x = normal(mean, sd);
      if (x >= lo) return x;
    }
  }

private:
  static std::uint64_t mix(std::uint64_t z) {
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }
  static std::uint64_t derive(std::uint64_t seed, std::uint64_t stream) {
    std::uint64_t k = mix(seed + 0x9e3779b97f4a7c15ULL);
    return mix(k ^ mix(stream + 0xbf58476d1ce4e5b9ULL));
  }

  std::uint64_t key_;
  std::uint64_t ctr_ = 0;
  double spare_ = 0.0;
  bool have_spare_ = false;
};

} // namespace survchart
