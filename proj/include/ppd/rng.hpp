#pragma once

#include <cmath>
#include <cstdint>

namespace ppd {

/// splitmix64 step. Used both as a stand-alone mixer and to derive
/// independent seeds for sub-streams.
inline std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t salt) {
  std::uint64_t s = seed ^ (0x6a09e667f3bcc909ULL + salt * 0x9e3779b97f4a7c15ULL);
  splitmix64(s);
  return splitmix64(s);
}

/// Small deterministic generator. xoshiro-free on purpose: the exact output
/// sequence is part of the artifact's reproducibility contract, so the
/// implementation is pinned here rather than delegated to <random>.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : state_(seed ^ 0x2545f4914f6cdd1dULL) {
    // warm up so that small seeds do not produce correlated leading draws
    splitmix64(state_);
  }

  std::uint64_t next_u64() { return splitmix64(state_); }

  /// Uniform in [0, 1).
  double uniform() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Uniform integer in [0, n).
  std::uint64_t uniform_index(std::uint64_t n) {
    return n == 0 ? 0 : next_u64() % n;
  }

  /// Standard normal via Box-Muller (both draws consumed, one returned;
  /// keeps the stream position independent of caller pairing).
  double gaussian() {
    double u1 = uniform();
    double u2 = uniform();
    if (u1 < 1e-300) u1 = 1e-300;
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586477 * u2);
  }

  /// Derive an independent child stream.
  Rng derive(std::uint64_t salt) const { return Rng(mix_seed(state_, salt)); }

 private:
  std::uint64_t state_;
};

/// Counter-based gaussian noise, addressable by (seed, sample, step, lane).
/// Stateless so that an external guidance process can reproduce the exact
/// noise sequence of the in-process oracle from the handshake seed alone.
inline double counter_gaussian(std::uint64_t seed, std::uint64_t sample,
                               std::uint64_t step, std::uint64_t lane) {
  std::uint64_t s = seed;
  s = mix_seed(s, 0x53a1c3u + sample);
  s = mix_seed(s, 0x9be2d7u + step);
  s = mix_seed(s, 0x11u + lane);
  Rng r(s);
  return r.gaussian();
}

}  // namespace ppd
