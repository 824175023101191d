#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>

namespace ordsim {

/// SplitMix64 finalizer; a bijective 64-bit mixer.
constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

/// Seed of the private stream for one (scenario, replication) pair:
/// mix(mix(mix(master) ^ scenario_id) ^ rep_index). Streams never share state,
/// so the schedule that runs the pairs cannot affect their values.
constexpr std::uint64_t derive_stream_seed(std::uint64_t master_seed, std::uint64_t scenario_id,
                                           std::uint64_t rep_index) noexcept {
  return mix64(mix64(mix64(master_seed) ^ scenario_id) ^ rep_index);
}

/// Random stream backed by mt19937_64 (whose output sequence is fixed by the
/// C++ standard). Uniform and normal variates are derived here rather than via
/// <random> distributions so the values are identical across standard libraries.
class Stream {
 public:
  explicit Stream(std::uint64_t seed) : engine_(seed) {}
  Stream(std::uint64_t master_seed, std::uint64_t scenario_id, std::uint64_t rep_index)
      : engine_(derive_stream_seed(master_seed, scenario_id, rep_index)) {}

  /// Uniform on [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  /// Standard normal via Box-Muller; the second variate of each pair is cached.
  double normal() {
    if (has_cached_) {
      has_cached_ = false;
      return cached_;
    }
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    const double radius = std::sqrt(-2.0 * std::log(u1));
    const double angle = 2.0 * std::numbers::pi * u2;
    cached_ = radius * std::sin(angle);
    has_cached_ = true;
    return radius * std::cos(angle);
  }

  double normal(double mean, double sd) { return mean + sd * normal(); }

 private:
  std::mt19937_64 engine_;
  double cached_ = 0.0;
  bool has_cached_ = false;
};

}  // namespace ordsim
