// panorad is Copyright(c) 2026 the panorad authors.
// The panorad source code is licensed under the Apache License, Version 2.0.
// SPDX: Apache-2.0

#ifndef PANORAD_COMMON_H
#define PANORAD_COMMON_H

#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>

#include <Eigen/Dense>
#include <Eigen/Geometry>

namespace panorad {

using Vec3 = Eigen::Vector3d;
using Quat = Eigen::Quaterniond;

inline constexpr double kPi = 3.14159265358979323846;
inline constexpr double kTwoPi = 2.0 * kPi;

// Exit-code taxonomy shared with the CLI: 1 usage, 2 data, 3 numeric.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct DataError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Counter-based RNG: a keyed hash of an incrementing counter. Streams are
/// fully determined by (seed, stream), so per-pixel/per-ray draws are
/// independent of scheduling and worker count.
class CounterRng {
 public:
  explicit CounterRng(uint64_t seed, uint64_t stream = 0)
      : key_(derive_key(seed, stream)), counter_(0) {}

  uint64_t next_u64() { return mix64(key_ + 0x9E3779B97F4A7C15ull * ++counter_); }

  /// Uniform in [0, 1).
  double next_double() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * next_double(); }

  /// Integer in [0, n).
  uint64_t next_below(uint64_t n) { return next_u64() % n; }

  /// Standard normal (Box-Muller).
  double normal() {
    double u1 = next_double();
    double u2 = next_double();
    while (u1 <= 0.0) u1 = next_double();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(kTwoPi * u2);
  }

  static uint64_t mix64(uint64_t x) {
    x ^= x >> 30;
    x *= 0xBF58476D1CE4E5B9ull;
    x ^= x >> 27;
    x *= 0x94D049BB133111EBull;
    x ^= x >> 31;
    return x;
  }

 private:
  static uint64_t derive_key(uint64_t seed, uint64_t stream) {
    return mix64(seed ^ mix64(stream + 0x632BE59BD9B4E019ull));
  }

  uint64_t key_;
  uint64_t counter_;
};

/// Runs fn(chunk) for chunk in [0, n_chunks) on up to `threads` workers.
/// Chunks must write to disjoint outputs; any reduction happens afterwards in
/// chunk order, so results do not depend on the worker count.
void parallel_chunks(int threads, int n_chunks, const std::function<void(int)>& fn);

/// Worker count resolution: explicit flag > RADIANCE_THREADS > 1.
int resolve_threads(int requested);

}  // namespace panorad

#endif  // PANORAD_COMMON_H
