#pragma once

#include "rrkf/common.hpp"

#include <cstdint>

namespace rrkf {

/// Counter-based pseudo-random stream.
///
/// Every draw is a pure function of (seed, stream, counter), mixed with the
/// SplitMix64 finalizer. Normal variates use Box-Muller, so sequences are
/// identical across standard libraries (std::normal_distribution is not).
class Rng {
 public:
  explicit Rng(std::uint64_t seed, std::uint64_t stream = 0);

  std::uint64_t next_u64();
  /// Uniform on the open interval (0, 1).
  double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  double normal();

  Matrix normal_matrix(Index rows, Index cols);
  Vector normal_vector(Index size);

  /// Independent child stream; the parent is not advanced.
  Rng fork(std::uint64_t stream) const;

  std::uint64_t seed() const { return key_; }

 private:
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b);

}  // namespace rrkf
