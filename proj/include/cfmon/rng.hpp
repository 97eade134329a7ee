#pragma once

#include "cfmon/types.hpp"

#include <cmath>
#include <cstdint>
#include <random>

namespace cfmon {

// Seeded 64-bit Mersenne Twister with helpers for the distributions the
// simulator needs. Streams are derived from (seed, stream id, substream id) so
// that parallel tasks draw identical numbers regardless of which thread runs
// them.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : Rng(seed, 0, 0) {}
  Rng(std::uint64_t seed, std::uint64_t stream, std::uint64_t substream = 0) {
    std::seed_seq seq{lo(seed), hi(seed), lo(stream), hi(stream), lo(substream), hi(substream), 0x63666d6fu};
    engine_.seed(seq);
  }

  // Child stream; deterministic in (parent state, id) without advancing the parent.
  Rng split(std::uint64_t id) const {
    auto copy = engine_;
    return Rng(copy(), id, 0x5eed);
  }

  double uniform() { return std::uniform_real_distribution<double>(0.0, 1.0)(engine_); }
  double uniform(double a, double b) { return std::uniform_real_distribution<double>(a, b)(engine_); }
  double normal() { return normal_(engine_); }
  bool bernoulli(double p) { return uniform() < p; }
  std::uint64_t next_u64() { return engine_(); }
  std::size_t index(std::size_t n) { return std::uniform_int_distribution<std::size_t>(0, n - 1)(engine_); }

  // CN(0, variance): real and imaginary parts i.i.d. N(0, variance/2).
  cplx cnormal(double variance = 1.0) {
    const double s = std::sqrt(variance / 2.0);
    const double re = normal_(engine_);
    const double im = normal_(engine_);
    return {s * re, s * im};
  }

  CMatrix cnormal_matrix(Eigen::Index rows, Eigen::Index cols, double variance = 1.0) {
    CMatrix out(rows, cols);
    for (Eigen::Index j = 0; j < cols; ++j)
      for (Eigen::Index i = 0; i < rows; ++i) out(i, j) = cnormal(variance);
    return out;
  }

  CVector cnormal_vector(Eigen::Index n, double variance = 1.0) {
    CVector out(n);
    for (Eigen::Index i = 0; i < n; ++i) out(i) = cnormal(variance);
    return out;
  }

  std::mt19937_64& engine() { return engine_; }

 private:
  static std::uint32_t lo(std::uint64_t v) { return static_cast<std::uint32_t>(v & 0xffffffffu); }
  static std::uint32_t hi(std::uint64_t v) { return static_cast<std::uint32_t>(v >> 32); }

  std::mt19937_64 engine_;
  std::normal_distribution<double> normal_{0.0, 1.0};
};

}  // namespace cfmon
