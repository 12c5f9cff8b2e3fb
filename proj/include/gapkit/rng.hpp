#pragma once

#include <array>
#include <cstdint>

namespace gapkit {

/// Philox4x32-10 block function.
std::array<std::uint32_t, 4> philox4x32(std::array<std::uint32_t, 4> counter, std::array<std::uint32_t, 2> key);

/// Counter-based stream keyed by (seed, stream). Draw i is a pure function of
/// (seed, stream, i), so any index range can be generated independently.
class CounterRng {
 public:
  CounterRng(std::uint64_t seed, std::uint64_t stream) : seed_(seed), stream_(stream) {}

  /// Four 32-bit words for block `index`.
  std::array<std::uint32_t, 4> block(std::uint64_t index) const;
  /// Two uniforms in (0, 1) for block `index`.
  std::array<double, 2> uniform2(std::uint64_t index) const;
  /// One standard normal for block `index` (Box-Muller on uniform2).
  double normal(std::uint64_t index) const;

 private:
  std::uint64_t seed_, stream_;
};

/// Sequential convenience wrapper over CounterRng.
class RngStream {
 public:
  RngStream(std::uint64_t seed, std::uint64_t stream, std::uint64_t start = 0) : rng_(seed, stream), next_(start) {}
  double uniform();
  double normal() { return rng_.normal(next_++); }
  std::uint64_t position() const { return next_; }

 private:
  CounterRng rng_;
  std::uint64_t next_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

/// Sobol' points in up to kSobolDims dimensions (Joe-Kuo direction numbers),
/// indexed directly rather than in Gray-code order.
inline constexpr int kSobolDims = 10;
std::uint32_t sobol_point(std::uint32_t index, int dim);

/// Nested uniform (Owen) scramble of a 32-bit binary fraction, hash-based
/// (Laine-Karras permutation on the reversed bits).
std::uint32_t owen_scramble(std::uint32_t x, std::uint32_t seed);

/// Owen-scrambled Sobol' sequence; one independent scramble seed per dimension.
class ScrambledSobol {
 public:
  ScrambledSobol(std::uint64_t seed, std::uint64_t stream, int dims);
  int dims() const { return dims_; }
  /// Coordinate `dim` of point `index`, in (0, 1).
  double point(std::uint32_t index, int dim) const;

 private:
  int dims_;
  std::array<std::uint32_t, kSobolDims> seeds_{};
};

}  // namespace gapkit
