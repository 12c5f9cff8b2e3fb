#include "gapkit/rng.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace gapkit {

std::array<std::uint32_t, 4> philox4x32(std::array<std::uint32_t, 4> c, std::array<std::uint32_t, 2> k) {
  constexpr std::uint32_t kM0 = 0xD2511F53u, kM1 = 0xCD9E8D57u;
  constexpr std::uint32_t kW0 = 0x9E3779B9u, kW1 = 0xBB67AE85u;
  for (int round = 0; round < 10; ++round) {
    std::uint64_t p0 = static_cast<std::uint64_t>(kM0) * c[0];
    std::uint64_t p1 = static_cast<std::uint64_t>(kM1) * c[2];
    std::uint32_t hi0 = static_cast<std::uint32_t>(p0 >> 32), lo0 = static_cast<std::uint32_t>(p0);
    std::uint32_t hi1 = static_cast<std::uint32_t>(p1 >> 32), lo1 = static_cast<std::uint32_t>(p1);
    c = {hi1 ^ c[1] ^ k[0], lo1, hi0 ^ c[3] ^ k[1], lo0};
    k[0] += kW0;
    k[1] += kW1;
  }
  return c;
}

std::array<std::uint32_t, 4> CounterRng::block(std::uint64_t index) const {
  return philox4x32({static_cast<std::uint32_t>(index), static_cast<std::uint32_t>(index >> 32),
                     static_cast<std::uint32_t>(stream_), static_cast<std::uint32_t>(stream_ >> 32)},
                    {static_cast<std::uint32_t>(seed_), static_cast<std::uint32_t>(seed_ >> 32)});
}

std::array<double, 2> CounterRng::uniform2(std::uint64_t index) const {
  auto w = block(index);
  auto to_unit = [](std::uint32_t hi, std::uint32_t lo) {
    std::uint64_t bits = ((static_cast<std::uint64_t>(hi) << 32) | lo) >> 11;
    return (static_cast<double>(bits) + 0.5) * 0x1.0p-53;
  };
  return {to_unit(w[0], w[1]), to_unit(w[2], w[3])};
}

double CounterRng::normal(std::uint64_t index) const {
  auto u = uniform2(index);
  return std::sqrt(-2.0 * std::log(u[0])) * std::cos(2.0 * std::numbers::pi * u[1]);
}

double RngStream::uniform() {
  if (has_spare_) {
    has_spare_ = false;
    return spare_;
  }
  auto u = rng_.uniform2(next_++);
  spare_ = u[1];
  has_spare_ = true;
  return u[0];
}

// ---------------------------------------------------------------------------
// Sobol'

namespace {

struct DirectionNumbers {
  std::array<std::array<std::uint32_t, 32>, kSobolDims> v{};

  DirectionNumbers() {
    // (s, a, m_1..m_s) for dimensions 2..10
    struct Poly {
      int s, a;
      std::array<std::uint32_t, 5> m;
    };
    constexpr Poly polys[kSobolDims - 1] = {
        {1, 0, {1}},          {2, 1, {1, 3}},          {3, 1, {1, 3, 1}},
        {3, 2, {1, 1, 1}},    {4, 1, {1, 1, 3, 3}},    {4, 4, {1, 3, 5, 13}},
        {5, 2, {1, 1, 5, 5, 17}}, {5, 4, {1, 1, 5, 5, 5}}, {5, 7, {1, 1, 7, 11, 19}},
    };
    for (int b = 0; b < 32; ++b) v[0][b] = 1u << (31 - b);
    for (int d = 1; d < kSobolDims; ++d) {
      const auto& p = polys[d - 1];
      auto& w = v[d];
      for (int i = 0; i < p.s; ++i) w[i] = p.m[i] << (31 - i);
      for (int i = p.s; i < 32; ++i) {
        std::uint32_t x = w[i - p.s] ^ (w[i - p.s] >> p.s);
        for (int j = 1; j < p.s; ++j) {
          if ((p.a >> (p.s - 1 - j)) & 1) x ^= w[i - j];
        }
        w[i] = x;
      }
    }
  }
};

const DirectionNumbers& direction_numbers() {
  static const DirectionNumbers table;
  return table;
}

std::uint32_t reverse_bits(std::uint32_t x) {
  x = ((x >> 1) & 0x55555555u) | ((x & 0x55555555u) << 1);
  x = ((x >> 2) & 0x33333333u) | ((x & 0x33333333u) << 2);
  x = ((x >> 4) & 0x0F0F0F0Fu) | ((x & 0x0F0F0F0Fu) << 4);
  x = ((x >> 8) & 0x00FF00FFu) | ((x & 0x00FF00FFu) << 8);
  return (x >> 16) | (x << 16);
}

}  // namespace

std::uint32_t sobol_point(std::uint32_t index, int dim) {
  if (dim < 0 || dim >= kSobolDims) throw std::out_of_range("sobol dimension out of range");
  const auto& w = direction_numbers().v[dim];
  std::uint32_t x = 0;
  for (int b = 0; index != 0; ++b, index >>= 1) {
    if (index & 1u) x ^= w[b];
  }
  return x;
}

std::uint32_t owen_scramble(std::uint32_t x, std::uint32_t seed) {
  x = reverse_bits(x);
  x += seed;
  x ^= x * 0x6c50b47cu;
  x ^= x * 0xb82f1e52u;
  x ^= x * 0xc7afe638u;
  x ^= x * 0x8d22f6e6u;
  return reverse_bits(x);
}

ScrambledSobol::ScrambledSobol(std::uint64_t seed, std::uint64_t stream, int dims) : dims_(dims) {
  if (dims < 1 || dims > kSobolDims) throw std::out_of_range("sobol dimension out of range");
  CounterRng rng(seed, stream);
  for (int d = 0; d < dims; ++d) seeds_[d] = rng.block(static_cast<std::uint64_t>(d))[0];
}

double ScrambledSobol::point(std::uint32_t index, int dim) const {
  return (static_cast<double>(owen_scramble(sobol_point(index, dim), seeds_[dim])) + 0.5) * 0x1.0p-32;
}

}  // namespace gapkit
