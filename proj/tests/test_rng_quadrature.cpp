#include <cmath>
#include <numbers>
#include <mutex>
#include <set>
#include <stdexcept>

#include "doctest.h"
#include "gapkit/parallel.hpp"
#include "gapkit/quadrature.hpp"
#include "gapkit/rng.hpp"

using namespace gapkit;

TEST_CASE("philox4x32-10 known-answer vectors") {
  using A4 = std::array<std::uint32_t, 4>;
  using A2 = std::array<std::uint32_t, 2>;
  CHECK(philox4x32(A4{0, 0, 0, 0}, A2{0, 0}) == A4{0x6627e8d5, 0xe169c58d, 0xbc57ac4c, 0x9b00dbd8});
  CHECK(philox4x32(A4{0xffffffff, 0xffffffff, 0xffffffff, 0xffffffff}, A2{0xffffffff, 0xffffffff}) ==
        A4{0x408f276d, 0x41c83b0e, 0xa20bc7c6, 0x6d5451fd});
  CHECK(philox4x32(A4{0x243f6a88, 0x85a308d3, 0x13198a2e, 0x03707344}, A2{0xa4093822, 0x299f31d0}) ==
        A4{0xd16cfe09, 0x94fdcceb, 0x5001e420, 0x24126ea1});
}

TEST_CASE("counter rng: pure in (seed, stream, index)") {
  CounterRng a(42, 1), b(42, 1), c(42, 2), d(43, 1);
  CHECK(a.block(12345) == b.block(12345));
  CHECK(a.block(12345) != c.block(12345));
  CHECK(a.block(12345) != d.block(12345));
  CHECK(a.block(1) != a.block(std::uint64_t{1} << 32));

  RngStream s(42, 1);
  auto u = a.uniform2(0);
  CHECK(s.uniform() == u[0]);
  CHECK(s.uniform() == u[1]);
}

TEST_CASE("counter rng: moments") {
  CounterRng r(5, 0);
  const int n = 200000;
  double su = 0, suu = 0, sz = 0, szz = 0, szzzz = 0;
  for (int i = 0; i < n; ++i) {
    auto u = r.uniform2(i);
    CHECK(u[0] > 0.0);
    CHECK(u[0] < 1.0);
    su += u[0];
    suu += u[0] * u[0];
    double z = r.normal(i);
    sz += z;
    szz += z * z;
    szzzz += z * z * z * z;
  }
  CHECK(su / n == doctest::Approx(0.5).epsilon(0.01));
  CHECK(suu / n == doctest::Approx(1.0 / 3.0).epsilon(0.01));
  CHECK(std::abs(sz / n) < 0.01);
  CHECK(szz / n == doctest::Approx(1.0).epsilon(0.02));
  CHECK(szzzz / n == doctest::Approx(3.0).epsilon(0.05));
}

TEST_CASE("gauss-legendre: exact on polynomials of degree 2n-1") {
  for (int n = 1; n <= 20; ++n) {
    auto q = gauss_legendre(n, -0.5, 2.0);
    double wsum = 0;
    for (double w : q.weights) wsum += w;
    CHECK(wsum == doctest::Approx(2.5).epsilon(1e-14));
    for (int p = 0; p <= 2 * n - 1; ++p) {
      double s = 0;
      for (int i = 0; i < n; ++i) s += q.weights[i] * std::pow(q.nodes[i], p);
      const double exact = (std::pow(2.0, p + 1) - std::pow(-0.5, p + 1)) / (p + 1);
      CHECK(s == doctest::Approx(exact).epsilon(1e-12));
    }
  }
  auto q3 = gauss_legendre(3);
  CHECK(q3.nodes[0] == doctest::Approx(-std::sqrt(0.6)).epsilon(1e-15));
  CHECK(q3.weights[1] == doctest::Approx(8.0 / 9.0).epsilon(1e-15));
  CHECK_THROWS(gauss_legendre(0));
}

TEST_CASE("bisection and bracketed newton") {
  auto f = [](double x) { return x * x * x - 2.0; };
  CHECK(bisect(f, 0.0, 2.0) == doctest::Approx(std::cbrt(2.0)).epsilon(1e-12));
  CHECK(bisect(f, 2.0, 0.0) == doctest::Approx(std::cbrt(2.0)).epsilon(1e-12));
  CHECK_THROWS(bisect(f, 2.0, 3.0));
  auto g = [](double x) { return std::make_pair(std::atan(x) - 0.5, 1.0 / (1.0 + x * x)); };
  // a start far out makes plain Newton diverge for atan
  CHECK(bracketed_newton(g, -50.0, 50.0, 40.0) == doctest::Approx(std::tan(0.5)).epsilon(1e-14));
  CHECK(bracketed_newton(g, -50.0, 50.0, -49.0) == doctest::Approx(std::tan(0.5)).epsilon(1e-14));
}

TEST_CASE("parallel chunks: boundaries independent of thread count") {
  for (unsigned t : {1u, 3u, 8u}) {
    set_thread_count(t);
    std::set<std::pair<std::size_t, std::size_t>> seen;
    std::vector<int> hit(10007, 0);
    std::mutex mu;
    parallel_chunks(hit.size(), [&](std::size_t, std::size_t b, std::size_t e) {
      std::lock_guard<std::mutex> lock(mu);
      seen.emplace(b, e);
      for (std::size_t i = b; i < e; ++i) ++hit[i];
    }, 100);
    CHECK(seen.size() == chunk_count(hit.size(), 100));
    CHECK(seen.begin()->first == 0);
    for (int h : hit) CHECK(h == 1);
  }
  set_thread_count(4);
  CHECK_THROWS(parallel_chunks(1000, [](std::size_t c, std::size_t, std::size_t) {
    if (c == 3) throw std::runtime_error("boom");
  }, 10));
  set_thread_count(0);
}

TEST_CASE("sobol points: reference values") {
  // direct index 1000 (Gray-code position 1000 ^ 500 in scipy.stats.qmc.Sobol, unscrambled)
  const double expected[kSobolDims] = {0.0927734375, 0.1611328125, 0.4501953125, 0.9091796875, 0.9931640625,
                                       0.1630859375, 0.0166015625, 0.6396484375, 0.9990234375, 0.1220703125};
  for (int d = 0; d < kSobolDims; ++d) {
    CHECK(sobol_point(1000, d) * 0x1.0p-32 == expected[d]);
    CHECK(sobol_point(0, d) == 0u);
    CHECK(sobol_point(1, d) == 0x80000000u);
  }
  CHECK_THROWS(sobol_point(1, kSobolDims));
  CHECK_THROWS(ScrambledSobol(1, 0, kSobolDims + 1));
}

TEST_CASE("property: scrambled sobol keeps the net structure") {
  for (std::uint64_t seed : {1u, 2u, 77u}) {
    ScrambledSobol s(seed, 3, kSobolDims);
    for (int m : {4, 8, 11}) {
      const std::uint32_t n = 1u << m;
      // each dimension: one point per interval of width 2^-m
      for (int d = 0; d < kSobolDims; ++d) {
        std::vector<int> hits(n, 0);
        for (std::uint32_t i = 0; i < n; ++i) {
          const double x = s.point(i, d);
          CHECK(x > 0.0);
          CHECK(x < 1.0);
          ++hits[static_cast<std::size_t>(x * n)];
        }
        for (int h : hits) CHECK(h == 1);
      }
      // first two dimensions: one point per 2^-a x 2^-(m-a) box
      for (int a = 0; a <= m; ++a) {
        std::vector<int> hits(n, 0);
        for (std::uint32_t i = 0; i < n; ++i) {
          const auto r = static_cast<std::size_t>(s.point(i, 0) * (1u << a));
          const auto c = static_cast<std::size_t>(s.point(i, 1) * (1u << (m - a)));
          ++hits[(r << (m - a)) | c];
        }
        for (int h : hits) CHECK(h == 1);
      }
    }
  }
  ScrambledSobol a(1, 3, 2), b(2, 3, 2);
  CHECK(a.point(5, 0) != b.point(5, 0));
  CHECK(a.point(5, 0) == ScrambledSobol(1, 3, 2).point(5, 0));
}

TEST_CASE("owen scramble is a bijection on prefixes") {
  // points sharing their top j bits are sent to points sharing their top j bits
  for (std::uint32_t seed : {0u, 12345u, 0xdeadbeefu}) {
    std::set<std::uint32_t> images;
    for (std::uint32_t top = 0; top < 256; ++top) images.insert(owen_scramble(top << 24, seed) >> 24);
    CHECK(images.size() == 256);
    for (std::uint32_t low : {1u, 77u, 0xffffu}) {
      CHECK((owen_scramble((5u << 24) | low, seed) >> 24) == (owen_scramble(5u << 24, seed) >> 24));
    }
  }
}
