#include <cmath>
#include <numbers>
#include <vector>

#include "doctest.h"
#include "gapkit/model.hpp"
#include "gapkit/quadrature.hpp"
#include "support.hpp"

using namespace gapkit;
using testing::Draw;

namespace {

/// Larger root s of s^2 - (2 + 8Y/pi) s + 1 = 0, squared: the k=2 threshold.
double threshold_k2(double Y) {
  const double b = 2.0 + 8.0 * Y / std::numbers::pi;
  const double s = 0.5 * (b + std::sqrt(b * b - 4.0));
  return s * s;
}

double margin_of(const GeometryReport& g, const std::string& name) {
  for (const auto& m : g.margins) {
    if (m.name == name) return m.margin;
  }
  FAIL("missing margin " << name);
  return 0.0;
}

}  // namespace

TEST_CASE("unit ball volume") {
  CHECK(unit_ball_volume(0) == doctest::Approx(1.0));
  CHECK(unit_ball_volume(1) == doctest::Approx(2.0).epsilon(1e-15));
  CHECK(unit_ball_volume(2) == doctest::Approx(std::numbers::pi).epsilon(1e-15));
  CHECK(unit_ball_volume(3) == doctest::Approx(4.0 * std::numbers::pi / 3.0).epsilon(1e-15));
  // recurrence V_n = 2 pi / n V_{n-2}
  for (int n = 2; n <= 12; ++n) {
    CHECK(unit_ball_volume(n) == doctest::Approx(2 * std::numbers::pi / n * unit_ball_volume(n - 2)).epsilon(1e-13));
  }
  CHECK_THROWS(unit_ball_volume(-1));
}

TEST_CASE("eta0 and crossing threshold") {
  const double s = std::sqrt(150.0);
  CHECK(eta0(150, 4, 2) == doctest::Approx(1 / s + (4 / (s - 1)) * 4 * (2 / std::numbers::pi)).epsilon(1e-15));
  CHECK(eta0(150, 4, 2) == doctest::Approx(0.98726982289323884).epsilon(1e-14));
  CHECK(eta0(1e12, 4, 2) == doctest::Approx(1e-6 + 32.0 / (std::numbers::pi * (1e6 - 1.0))).epsilon(1e-12));
  for (double s2 = 150.0; s2 < 1e6; s2 *= 3.0) CHECK(eta0(s2 * 3.0, 4, 2) < eta0(s2, 4, 2));
  CHECK_THROWS(eta0(1.0, 4, 2));

  CHECK(crossing_threshold(4, 2) == doctest::Approx(threshold_k2(4)).epsilon(1e-11));
  CHECK(crossing_threshold(4, 2) == doctest::Approx(146.489731064214).epsilon(1e-12));
  CHECK(crossing_threshold(3, 2) == doctest::Approx(threshold_k2(3)).epsilon(1e-11));
  CHECK(crossing_threshold(3, 2) == doctest::Approx(90.90775068946148).epsilon(1e-12));
  // k = 1, Y = 3: s^2 - 8 s + 1 = 0
  CHECK(crossing_threshold(3, 1) == doctest::Approx(std::pow(4 + std::sqrt(15.0), 2)).epsilon(1e-11));
  for (int k = 1; k <= 6; ++k) {
    for (int Y = 1; Y <= 10; ++Y) {
      CHECK(std::abs(eta0(crossing_threshold(Y, k), Y, k) - 1.0) <= 1e-10);
    }
  }
}

TEST_CASE("derive_geometry: reference model") {
  auto spec = testing::reference_spec();
  auto g = derive_geometry(spec);
  CHECK(g.gamma == doctest::Approx(1.0 / std::sqrt(165.0)).epsilon(1e-15));
  CHECK(g.gamma == doctest::Approx(0.077850).epsilon(1e-5));
  CHECK(g.Y == 4.0);
  CHECK(g.sigma_threshold == doctest::Approx(threshold_k2(4)).epsilon(1e-11));
  CHECK(g.ok);
  CHECK(margin_of(g, "d1_lower") == doctest::Approx(40000.0 - 27225.0));
  CHECK(margin_of(g, "dj_upper") == doctest::Approx(1.5 - 1.0));
  CHECK(margin_of(g, "sigma_threshold") == doctest::Approx(150.0 - threshold_k2(4)).epsilon(1e-9));
  CHECK(g.omega_half_widths[0] == 1.0);
  CHECK(g.omega_half_widths[1] == doctest::Approx(g.gamma).epsilon(1e-15));
  CHECK(g.N_bound == 202);
  CHECK(g.M_Gamma == doctest::Approx(std::sqrt(165.0)).epsilon(1e-14));
  CHECK(g.eps0 == doctest::Approx(1.0 / (2 * g.M1_phi0 * g.M_Gamma) * (1 - 1e-6)).epsilon(1e-14));
  CHECK(g.orientation == 1);
}

TEST_CASE("derive_geometry: failing conditions are reported, not thrown") {
  auto low = testing::reference_spec();
  low.sigma = 100.0;
  auto g = derive_geometry(low);
  CHECK_FALSE(g.ok);
  CHECK(margin_of(g, "sigma_threshold") < 0.0);
  CHECK(margin_of(g, "d1_lower") > 0.0);

  auto flat = testing::make_spec(2, "x1", 150.0, PerturbationSpec::gaussian(0.0, 0.25));
  auto f = derive_geometry(flat);
  CHECK_FALSE(f.ok);
  CHECK(margin_of(f, "d1_lower") == doctest::Approx(1.0 - 27225.0));

  auto steep = testing::make_spec(2, "200*x1 + 2*x2", 150.0, PerturbationSpec::gaussian(0.0, 0.25));
  auto s = derive_geometry(steep);
  CHECK_FALSE(s.ok);
  CHECK(margin_of(s, "dj_upper") == doctest::Approx(1.5 - 4.0));

  auto one = derive_geometry(testing::doubling_spec());
  for (const auto& m : one.margins) CHECK(m.name != "dj_upper");
}

TEST_CASE("ModelSpec validation") {
  auto s = testing::reference_spec();
  s.C1 = 0.9;
  CHECK_THROWS_WITH(s.validate(), "C1 must exceed 1");
  s = testing::reference_spec();
  s.phi0 = {};
  CHECK_THROWS_WITH(s.validate(), "phi0 required");
  s = testing::reference_spec();
  s.L = 0.0;
  CHECK_THROWS(s.validate());
  s = testing::reference_spec();
  s.perturbation = PerturbationSpec::uniform(1.0, 1.0);
  CHECK_THROWS(s.validate());
  s = testing::reference_spec();
  s.perturbation = PerturbationSpec::gaussian(0.0, -1.0);
  CHECK_THROWS(s.validate());
}

TEST_CASE("branch_index") {
  CHECK(branch_index(0.0, 1.0) == 0);
  CHECK(branch_index(3.4, 1.0) == 2);
  CHECK(reduce_mod(3.4, 1.0) == doctest::Approx(-0.6).epsilon(1e-14));
  CHECK(branch_index(-2.0, 1.0) == -1);
  CHECK(reduce_mod(-2.0, 1.0) == 0.0);
  CHECK(branch_index(1.0, 1.0) == 1);
  CHECK(reduce_mod(1.0, 1.0) == -1.0);
  Draw d(3);
  for (int i = 0; i < 100000; ++i) {
    const double L = d.uniform(0.1, 5.0);
    const double v = d.uniform(-1000.0, 1000.0) * (i % 7 == 0 ? 1e-9 : 1.0);
    const auto [j, r] = reduce_branch(v, L);
    CHECK(j == branch_index(v, L));
    CHECK(r == reduce_mod(v, L));
    CHECK(r >= -L);
    CHECK(r < L);
    CHECK(std::abs(r - (v - 2.0 * L * static_cast<double>(j))) <= 1e-12 * std::max(1.0, std::abs(v)));
  }
  // odd multiples of L sit on the lower edge of the next branch
  for (int m = -51; m <= 51; m += 2) {
    const double r = reduce_mod(m * 0.3, 0.3);
    CHECK(r >= -0.3);
    CHECK(r < 0.3);
  }
}

TEST_CASE("apply_T and apply_S") {
  auto spec = testing::reference_spec();
  PiecewiseMap map(spec, derive_geometry(spec));
  const double gamma = map.gamma();
  {
    std::vector<double> u{0.0, 0.0};
    auto t = map.apply_T(u, 0.0);
    CHECK(t[0] == 0.0);
    CHECK(t[1] == 0.0);
  }
  auto lin = testing::linear_spec();
  PiecewiseMap lmap(lin, derive_geometry(lin));
  {
    std::vector<double> u{0.01, 0.0};
    auto s = lmap.apply_S(u);
    CHECK(s[0] == 0.0);
    CHECK(s[1] == doctest::Approx(gamma * 2.0).epsilon(1e-14));
  }
  {
    // forward image of the inverse-branch example: y = (0.5, 0.01), theta = 0.3, j = 5
    std::vector<double> u{(0.01 / gamma - 0.3 + 10.0) / 200.0, gamma * 0.5};
    CHECK(u[0] == doctest::Approx(0.0491423).epsilon(1e-6));
    long j = 0;
    std::vector<double> y(2);
    lmap.apply_T(u, 0.3, y, &j);
    CHECK(j == 5);
    CHECK(y[0] == doctest::Approx(0.5).epsilon(1e-14));
    CHECK(y[1] == doctest::Approx(0.01).epsilon(1e-10));
  }
  std::vector<double> outside{0.0, 0.2};
  CHECK_THROWS_AS(map.apply_T(outside, 0.0), std::domain_error);

  Draw d(5);
  std::vector<double> u(2), t(2), s(2);
  for (int i = 0; i < 20000; ++i) {
    u[0] = d.uniform(-1.0, 1.0);
    u[1] = d.uniform(-gamma, gamma);
    const double theta = d.uniform(-2.0, 2.0);
    long j = 0;
    map.apply_T(u, theta, t, &j);
    CHECK(map.in_omega(t));
    // T and S differ only in the last coordinate, by the branch shift
    map.apply_S(u, s);
    CHECK(t[0] == s[0]);
    CHECK(t[1] == doctest::Approx(s[1] + gamma * (theta - 2.0 * static_cast<double>(j))).epsilon(1e-12));
    if (j == 0 && theta == 0.0) CHECK(t[1] == s[1]);
  }
}

TEST_CASE("T and S agree on the zero branch at theta = 0") {
  auto spec = testing::reference_spec();
  PiecewiseMap map(spec, derive_geometry(spec));
  Draw d(6);
  std::vector<double> u(2), t(2), s(2);
  int seen = 0;
  for (int i = 0; i < 20000; ++i) {
    u[0] = d.uniform(-0.005, 0.005);
    u[1] = d.uniform(-map.gamma(), map.gamma());
    long j = 0;
    map.apply_T(u, 0.0, t, &j);
    if (j != 0) continue;
    ++seen;
    map.apply_S(u, s);
    CHECK(t[0] == s[0]);
    CHECK(t[1] == s[1]);
  }
  CHECK(seen > 1000);
}

TEST_CASE("embedding round trip and the scalar update") {
  auto spec = testing::reference_spec();
  PiecewiseMap map(spec, derive_geometry(spec));
  Draw d(8);
  std::vector<double> x(2), u(2), back(2), t(2);
  for (int i = 0; i < 1000; ++i) {
    x[0] = d.uniform(-1.0, 1.0);
    x[1] = d.uniform(-1.0, 1.0);
    map.to_u(x, u);
    map.to_x(u, back);
    CHECK(back[0] == doctest::Approx(x[0]).epsilon(1e-15));
    CHECK(back[1] == doctest::Approx(x[1]).epsilon(1e-15));
    const double theta = d.uniform(-1.0, 1.0);
    map.apply_T(u, theta, t);
    CHECK(t[0] == doctest::Approx(x[1]).epsilon(1e-14));
    CHECK(t[1] / map.gamma() == doctest::Approx(map.phi(x, theta)).epsilon(1e-12));
  }
}

TEST_CASE("expansion eigenvalues") {
  auto spec = testing::reference_spec();
  PiecewiseMap map(spec, derive_geometry(spec));
  std::vector<double> x{0.3, 0.0};
  auto e = expansion_eigenvalues(map, x);
  CHECK(e.v1_sq == doctest::Approx(40000.0 / 165.0).epsilon(1e-14));
  CHECK(e.v1_sq == doctest::Approx(242.43).epsilon(1e-4));
  CHECK(e.v_norm_sq == doctest::Approx(1.0).epsilon(1e-14));
  CHECK(e.gamma_m2 == doctest::Approx(165.0).epsilon(1e-14));
  CHECK(e.lambda_minus == doctest::Approx(162.94966309394687).epsilon(1e-12));
  CHECK(e.lambda_plus == doctest::Approx(245.47457933029557).epsilon(1e-12));
  CHECK(e.margin == doctest::Approx(12.94966309394687).epsilon(1e-10));
}

TEST_CASE("expansion eigenvalues: diagonal case") {
  // gamma^-2 = C1 sigma = 4 and v1 = gamma * d1 phi0 = 3 with phi0 = 6 x1
  auto spec = testing::make_spec(2, "6*x1", 4.0 / 1.1, PerturbationSpec::point(0.0));
  PiecewiseMap map(spec, derive_geometry(spec));
  std::vector<double> x{0.1, 0.2};
  auto e = expansion_eigenvalues(map, x);
  CHECK(e.v_norm_sq == 0.0);
  CHECK(e.lambda_minus == doctest::Approx(4.0).epsilon(1e-13));
  CHECK(e.lambda_plus == doctest::Approx(9.0).epsilon(1e-13));
}

TEST_CASE("property: eigenvalue product identity and floor") {
  auto spec = testing::reference_spec();
  PiecewiseMap map(spec, derive_geometry(spec));
  Draw d(9);
  std::vector<double> x(2);
  for (int i = 0; i < 10000; ++i) {
    x[0] = d.uniform(-1.5, 1.5);
    x[1] = d.uniform(-1.5, 1.5);
    auto e = expansion_eigenvalues(map, x);
    CHECK(e.lambda_minus <= e.lambda_plus);
    CHECK(e.lambda_minus * e.lambda_plus == doctest::Approx(e.gamma_m2 * e.v1_sq).epsilon(1e-9));
    CHECK(e.lambda_minus >= spec.sigma);
    CHECK(e.gamma_m2 >= spec.sigma);
  }
}

TEST_CASE("property: S expands distances by sqrt(sigma)") {
  for (auto spec : {testing::reference_spec(), testing::nonuniform_spec()}) {
    PiecewiseMap map(spec, derive_geometry(spec));
    REQUIRE(map.geometry().ok);
    Draw d(10);
    std::vector<double> u(2), v(2), su(2), sv(2);
    const double r = spec.L + spec.beta;
    for (int i = 0; i < 20000; ++i) {
      u[0] = d.uniform(-r, r);
      v[0] = d.uniform(-r, r);
      u[1] = map.gamma() * d.uniform(-r, r);
      v[1] = map.gamma() * d.uniform(-r, r);
      map.apply_S(u, su);
      map.apply_S(v, sv);
      const double ds = std::pow(su[0] - sv[0], 2) + std::pow(su[1] - sv[1], 2);
      const double du = std::pow(u[0] - v[0], 2) + std::pow(u[1] - v[1], 2);
      CHECK(ds >= spec.sigma * du * (1 - 1e-12));
    }
  }
}

TEST_CASE("boundary separation") {
  auto lin = testing::linear_spec();
  PiecewiseMap lmap(lin, derive_geometry(lin));
  auto b = boundary_separation(lmap, 0.0);
  CHECK(b.bound == doctest::Approx(0.00077849894416152292).epsilon(1e-12));
  CHECK(b.min_distance == doctest::Approx(0.01).epsilon(1e-9));
  CHECK(b.min_distance >= b.bound);

  auto ref = testing::reference_spec();
  PiecewiseMap rmap(ref, derive_geometry(ref));
  for (double theta : {-0.7, 0.0, 0.33}) {
    auto r = boundary_separation(rmap, theta);
    CHECK(std::isfinite(r.min_distance));
    CHECK(r.min_distance >= r.bound);
  }

  // range of phi0 inside (-L, L): no boundary at theta = 0
  auto small = testing::make_spec(1, "0.4*x1", 2.0, PerturbationSpec::point(0.0));
  PiecewiseMap smap(small, derive_geometry(small));
  auto v = boundary_separation(smap, 0.0);
  CHECK(std::isinf(v.min_distance));
}

TEST_CASE("perturbation laws") {
  for (auto law : {PerturbationSpec::gaussian(0.2, 0.25), PerturbationSpec::gaussian(0.0, 1.0, 3.0),
                   PerturbationSpec::uniform(-0.5, 1.5)}) {
    auto [lo, hi] = law.support();
    // composite Gauss-Legendre integral of the density over its support
    double total = 0.0;
    const int panels = 64;
    for (int p = 0; p < panels; ++p) {
      auto q = gauss_legendre(8, lo + (hi - lo) * p / panels, lo + (hi - lo) * (p + 1) / panels);
      for (int i = 0; i < 8; ++i) total += q.weights[i] * law.density(q.nodes[i]);
    }
    CHECK(total == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(law.density(hi + 1.0) == 0.0);
    // quantile inverts the CDF
    for (double u : {0.01, 0.3, 0.5, 0.77, 0.999}) {
      const double t = law.quantile(u);
      double cdf = 0.0;
      for (int p = 0; p < panels; ++p) {
        auto q = gauss_legendre(8, lo + (t - lo) * p / panels, lo + (t - lo) * (p + 1) / panels);
        for (int i = 0; i < 8; ++i) cdf += q.weights[i] * law.density(q.nodes[i]);
      }
      CHECK(cdf == doctest::Approx(u).epsilon(1e-9));
    }
  }
  auto g = PerturbationSpec::gaussian(0.0, 0.25);
  CHECK(g.support().second == doctest::Approx(2.0));
  CHECK(PerturbationSpec::point(0.4).quantile(0.9) == 0.4);
}
