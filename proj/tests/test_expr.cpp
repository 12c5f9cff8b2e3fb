#include <cmath>
#include <numbers>
#include <string>
#include <vector>

#include "doctest.h"
#include "gapkit/expr.hpp"
#include "support.hpp"

using gapkit::expr::Expression;
using gapkit::expr::ParseError;
using gapkit::expr::sampled_derivative_bounds;

namespace {

/// Random well-defined expressions over x1..xk. Division only by 2 + t^2.
std::string random_expr(testing::Draw& d, int k, int depth) {
  if (depth == 0 || d.uniform() < 0.25) {
    if (d.uniform() < 0.3) return std::to_string(d.integer(1, 9)) + ".5";
    return "x" + std::to_string(d.integer(1, k));
  }
  const std::string a = random_expr(d, k, depth - 1);
  const std::string b = random_expr(d, k, depth - 1);
  switch (d.integer(0, 9)) {
    case 0: return "(" + a + " + " + b + ")";
    case 1: return "(" + a + " - " + b + ")";
    case 2: return "(" + a + ") * (" + b + ")";
    case 3: return "(" + a + ") / (2 + (" + b + ")^2)";
    case 4: return "sin(" + a + ")";
    case 5: return "cos(" + a + ")";
    case 6: return "tanh(" + a + ")";
    case 7: return "exp(tanh(" + a + "))";
    case 8: return "(" + a + ")^" + std::to_string(d.integer(2, 3));
    default: return "-(" + a + ")";
  }
}

/// Truncation error plus cancellation in the difference of two values of size `scale`.
double fd_tol(double a, double b, double scale = 0.0) {
  return 1e-6 * std::max({1.0, std::abs(a), std::abs(b)}) + 1e-9 * std::abs(scale);
}

}  // namespace

TEST_CASE("parse: examples and errors") {
  auto e = Expression::parse("200*x1 + sin(x2)", 2);
  CHECK(e.code().back().op == gapkit::expr::Op::Add);
  CHECK(e.arity() == 2);

  try {
    Expression::parse("x3", 2);
    FAIL("expected an error");
  } catch (const ParseError& err) {
    CHECK(err.kind() == ParseError::Kind::VariableRange);
  }
  try {
    Expression::parse("2*(x1", 1);
    FAIL("expected an error");
  } catch (const ParseError& err) {
    CHECK(err.kind() == ParseError::Kind::Syntax);
    CHECK(err.position() == 5);
  }
  try {
    Expression::parse("1 + foo(x1)", 1);
    FAIL("expected an error");
  } catch (const ParseError& err) {
    CHECK(err.kind() == ParseError::Kind::UnknownIdentifier);
    CHECK(err.position() == 4);
  }
  CHECK_THROWS_AS(Expression::parse("abs(x1)", 1), ParseError);
  CHECK_THROWS_AS(Expression::parse("x1^0.5", 1), ParseError);
  CHECK_THROWS_AS(Expression::parse("x1^x1", 1), ParseError);
  CHECK_THROWS_AS(Expression::parse("x0", 1), ParseError);
  CHECK_THROWS_AS(Expression::parse("", 1), ParseError);
  CHECK_THROWS_AS(Expression::parse("x1 x1", 1), ParseError);
}

TEST_CASE("parse: precedence and associativity") {
  double x[] = {2.0, 3.0};
  CHECK(Expression::parse("2^3^2", 1).value(x) == doctest::Approx(512.0));
  CHECK(Expression::parse("-x1^2", 1).value(x) == doctest::Approx(-4.0));
  CHECK(Expression::parse("x1 - x2 - 1", 2).value(x) == doctest::Approx(-2.0));
  CHECK(Expression::parse("x1 / x2 / 2", 2).value(x) == doctest::Approx(1.0 / 3.0));
  CHECK(Expression::parse("1 + 2*x1^2*x2", 2).value(x) == doctest::Approx(25.0));
  CHECK(Expression::parse("pi", 1).value(x) == doctest::Approx(std::numbers::pi));
  CHECK(Expression::parse("1.5e2 + .5", 1).value(x) == doctest::Approx(150.5));
  CHECK(Expression::parse("x1^(1+1)", 1).value(x) == doctest::Approx(4.0));
  CHECK(Expression::parse("x1^-2", 1).value(x) == doctest::Approx(0.25));
}

TEST_CASE("gradient: examples") {
  {
    auto e = Expression::parse("200*x1 + sin(x2)", 2);
    double x[] = {0.5, 0.0};
    auto g = e.gradient(x);
    CHECK(g.value == 100.0);
    CHECK(g.grad[0] == 200.0);
    CHECK(g.grad[1] == 1.0);
  }
  {
    auto e = Expression::parse("x1*x2", 2);
    double x[] = {2.0, 3.0};
    auto g = e.gradient(x);
    CHECK(g.value == 6.0);
    CHECK(g.grad[0] == 3.0);
    CHECK(g.grad[1] == 2.0);
  }
  {
    auto e = Expression::parse("sin(x1)", 1);
    double x[] = {std::numbers::pi / 2};
    auto g = e.gradient(x);
    CHECK(g.value == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(std::abs(g.grad[0]) < 1e-15);
  }
}

TEST_CASE("gradient and Hessian: hand-derived oracle") {
  // f = x1^3 x2 + exp(x2) / x1 + tanh(x1 x2)
  auto e = Expression::parse("x1^3*x2 + exp(x2)/x1 + tanh(x1*x2)", 2);
  const double a = 0.7, b = -0.4;
  double x[] = {a, b};
  const double t = std::tanh(a * b), s2 = 1 - t * t;
  const double f = a * a * a * b + std::exp(b) / a + t;
  const double fa = 3 * a * a * b - std::exp(b) / (a * a) + b * s2;
  const double fb = a * a * a + std::exp(b) / a + a * s2;
  const double faa = 6 * a * b + 2 * std::exp(b) / (a * a * a) - 2 * t * s2 * b * b;
  const double fab = 3 * a * a - std::exp(b) / (a * a) + s2 - 2 * t * s2 * a * b;
  const double fbb = std::exp(b) / a - 2 * t * s2 * a * a;
  auto h = e.hessian(x);
  CHECK(h.value == doctest::Approx(f).epsilon(1e-14));
  CHECK(h.grad[0] == doctest::Approx(fa).epsilon(1e-13));
  CHECK(h.grad[1] == doctest::Approx(fb).epsilon(1e-13));
  CHECK(h.h(0, 0) == doctest::Approx(faa).epsilon(1e-12));
  CHECK(h.h(0, 1) == doctest::Approx(fab).epsilon(1e-12));
  CHECK(h.h(1, 0) == doctest::Approx(fab).epsilon(1e-12));
  CHECK(h.h(1, 1) == doctest::Approx(fbb).epsilon(1e-12));
}

TEST_CASE("evaluation: domain errors") {
  auto e = Expression::parse("1/x1", 1);
  double zero[] = {0.0};
  CHECK_THROWS_AS(e.value(zero), gapkit::expr::DomainError);
  CHECK_THROWS_AS(e.gradient(zero), gapkit::expr::DomainError);
  auto big = Expression::parse("exp(exp(exp(x1)))", 1);
  double ten[] = {10.0};
  CHECK_THROWS_AS(big.value(ten), gapkit::expr::DomainError);
}

TEST_CASE("property: forward-mode gradient matches central differences") {
  testing::Draw d(7);
  for (int trial = 0; trial < 300; ++trial) {
    const int k = d.integer(1, 4);
    const std::string src = random_expr(d, k, 4);
    auto e = Expression::parse(src, k);
    std::vector<double> x(k);
    for (auto& v : x) v = d.uniform(-1.5, 1.5);
    auto g = e.gradient(x);
    auto h = e.hessian(x);
    CHECK(g.value == doctest::Approx(e.value(x)).epsilon(1e-13));
    for (int i = 0; i < k; ++i) {
      const double step = 1e-6;
      std::vector<double> xp = x, xm = x;
      xp[i] += step;
      xm[i] -= step;
      const double fd = (e.value(xp) - e.value(xm)) / (2 * step);
      INFO(src, " axis ", i);
      CHECK(std::abs(g.grad[i] - fd) <= fd_tol(g.grad[i], fd, g.value));
      CHECK(h.grad[i] == doctest::Approx(g.grad[i]).epsilon(1e-12));
      auto gp = e.gradient(xp), gm = e.gradient(xm);
      for (int j = 0; j < k; ++j) {
        const double fd2 = (gp.grad[j] - gm.grad[j]) / (2 * step);
        CHECK(std::abs(h.h(j, i) - fd2) <= fd_tol(h.h(j, i), fd2, gp.grad[j]));
      }
    }
  }
}

TEST_CASE("property: rendering parses back to the same function") {
  testing::Draw d(11);
  for (int trial = 0; trial < 200; ++trial) {
    const int k = d.integer(1, 3);
    auto e = Expression::parse(random_expr(d, k, 4), k);
    auto back = Expression::parse(e.to_string(), k);
    std::vector<double> x(k);
    for (auto& v : x) v = d.uniform(-1.0, 1.0);
    CHECK(back.value(x) == doctest::Approx(e.value(x)).epsilon(1e-13));
  }
}

TEST_CASE("restrict_to_axis agrees with full evaluation") {
  testing::Draw d(13);
  for (int trial = 0; trial < 100; ++trial) {
    const int k = d.integer(1, 4);
    auto e = Expression::parse(random_expr(d, k, 4), k);
    std::vector<double> x(k);
    for (auto& v : x) v = d.uniform(-1.0, 1.0);
    const int axis = d.integer(0, k - 1);
    auto u = e.restrict_to_axis(axis, x);
    const double t = d.uniform(-1.0, 1.0);
    x[axis] = t;
    auto [val, der] = u.value_and_derivative(t);
    CHECK(val == doctest::Approx(e.value(x)).epsilon(1e-13));
    CHECK(u.value(t) == doctest::Approx(val).epsilon(1e-15));
    CHECK(der == doctest::Approx(e.gradient(x).grad[axis]).epsilon(1e-12));
  }
}

TEST_CASE("restrict_to_axis: affine restrictions") {
  double x[] = {0.3, -0.7};
  auto a = Expression::parse("200*x1 + sin(x2)", 2).restrict_to_axis(0, x);
  CHECK(a.affine());
  CHECK(a.slope() == 200.0);
  CHECK(a.intercept() == std::sin(-0.7));
  auto b = Expression::parse("-(x1 - 3*x2)/4 + x2^2", 2).restrict_to_axis(0, x);
  CHECK(b.affine());
  CHECK(b.slope() == -0.25);
  CHECK(b.value(0.3) == doctest::Approx(-(0.3 + 2.1) / 4 + 0.49).epsilon(1e-15));
  for (const char* text : {"x1*x1", "sin(x1)", "1/x1", "x1^2", "x1*x2 + exp(x1)"}) {
    CHECK_FALSE(Expression::parse(text, 2).restrict_to_axis(0, x).affine());
  }
  CHECK(Expression::parse("x1*x2", 2).restrict_to_axis(0, x).affine());
  CHECK(Expression::parse("x2^3", 2).restrict_to_axis(0, x).affine());
}

TEST_CASE("sampled_derivative_bounds: examples") {
  auto e = Expression::parse("200*x1 + sin(x2)", 2);
  double lo[] = {-1.5, -1.5}, hi[] = {1.5, 1.5};
  int res[] = {64, 64};
  auto b = sampled_derivative_bounds(e, lo, hi, res);
  CHECK(b.dsq_min[0] == 40000.0);
  CHECK(b.dsq_max[0] == 40000.0);
  // dense-grid oracle at 1024 nodes per axis
  int dense[] = {1024, 1024};
  auto ref = sampled_derivative_bounds(e, lo, hi, dense);
  CHECK(ref.dsq_min[1] == doctest::Approx(std::cos(1.5) * std::cos(1.5)).epsilon(1e-12));
  CHECK(b.dsq_min[1] == doctest::Approx(ref.dsq_min[1]).epsilon(1e-12));
  CHECK(b.dsq_max[1] == doctest::Approx(ref.dsq_max[1]).epsilon(1e-3));
  CHECK(ref.dsq_max[1] == doctest::Approx(1.0).epsilon(1e-5));
  CHECK(b.second_derivative_method.find("forward") != std::string::npos);

  auto c = sampled_derivative_bounds(Expression::parse("3", 1), std::vector<double>{0.0}, std::vector<double>{1.0},
                                     std::vector<int>{5});
  CHECK(c.dsq_min[0] == 0.0);
  CHECK(c.dsq_max[0] == 0.0);
  CHECK(c.grad_norm_max == 0.0);
  CHECK(c.hessian_norm_max == 0.0);
  CHECK(c.phi_min == 3.0);
  CHECK(c.phi_max == 3.0);

  auto l = sampled_derivative_bounds(Expression::parse("x1", 1), std::vector<double>{0.0}, std::vector<double>{1.0},
                                     std::vector<int>{2});
  CHECK(l.dsq_min[0] == 1.0);
  CHECK(l.dsq_max[0] == 1.0);
  CHECK(l.phi_min == 0.0);
  CHECK(l.phi_max == 1.0);

  CHECK_THROWS(sampled_derivative_bounds(e, lo, hi, std::vector<int>{1, 4}));
}

TEST_CASE("property: bounds are monotone under grid refinement") {
  testing::Draw d(17);
  for (int trial = 0; trial < 20; ++trial) {
    const int k = d.integer(1, 2);
    auto e = Expression::parse(random_expr(d, k, 3), k);
    std::vector<double> lo(k, -1.0), hi(k, 1.0);
    // nested grids: n nodes and 2n-1 nodes share every coarse node
    int n = d.integer(3, 9);
    auto coarse = sampled_derivative_bounds(e, lo, hi, std::vector<int>(k, n));
    auto fine = sampled_derivative_bounds(e, lo, hi, std::vector<int>(k, 2 * n - 1));
    for (int i = 0; i < k; ++i) {
      CHECK(fine.dsq_max[i] >= coarse.dsq_max[i]);
      CHECK(fine.dsq_min[i] <= coarse.dsq_min[i]);
      CHECK(coarse.dsq_min[i] <= coarse.dsq_max[i]);
    }
    CHECK(fine.grad_norm_max >= coarse.grad_norm_max);
    CHECK(fine.hessian_norm_max >= coarse.hessian_norm_max * (1 - 1e-12));
    CHECK(fine.phi_max >= coarse.phi_max);
    CHECK(fine.phi_min <= coarse.phi_min);
  }
}
