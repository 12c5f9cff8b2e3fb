#include "gapkit/quadrature.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>
#include <utility>

namespace gapkit {

QuadratureRule gauss_legendre(int n, double a, double b) {
  if (n < 1) throw std::invalid_argument("quadrature order must be positive");
  QuadratureRule r;
  r.nodes.resize(n);
  r.weights.resize(n);
  const double mid = 0.5 * (a + b), half = 0.5 * (b - a);
  for (int i = 0; i < (n + 1) / 2; ++i) {
    double z = std::cos(std::numbers::pi * (i + 0.75) / (n + 0.5));
    double dp = 1.0;
    for (int it = 0; it < 100; ++it) {
      double p0 = 1.0, p1 = 0.0;
      for (int j = 0; j < n; ++j) {
        double p2 = p1;
        p1 = p0;
        p0 = ((2.0 * j + 1.0) * z * p1 - j * p2) / (j + 1.0);
      }
      dp = n * (z * p0 - p1) / (z * z - 1.0);
      double dz = p0 / dp;
      z -= dz;
      if (std::abs(dz) < 1e-16) break;
    }
    if (n == 1) {
      z = 0.0;
      dp = 1.0;
    }
    double w = n == 1 ? 2.0 : 2.0 / ((1.0 - z * z) * dp * dp);
    r.nodes[i] = mid - half * z;
    r.nodes[n - 1 - i] = mid + half * z;
    r.weights[i] = r.weights[n - 1 - i] = half * w;
  }
  return r;
}

double bisect(const std::function<double(double)>& f, double lo, double hi, double rel_tol, int max_iter) {
  if (lo > hi) std::swap(lo, hi);
  double flo = f(lo), fhi = f(hi);
  if (flo == 0.0) return lo;
  if (fhi == 0.0) return hi;
  if ((flo > 0) == (fhi > 0)) throw std::domain_error("bisect: no sign change on bracket");
  for (int it = 0; it < max_iter; ++it) {
    double mid = 0.5 * (lo + hi);
    if (hi - lo <= rel_tol * std::max(1.0, std::abs(mid)) || mid == lo || mid == hi) return mid;
    double fm = f(mid);
    if (fm == 0.0) return mid;
    if ((fm > 0) == (flo > 0)) {
      lo = mid;
      flo = fm;
    } else {
      hi = mid;
    }
  }
  return 0.5 * (lo + hi);
}

double bracketed_newton(const std::function<std::pair<double, double>(double)>& f, double lo, double hi, double x0,
                        double abs_tol, int max_iter) {
  auto [flo, dlo] = f(lo);
  (void)dlo;
  if (flo == 0.0) return lo;
  const bool rising = flo < 0.0;
  double x = (x0 > lo && x0 < hi) ? x0 : 0.5 * (lo + hi);
  for (int it = 0; it < max_iter; ++it) {
    auto [fx, dx] = f(x);
    if (fx == 0.0) return x;
    if ((fx < 0.0) == rising) {
      lo = x;
    } else {
      hi = x;
    }
    double next = dx != 0.0 ? x - fx / dx : 0.5 * (lo + hi);
    if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
    if (std::abs(next - x) <= abs_tol * std::max(1.0, std::abs(x)) || hi - lo <= abs_tol * std::max(1.0, std::abs(x))) {
      return next;
    }
    x = next;
  }
  return x;
}

}  // namespace gapkit
