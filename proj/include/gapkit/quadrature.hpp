#pragma once

#include <functional>
#include <vector>

namespace gapkit {

struct QuadratureRule {
  std::vector<double> nodes;
  std::vector<double> weights;
};

/// n-point Gauss-Legendre rule on [a, b].
QuadratureRule gauss_legendre(int n, double a = -1.0, double b = 1.0);

/// Bisection for a sign change of f on [lo, hi]. Stops when the bracket is
/// narrower than rel_tol * max(1, |mid|) or after max_iter halvings.
double bisect(const std::function<double(double)>& f, double lo, double hi, double rel_tol = 1e-12,
              int max_iter = 400);

/// Newton iteration kept inside the bracket [lo, hi]; any step leaving it is
/// replaced by a bisection step. f returns (value, derivative). The bracket
/// must satisfy f(lo) * f(hi) <= 0.
double bracketed_newton(const std::function<std::pair<double, double>(double)>& f, double lo, double hi,
                        double x0, double abs_tol = 1e-15, int max_iter = 200);

}  // namespace gapkit
