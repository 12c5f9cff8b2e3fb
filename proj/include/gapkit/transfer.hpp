#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <functional>
#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

#include "gapkit/model.hpp"

namespace gapkit {

/// Composite Gauss-Legendre rule for the law of theta: 2*order panels of
/// `order` nodes over the (truncated) support, weights scaled to sum to one.
/// A point law gives a single node with weight one.
struct ThetaQuadrature {
  std::vector<double> nodes;
  std::vector<double> weights;
  double raw_mass = 1.0;  // sum of density * weight before rescaling

  static ThetaQuadrature build(const PerturbationSpec& law, int order);
};

struct Branch {
  long j = 0;
  std::vector<double> u;  // preimage in Omega
  double weight = 0.0;    // 1 / |d_1 phi0(Gamma u)|
};

/// Root solving failed to bracket; a sign that phi0 is not monotone in x1.
class BracketError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Inverse branches at a fixed y. Restricts phi0 to its first argument once,
/// then serves any theta and branch index.
class BranchSolver {
 public:
  BranchSolver(const PiecewiseMap& map, std::span<const double> y);

  /// Preimage on branch j, or nullopt when that branch misses y.
  std::optional<Branch> solve(long j, double theta) const;

  /// Calls visit(j, u, weight) for every nonempty branch, in increasing j.
  template <class Visit>
  void for_each(double theta, Visit&& visit) const;

  /// Range of candidate branch indices for theta (inclusive).
  std::pair<long, long> window(double theta) const;

 private:
  bool nonempty(double target) const { return target > g_min_ && target < g_max_; }
  double root(double target, double* derivative) const;

  const PiecewiseMap& map_;
  expr::UnivariateProgram g_;
  std::array<double, kMaxOrder> u_tail_{};  // u_2..u_k
  double c_ = 0.0;                          // gamma^-(k-1) y_k
  double g_lo_ = 0.0, g_hi_ = 0.0;          // g(-L), g(L)
  double g_min_ = 0.0, g_max_ = 0.0;
};

std::optional<Branch> inverse_branch(const PiecewiseMap& map, std::span<const double> y, long j, double theta);
std::vector<Branch> enumerate_branches(const PiecewiseMap& map, std::span<const double> y, double theta);

using Observable = std::function<double(std::span<const double>)>;

/// P_theta f(y) = sum over branches of f(u) / |d_1 phi0(Gamma u)|.
double apply_transfer_theta(const PiecewiseMap& map, const Observable& f, std::span<const double> y, double theta);
/// Averaged operator on the theta quadrature.
double apply_transfer_averaged(const PiecewiseMap& map, const Observable& f, std::span<const double> y,
                               const ThetaQuadrature& quad);
/// Several observables at once; branches are solved once per (y, theta).
std::vector<double> apply_transfer_averaged_many(const PiecewiseMap& map, std::span<const Observable> fs,
                                                 std::span<const double> y, const ThetaQuadrature& quad);

/// Pointwise bound |Pf| <= N sup|f| C1^-(k-1)/2 C2^-1/2 sigma^-k/2, without the sup|f| factor.
double linf_bound_factor(const PiecewiseMap& map);

struct LYConstants {
  double eps0 = 0.0;
  double eps0_cap = 0.0;  // value before tuning
  bool adjusted = false;
  double K = 0.0;
  double M = 0.0;
  double eta_bar = 0.0;
  double eta = 0.0;
  double D = 0.0;
  double eta_limit = 0.0;  // eta_bar as eps0 -> 0
  // sampled ingredients of K and M
  double sup_d1 = 0.0;
  double sup_grad_d1 = 0.0;
  double sup_ds_inverse = 0.0;
  double sup_chart_first = 0.0;
  double sup_chart_second = 0.0;
};

/// eta_bar, eta and D at a given eps0 for fixed K and M.
struct LYFormulas {
  double sigma, Y, K, M;
  int k;
  double eta_bar(double eps0) const;
  double eta(double eps0) const;
  double D(double eps0) const;
};

/// Samples K and M on [-L-2beta/3, L+2beta/3]^k. If eta >= 1 at eps0_cap, eps0
/// is bisected downward until eta <= 1 - 1e-3.
LYConstants lasota_yorke_constants(const PiecewiseMap& map, double eps0_cap, int resolution = 0);

// ---------------------------------------------------------------------------

template <class Visit>
void BranchSolver::for_each(double theta, Visit&& visit) const {
  const int k = map_.k();
  const double L = map_.L();
  const double c = c_ - theta;
  auto [j_lo, j_hi] = window(theta);
  std::array<double, kMaxOrder> u{};
  for (int i = 1; i < k; ++i) u[i] = u_tail_[i];
  if (g_.affine()) {
    const double slope = g_.slope(), inv = 1.0 / slope, w = 1.0 / std::abs(slope);
    const double b = g_.intercept(), top = std::nextafter(L, 0.0);
    for (long j = j_lo; j <= j_hi; ++j) {
      const double target = c + 2.0 * L * static_cast<double>(j);
      if (!nonempty(target)) continue;
      u[0] = std::clamp((target - b) * inv, -L, top);
      visit(j, std::span<const double>(u.data(), k), w);
    }
    return;
  }
  for (long j = j_lo; j <= j_hi; ++j) {
    const double target = c + 2.0 * L * static_cast<double>(j);
    if (!nonempty(target)) continue;
    double d = 0.0;
    u[0] = root(target, &d);
    visit(j, std::span<const double>(u.data(), k), 1.0 / std::abs(d));
  }
}

}  // namespace gapkit
