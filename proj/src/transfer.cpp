#include "gapkit/transfer.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>

#include "gapkit/quadrature.hpp"

namespace gapkit {

ThetaQuadrature ThetaQuadrature::build(const PerturbationSpec& law, int order) {
  law.validate();
  ThetaQuadrature q;
  if (law.law == PerturbationSpec::Law::Point) {
    q.nodes = {law.value};
    q.weights = {1.0};
    return q;
  }
  if (order < 1) throw std::invalid_argument("quadrature order must be positive");
  auto [a, b] = law.support();
  const int panels = 2 * order;
  const double h = (b - a) / panels;
  double total = 0.0;
  for (int p = 0; p < panels; ++p) {
    auto rule = gauss_legendre(order, a + p * h, a + (p + 1) * h);
    for (int i = 0; i < order; ++i) {
      double w = rule.weights[i] * law.density(rule.nodes[i]);
      q.nodes.push_back(rule.nodes[i]);
      q.weights.push_back(w);
      total += w;
    }
  }
  q.raw_mass = total;
  for (double& w : q.weights) w /= total;
  return q;
}

// ---------------------------------------------------------------------------
// Inverse branches

BranchSolver::BranchSolver(const PiecewiseMap& map, std::span<const double> y) : map_(map) {
  const int k = map.k();
  const double L = map.L();
  // x = Gamma u with u_1 free and u_i = gamma y_{i-1}; then x_i = (Gamma y)_{i-1}
  std::array<double, kMaxOrder> x{};
  for (int i = 1; i < k; ++i) {
    u_tail_[i] = map.gamma() * y[i - 1];
    x[i] = y[i - 1] * map.gamma_pow(-(i - 1));
  }
  c_ = y[k - 1] * map.gamma_pow(-(k - 1));
  g_ = map.spec().phi0.restrict_to_axis(0, std::span<const double>(x.data(), k));
  g_lo_ = g_.value(-L);
  g_hi_ = g_.value(L);
  if (!(g_lo_ != g_hi_)) throw BracketError("phi0 is constant along x1 at this point");
  if ((g_hi_ > g_lo_) != (map.geometry().orientation > 0)) {
    throw BracketError("phi0 orientation along x1 disagrees with the sampled sign of d1 phi0");
  }
  g_min_ = std::min(g_lo_, g_hi_);
  g_max_ = std::max(g_lo_, g_hi_);
}

std::pair<long, long> BranchSolver::window(double theta) const {
  const double L = map_.L();
  const double c = c_ - theta;
  long lo = static_cast<long>(std::floor((g_min_ - c) / (2.0 * L)));
  long hi = static_cast<long>(std::ceil((g_max_ - c) / (2.0 * L)));
  return {lo, hi};
}

double BranchSolver::root(double target, double* derivative) const {
  const double L = map_.L();
  if (g_.affine()) {
    *derivative = g_.slope();
    return std::clamp((target - g_.intercept()) * (1.0 / g_.slope()), -L, std::nextafter(L, 0.0));
  }
  const bool rising = g_hi_ > g_lo_;
  double lo = -L, hi = L;  // g(lo) - target and g(hi) - target have opposite signs
  double t = -L + 2.0 * L * (target - g_lo_) / (g_hi_ - g_lo_);
  if (!(t > lo && t < hi)) t = 0.0;
  double d = 0.0;
  for (int it = 0; it < 200; ++it) {
    auto [v, dv] = g_.value_and_derivative(t);
    d = dv;
    const double r = v - target;
    if (r == 0.0) break;
    if ((r < 0.0) == rising) {
      lo = t;
    } else {
      hi = t;
    }
    double next = dv != 0.0 ? t - r / dv : 0.5 * (lo + hi);
    if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
    const double step = std::abs(next - t);
    t = next;
    if (step <= 1e-15 * std::max(1.0, std::abs(t)) || hi - lo <= 1e-15) break;
  }
  *derivative = d;
  return t;
}

std::optional<Branch> BranchSolver::solve(long j, double theta) const {
  const double target = c_ - theta + 2.0 * map_.L() * static_cast<double>(j);
  if (!nonempty(target)) return std::nullopt;
  Branch b;
  b.j = j;
  double d = 0.0;
  b.u.assign(u_tail_.begin(), u_tail_.begin() + map_.k());
  b.u[0] = root(target, &d);
  b.weight = 1.0 / std::abs(d);
  return b;
}

std::optional<Branch> inverse_branch(const PiecewiseMap& map, std::span<const double> y, long j, double theta) {
  if (!map.in_omega(y)) throw std::domain_error("inverse_branch: y outside Omega");
  return BranchSolver(map, y).solve(j, theta);
}

std::vector<Branch> enumerate_branches(const PiecewiseMap& map, std::span<const double> y, double theta) {
  if (!map.in_omega(y)) throw std::domain_error("enumerate_branches: y outside Omega");
  BranchSolver solver(map, y);
  std::vector<Branch> out;
  solver.for_each(theta, [&](long j, std::span<const double> u, double w) {
    out.push_back(Branch{j, std::vector<double>(u.begin(), u.end()), w});
  });
  return out;
}

double apply_transfer_theta(const PiecewiseMap& map, const Observable& f, std::span<const double> y, double theta) {
  if (!map.in_omega(y)) throw std::domain_error("apply_transfer_theta: y outside Omega");
  BranchSolver solver(map, y);
  double sum = 0.0;
  solver.for_each(theta, [&](long, std::span<const double> u, double w) { sum += f(u) * w; });
  return sum;
}

double apply_transfer_averaged(const PiecewiseMap& map, const Observable& f, std::span<const double> y,
                               const ThetaQuadrature& quad) {
  if (!map.in_omega(y)) throw std::domain_error("apply_transfer_averaged: y outside Omega");
  BranchSolver solver(map, y);
  double total = 0.0;
  for (std::size_t q = 0; q < quad.nodes.size(); ++q) {
    double sum = 0.0;
    solver.for_each(quad.nodes[q], [&](long, std::span<const double> u, double w) { sum += f(u) * w; });
    total += quad.weights[q] * sum;
  }
  return total;
}

std::vector<double> apply_transfer_averaged_many(const PiecewiseMap& map, std::span<const Observable> fs,
                                                 std::span<const double> y, const ThetaQuadrature& quad) {
  if (!map.in_omega(y)) throw std::domain_error("apply_transfer_averaged: y outside Omega");
  BranchSolver solver(map, y);
  std::vector<double> total(fs.size(), 0.0), sum(fs.size());
  for (std::size_t q = 0; q < quad.nodes.size(); ++q) {
    std::fill(sum.begin(), sum.end(), 0.0);
    solver.for_each(quad.nodes[q], [&](long, std::span<const double> u, double w) {
      for (std::size_t i = 0; i < fs.size(); ++i) sum[i] += fs[i](u) * w;
    });
    for (std::size_t i = 0; i < fs.size(); ++i) total[i] += quad.weights[q] * sum[i];
  }
  return total;
}

double linf_bound_factor(const PiecewiseMap& map) {
  const auto& s = map.spec();
  return static_cast<double>(map.geometry().N_bound) * std::pow(s.C1, -0.5 * (s.k - 1)) * std::pow(s.C2, -0.5) *
         std::pow(s.sigma, -0.5 * s.k);
}

// ---------------------------------------------------------------------------
// Lasota-Yorke constants

double LYFormulas::eta_bar(double eps0) const {
  const double s = std::sqrt(sigma);
  const double head = 4.0 * unit_ball_volume(k - 1) * Y / (unit_ball_volume(k) * (s - 1.0));
  return 1.0 / s + head * (1.0 + M * eps0 * (1.0 + 1.0 / s)) * std::pow(1.0 + M * (1.0 - 1.0 / s) * eps0, k - 1);
}

double LYFormulas::eta(double eps0) const { return (1.0 + K * eps0 / std::sqrt(sigma)) * eta_bar(eps0); }

double LYFormulas::D(double eps0) const {
  const double a = K * eps0 / std::sqrt(sigma);
  return a + (1.0 + a) * eta_bar(eps0);
}

LYConstants lasota_yorke_constants(const PiecewiseMap& map, double eps0_cap, int resolution) {
  if (!(eps0_cap > 0.0)) throw std::invalid_argument("eps0 must be positive");
  const auto& spec = map.spec();
  const int k = spec.k;
  if (resolution <= 0) resolution = default_sample_resolution(k);
  const double reach = spec.L + 2.0 * spec.beta / 3.0;
  std::vector<double> lo(k, -reach), hi(k, reach);
  std::vector<int> res(k, resolution);

  LYConstants c;
  c.eps0_cap = eps0_cap;
  c.sup_chart_first = 1.0;
  Eigen::MatrixXd DS = Eigen::MatrixXd::Zero(k, k);
  Eigen::MatrixXd D2g(std::max(1, k - 1), std::max(1, k - 1));
  std::vector<double> f(k), w(std::max(1, k - 1));
  expr::for_each_grid_node(spec.phi0, lo, hi, res, [&](std::span<const double>, const expr::Hessian& jet) {
    c.sup_d1 = std::max(c.sup_d1, std::abs(jet.grad[0]));
    double gd1 = 0.0;
    for (int i = 0; i < k; ++i) gd1 += jet.h(0, i) * jet.h(0, i);
    c.sup_grad_d1 = std::max(c.sup_grad_d1, std::sqrt(gd1));

    for (int i = 0; i + 1 < k; ++i) DS(i, i + 1) = map.gamma_pow(-1);
    for (int i = 0; i < k; ++i) DS(k - 1, i) = map.gamma_pow(k - 1 - i) * jet.grad[i];
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(DS);
    double smin = svd.singularValues()(k - 1);
    c.sup_ds_inverse = std::max(c.sup_ds_inverse, smin > 0.0 ? 1.0 / smin : std::numeric_limits<double>::infinity());

    if (k >= 2) {
      // chart u -> (u_1 - g(u_2..u_k), u_2..u_k) flattening a level set of phi0 o Gamma
      for (int i = 0; i < k; ++i) f[i] = map.gamma_pow(-i) * jet.grad[i];
      auto fij = [&](int i, int j) { return map.gamma_pow(-i - j) * jet.h(i, j); };
      double wn = 0.0;
      for (int i = 1; i < k; ++i) {
        w[i - 1] = f[i] / f[0];
        wn += w[i - 1] * w[i - 1];
      }
      wn = std::sqrt(wn);
      c.sup_chart_first = std::max(c.sup_chart_first, 0.5 * (wn + std::sqrt(wn * wn + 4.0)));
      for (int i = 1; i < k; ++i) {
        double d1w = (fij(i, 0) * f[0] - f[i] * fij(0, 0)) / (f[0] * f[0]);
        for (int l = 1; l < k; ++l) {
          double dlw = (fij(i, l) * f[0] - f[i] * fij(0, l)) / (f[0] * f[0]);
          D2g(i - 1, l - 1) = -(dlw - d1w * w[l - 1]);
        }
      }
      Eigen::JacobiSVD<Eigen::MatrixXd> s2(D2g);
      c.sup_chart_second = std::max(c.sup_chart_second, s2.singularValues()(0));
    }
  });
  c.M = std::max(c.sup_chart_first, c.sup_chart_second);
  c.K = 2.0 * c.sup_d1 / (std::pow(spec.C1, k - 1) * spec.C2 * std::pow(spec.sigma, k)) * c.sup_grad_d1 *
        map.gamma_pow(-(k - 1)) * c.sup_ds_inverse;

  LYFormulas ly{spec.sigma, map.geometry().Y, c.K, c.M, k};
  c.eta_limit = ly.eta_bar(0.0);
  double eps = eps0_cap;
  if (ly.eta(eps) >= 1.0) {
    const double floor_eps = 1e-12;
    const double eta_floor = ly.eta(floor_eps);
    if (eta_floor >= 1.0) throw std::runtime_error("no eps0 > 1e-12 achieves eta < 1");
    const double target = std::min(1.0 - 1e-3, 0.5 * (1.0 + eta_floor));
    double a = floor_eps, b = eps;
    for (int it = 0; it < 200 && b - a > 1e-6 * a; ++it) {
      double m = 0.5 * (a + b);
      if (ly.eta(m) <= target) {
        a = m;
      } else {
        b = m;
      }
    }
    eps = a;
    c.adjusted = true;
  }
  c.eps0 = eps;
  c.eta_bar = ly.eta_bar(eps);
  c.eta = ly.eta(eps);
  c.D = ly.D(eps);
  return c;
}

}  // namespace gapkit
