#include "gapkit/model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>

#include "gapkit/quadrature.hpp"

namespace gapkit {

// ---------------------------------------------------------------------------
// Perturbation law

PerturbationSpec PerturbationSpec::gaussian(double mean, double stddev, double truncation) {
  PerturbationSpec p;
  p.law = Law::Gaussian;
  p.mean = mean;
  p.stddev = stddev;
  p.truncation = truncation;
  return p;
}

PerturbationSpec PerturbationSpec::uniform(double lo, double hi) {
  PerturbationSpec p;
  p.law = Law::Uniform;
  p.lo = lo;
  p.hi = hi;
  return p;
}

PerturbationSpec PerturbationSpec::point(double value) {
  PerturbationSpec p;
  p.law = Law::Point;
  p.value = value;
  return p;
}

void PerturbationSpec::validate() const {
  switch (law) {
    case Law::Gaussian:
      if (!(stddev > 0.0) || !std::isfinite(stddev)) throw std::invalid_argument("perturbation std must be positive");
      if (!(truncation > 0.0)) throw std::invalid_argument("perturbation truncation must be positive");
      if (!std::isfinite(mean)) throw std::invalid_argument("perturbation mean must be finite");
      break;
    case Law::Uniform:
      if (!(hi > lo) || !std::isfinite(lo) || !std::isfinite(hi)) {
        throw std::invalid_argument("uniform perturbation needs a < b");
      }
      break;
    case Law::Point:
      if (!std::isfinite(value)) throw std::invalid_argument("point perturbation value must be finite");
      break;
  }
}

std::pair<double, double> PerturbationSpec::support() const {
  switch (law) {
    case Law::Gaussian: return {mean - truncation * stddev, mean + truncation * stddev};
    case Law::Uniform: return {lo, hi};
    case Law::Point: return {value, value};
  }
  return {0.0, 0.0};
}

namespace {
double std_normal_cdf(double z) { return 0.5 * std::erfc(-z / std::numbers::sqrt2); }
}  // namespace

double PerturbationSpec::density(double theta) const {
  auto [a, b] = support();
  switch (law) {
    case Law::Gaussian: {
      if (theta < a || theta > b) return 0.0;
      double z = (theta - mean) / stddev;
      double mass = std::erf(truncation / std::numbers::sqrt2);
      return std::exp(-0.5 * z * z) / (stddev * std::sqrt(2.0 * std::numbers::pi) * mass);
    }
    case Law::Uniform: return (theta < a || theta > b) ? 0.0 : 1.0 / (b - a);
    case Law::Point: throw std::logic_error("point perturbation has no density");
  }
  return 0.0;
}

double PerturbationSpec::quantile(double u) const {
  switch (law) {
    case Law::Point: return value;
    case Law::Uniform: return lo + u * (hi - lo);
    case Law::Gaussian: {
      const double c_lo = std_normal_cdf(-truncation), c_hi = std_normal_cdf(truncation);
      const double target = c_lo + u * (c_hi - c_lo);
      double z = bisect([&](double t) { return std_normal_cdf(t) - target; }, -truncation, truncation, 1e-15);
      return mean + stddev * z;
    }
  }
  return 0.0;
}

std::string PerturbationSpec::name() const {
  switch (law) {
    case Law::Gaussian: return "gaussian";
    case Law::Uniform: return "uniform";
    case Law::Point: return "point";
  }
  return "";
}

void ModelSpec::validate() const {
  if (k < 1 || k > kMaxOrder) throw std::invalid_argument("k must be in 1.." + std::to_string(kMaxOrder));
  if (!(L > 0.0) || !std::isfinite(L)) throw std::invalid_argument("L must be positive");
  if (!(beta > 0.0) || !std::isfinite(beta)) throw std::invalid_argument("beta must be positive");
  if (phi0.empty()) throw std::invalid_argument("phi0 required");
  if (phi0.arity() != k) throw std::invalid_argument("phi0 arity does not match k");
  if (!(C1 > 1.0)) throw std::invalid_argument("C1 must exceed 1");
  if (!(C2 > 1.0)) throw std::invalid_argument("C2 must exceed 1");
  if (!(sigma > 1.0) || !std::isfinite(sigma)) throw std::invalid_argument("sigma must exceed 1");
  perturbation.validate();
}

// ---------------------------------------------------------------------------
// Threshold

double unit_ball_volume(int n) {
  if (n < 0) throw std::invalid_argument("dimension must be non-negative");
  return std::pow(std::numbers::pi, 0.5 * n) / std::tgamma(0.5 * n + 1.0);
}

double eta0(double sigma, double Y, int k) {
  if (!(sigma > 1.0)) throw std::invalid_argument("eta0 needs sigma > 1");
  if (k < 1) throw std::invalid_argument("eta0 needs k >= 1");
  const double s = std::sqrt(sigma);
  return 1.0 / s + 4.0 * Y * unit_ball_volume(k - 1) / (unit_ball_volume(k) * (s - 1.0));
}

double crossing_threshold(double Y, int k) {
  if (!(Y > 0.0)) throw std::invalid_argument("crossing_threshold needs Y > 0");
  if (k < 1) throw std::invalid_argument("crossing_threshold needs k >= 1");
  double lo = 1.0, hi = 4.0;
  while (eta0(hi, Y, k) >= 1.0) {
    lo = hi;
    hi *= 2.0;
    if (hi > 1e300) throw std::runtime_error("crossing_threshold: no crossing found");
  }
  // eta0 is decreasing in sigma
  for (int it = 0; it < 400 && hi - lo > 1e-13 * hi; ++it) {
    double mid = 0.5 * (lo + hi);
    if (eta0(mid, Y, k) >= 1.0) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  return 0.5 * (lo + hi);
}

int default_sample_resolution(int k) {
  int r = static_cast<int>(std::floor(std::pow(262144.0, 1.0 / k)));
  r = std::clamp(r, 3, 257);
  if (r % 2 == 0) --r;
  return r;
}

GeometryReport derive_geometry(const ModelSpec& spec, int resolution) {
  spec.validate();
  const int k = spec.k;
  if (resolution <= 0) resolution = default_sample_resolution(k);
  if (resolution < 2) throw std::invalid_argument("sample resolution must be at least 2");

  GeometryReport g;
  g.gamma = 1.0 / std::sqrt(spec.C1 * spec.sigma);
  g.Y = k + 2;
  g.sigma_threshold = crossing_threshold(g.Y, k);
  for (int j = 0; j < k; ++j) g.omega_half_widths.push_back(std::pow(g.gamma, j) * spec.L);

  std::vector<int> res(k, resolution);
  std::vector<double> lo(k, -spec.L - spec.beta), hi(k, spec.L + spec.beta);
  g.bounds_beta = expr::sampled_derivative_bounds(spec.phi0, lo, hi, res);
  std::fill(lo.begin(), lo.end(), -spec.L);
  std::fill(hi.begin(), hi.end(), spec.L);
  g.bounds_unit = expr::sampled_derivative_bounds(spec.phi0, lo, hi, res);

  const double d1_floor = std::pow(spec.C1, k - 1) * spec.C2 * std::pow(spec.sigma, k);
  g.margins.push_back({"d1_lower", g.bounds_beta.dsq_min[0] - d1_floor});
  if (k >= 2) {
    double worst = 0.0;
    for (int j = 1; j < k; ++j) worst = std::max(worst, g.bounds_beta.dsq_max[j]);
    g.margins.push_back({"dj_upper", (spec.C1 - 1.0) * (spec.C2 - 1.0) * spec.sigma / (k - 1) - worst});
  }
  g.margins.push_back({"sigma_threshold", spec.sigma - g.sigma_threshold});
  // the derivative conditions are non-strict, the threshold is strict
  g.ok = g.margins.back().margin > 0.0;
  for (std::size_t i = 0; i + 1 < g.margins.size(); ++i) g.ok = g.ok && g.margins[i].margin >= 0.0;

  g.M1_phi0 = g.bounds_unit.grad_norm_max;
  g.M_Gamma = std::pow(g.gamma, -(k - 1));
  g.eps0 = g.M1_phi0 > 0.0 ? spec.L / (2.0 * g.M1_phi0 * g.M_Gamma) * (1.0 - 1e-6)
                           : std::numeric_limits<double>::infinity();
  g.N_bound = static_cast<long>(
      std::floor((g.bounds_unit.phi_max - g.bounds_unit.phi_min + 2.0 * spec.L) / (2.0 * spec.L) + 1.0));

  std::vector<double> centre(k, 0.0);
  g.orientation = spec.phi0.gradient(centre).grad[0] >= 0.0 ? 1 : -1;
  return g;
}

std::pair<long, double> reduce_branch(double v, double L) {
  long j = static_cast<long>(std::floor((v + L) / (2.0 * L)));
  double r = v - 2.0 * L * static_cast<double>(j);
  if (r >= L) {
    ++j;
    r = v - 2.0 * L * static_cast<double>(j);
  } else if (r < -L) {
    --j;
    r = v - 2.0 * L * static_cast<double>(j);
  }
  // v within rounding of an odd multiple of L: neither neighbour lands in [-L, L)
  if (r >= L) return {j + 1, -L};
  if (r < -L) return {j, -L};
  return {j, r};
}

long branch_index(double v, double L) { return reduce_branch(v, L).first; }

double reduce_mod(double v, double L) { return reduce_branch(v, L).second; }

// ---------------------------------------------------------------------------
// Embedded map

PiecewiseMap::PiecewiseMap(ModelSpec spec, GeometryReport geometry)
    : spec_(std::move(spec)), geometry_(std::move(geometry)) {
  const int k = spec_.k;
  gpow_.resize(2 * k + 1);
  for (int p = -k; p <= k; ++p) gpow_[p + k] = std::pow(geometry_.gamma, p);
}

bool PiecewiseMap::in_omega(std::span<const double> u, double rel_slack) const {
  for (int j = 0; j < k(); ++j) {
    if (!(std::abs(u[j]) <= half_width(j) * (1.0 + rel_slack))) return false;
  }
  return true;
}

bool PiecewiseMap::in_omega_beta(std::span<const double> u) const {
  for (int j = 0; j < k(); ++j) {
    if (!(std::abs(u[j] * gamma_pow(-j)) < spec_.L + spec_.beta)) return false;
  }
  return true;
}

void PiecewiseMap::to_x(std::span<const double> u, std::span<double> x) const {
  for (int j = 0; j < k(); ++j) x[j] = u[j] * gamma_pow(-j);
}

void PiecewiseMap::to_u(std::span<const double> x, std::span<double> u) const {
  for (int j = 0; j < k(); ++j) u[j] = x[j] * gamma_pow(j);
}

void PiecewiseMap::apply_T(std::span<const double> u, double theta, std::span<double> out, long* branch,
                           bool* boundary_hit) const {
  if (!in_omega(u)) throw std::domain_error("apply_T: point outside Omega");
  const int n = k();
  std::array<double, kMaxOrder> x{};
  to_x(u, x);
  const double z = spec_.phi0.value(std::span<const double>(x.data(), n)) + theta;
  const auto [j, r] = reduce_branch(z, spec_.L);
  if (boundary_hit) {
    double odd = 2.0 * spec_.L * std::round((z - spec_.L) / (2.0 * spec_.L)) + spec_.L;
    *boundary_hit = std::abs(z - odd) <= 1e-14;
  }
  if (branch) *branch = j;
  for (int i = 0; i + 1 < n; ++i) out[i] = u[i + 1] * gamma_pow(-1);
  out[n - 1] = gamma_pow(n - 1) * r;
}

std::vector<double> PiecewiseMap::apply_T(std::span<const double> u, double theta) const {
  std::vector<double> out(k());
  apply_T(u, theta, out);
  return out;
}

void PiecewiseMap::apply_S(std::span<const double> u, std::span<double> out) const {
  const int n = k();
  std::array<double, kMaxOrder> x{};
  to_x(u, x);
  const double z = spec_.phi0.value(std::span<const double>(x.data(), n));
  for (int i = 0; i + 1 < n; ++i) out[i] = u[i + 1] * gamma_pow(-1);
  out[n - 1] = gamma_pow(n - 1) * z;
}

std::vector<double> PiecewiseMap::apply_S(std::span<const double> u) const {
  std::vector<double> out(k());
  apply_S(u, out);
  return out;
}

double PiecewiseMap::phi(std::span<const double> x, double theta) const {
  return reduce_mod(spec_.phi0.value(x) + theta, spec_.L);
}

ExpansionDiagnostics expansion_eigenvalues(const PiecewiseMap& map, std::span<const double> x) {
  const int k = map.k();
  const auto g = map.spec().phi0.gradient(x);
  ExpansionDiagnostics d;
  const double v1 = map.gamma_pow(k - 1) * g.grad[0];
  d.v1_sq = v1 * v1;
  for (int i = 1; i < k; ++i) {
    double vi = map.gamma_pow(k - 1 - i) * g.grad[i];
    d.v_norm_sq += vi * vi;
  }
  d.gamma_m2 = map.gamma_pow(-2);
  if (k == 1) {
    d.gamma_m2 = 0.0;
    d.lambda_minus = d.lambda_plus = d.v1_sq;
  } else {
    const double a = d.gamma_m2 + d.v1_sq + d.v_norm_sq;
    const double disc = std::max(0.0, a * a - 4.0 * d.v1_sq * d.gamma_m2);
    d.lambda_minus = 0.5 * (a - std::sqrt(disc));
    d.lambda_plus = 0.5 * (a + std::sqrt(disc));
  }
  d.margin = d.lambda_minus - map.spec().sigma;
  return d;
}

BoundarySeparation boundary_separation(const PiecewiseMap& map, double theta, int per_axis) {
  const int k = map.k();
  const double L = map.L();
  const auto& geo = map.geometry();
  BoundarySeparation out;
  out.bound = 2.0 * L / (geo.M1_phi0 * geo.M_Gamma);

  // trailing coordinates u_2..u_k on a closed grid over Omega
  const int m = k - 1;
  std::vector<int> idx(m, 0);
  std::vector<double> x(k), u(k);
  const long j_lo = static_cast<long>(std::floor((theta + geo.bounds_unit.phi_min + L) / (2.0 * L))) - 1;
  const long j_hi = static_cast<long>(std::ceil((theta + geo.bounds_unit.phi_max + L) / (2.0 * L))) + 1;
  for (;;) {
    for (int i = 0; i < m; ++i) {
      double w = map.half_width(i + 1);
      u[i + 1] = per_axis > 1 ? -w + 2.0 * w * idx[i] / (per_axis - 1) : 0.0;
      x[i + 1] = u[i + 1] * map.gamma_pow(-(i + 1));
    }
    auto g = [&](double t) {
      x[0] = t;
      return map.spec().phi0.value(x);
    };
    const double g_lo = g(-L), g_hi = g(L);
    for (long j = j_lo; j <= j_hi; ++j) {
      const double target = (2.0 * j - 1.0) * L - theta;
      if ((target - g_lo) * (target - g_hi) > 0.0) continue;
      double t = bisect([&](double s) { return g(s) - target; }, -L, L, 1e-12);
      u[0] = t;
      out.points.push_back({j, u});
    }
    int i = m - 1;
    while (i >= 0 && ++idx[i] == per_axis) idx[i--] = 0;
    if (i < 0) break;
  }

  std::vector<std::size_t> order(out.points.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    const auto& pa = out.points[a];
    const auto& pb = out.points[b];
    return pa.u[0] != pb.u[0] ? pa.u[0] < pb.u[0] : a < b;
  });
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t a = 0; a < order.size(); ++a) {
    const auto& pa = out.points[order[a]];
    for (std::size_t b = a + 1; b < order.size(); ++b) {
      const auto& pb = out.points[order[b]];
      if (pb.u[0] - pa.u[0] >= best) break;
      if (pa.j == pb.j) continue;
      double d2 = 0.0;
      for (int i = 0; i < k; ++i) d2 += (pa.u[i] - pb.u[i]) * (pa.u[i] - pb.u[i]);
      best = std::min(best, std::sqrt(d2));
    }
  }
  out.min_distance = best;
  return out;
}

}  // namespace gapkit
