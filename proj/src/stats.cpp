#include "gapkit/stats.hpp"

#include <algorithm>
#include <cfloat>
#include <cmath>
#include <cstdio>
#include <functional>
#include <numeric>
#include <stdexcept>

#include "gapkit/rng.hpp"

namespace gapkit {

namespace {
// stream ids, fixed so outputs stay reproducible across versions
constexpr std::uint64_t kThetaStream = 1;
constexpr std::uint64_t kMarginalStream = 2;
constexpr std::uint64_t kSkewStream = 3;
}  // namespace

double draw_theta(const PerturbationSpec& law, std::uint64_t seed, std::uint64_t n) {
  CounterRng rng(seed, kThetaStream);
  switch (law.law) {
    case PerturbationSpec::Law::Point: return law.value;
    case PerturbationSpec::Law::Uniform: return law.lo + rng.uniform2(n)[0] * (law.hi - law.lo);
    case PerturbationSpec::Law::Gaussian:
      // rejection outside the truncation; 64 attempts per draw are reserved
      for (std::uint64_t a = 0; a < 64; ++a) {
        double z = rng.normal(n * 64 + a);
        if (std::abs(z) <= law.truncation) return law.mean + law.stddev * z;
      }
      return law.mean;
  }
  return 0.0;
}

// ---------------------------------------------------------------------------
// Simulation

std::vector<double> Trajectory::embedded(std::size_t n, double gamma) const {
  std::vector<double> y(k);
  double g = 1.0;
  for (int j = 0; j < k; ++j) {
    y[j] = g * x[n + j];
    g *= gamma;
  }
  return y;
}

Trajectory simulate_process(const PiecewiseMap& map, std::span<const double> x0, std::size_t n_steps,
                            std::uint64_t seed) {
  const int k = map.k();
  if (static_cast<int>(x0.size()) != k) throw std::invalid_argument("x0 needs k entries");
  for (double v : x0) {
    if (!(v >= -map.L() && v <= map.L())) throw std::invalid_argument("x0 outside [-L, L]");
  }
  Trajectory t;
  t.k = k;
  t.seed = seed;
  t.theta.resize(n_steps);
  t.x.assign(x0.begin(), x0.end());
  t.x.reserve(n_steps + k);
  const double gamma = map.gamma();
  std::vector<double> y(k), ty(k), ynext(k);
  for (std::size_t n = 0; n < n_steps; ++n) {
    const double theta = draw_theta(map.spec().perturbation, seed, n);
    t.theta[n] = theta;
    std::span<const double> window(t.x.data() + n, k);
    const double next = map.phi(window, theta);
    t.x.push_back(next);

    double g = 1.0;
    for (int j = 0; j < k; ++j) {
      y[j] = g * t.x[n + j];
      ynext[j] = g * t.x[n + 1 + j];
      g *= gamma;
    }
    bool hit = false;
    map.apply_T(y, theta, ty, nullptr, &hit);
    if (hit) ++t.boundary_hits;
    double err = 0.0;
    for (int j = 0; j < k; ++j) err = std::max(err, std::abs(ty[j] - ynext[j]));
    t.max_embedding_error = std::max(t.max_embedding_error, err);
    if (err > 1e-10) ++t.embedding_violations;
  }
  return t;
}

void write_trajectory_csv(std::ostream& os, const Trajectory& t) {
  os << "n,theta,X\n";
  char buf[96];
  for (std::size_t n = 0; n < t.steps(); ++n) {
    std::snprintf(buf, sizeof buf, "%zu,%.17g,%.17g\n", n, t.theta[n], t.x[n + t.k]);
    os << buf;
  }
}

// ---------------------------------------------------------------------------
// Marginals

double Marginal::integral() const {
  double s = 0.0;
  for (double v : values) s += v;
  return s * cell();
}

Marginal marginal_density(const DensityGrid& h, int axis, double gamma, double L) {
  const Grid& g = h.grid;
  if (axis < 0 || axis >= g.dim()) throw std::invalid_argument("axis out of range");
  Marginal m;
  m.axis = axis;
  m.L = L;
  m.values.assign(g.counts()[axis], 0.0);
  const double scale = std::pow(gamma, axis) * g.box_volume() / g.box_width(axis);
  for (std::size_t i = 0; i < g.size(); ++i) {
    const int c = static_cast<int>((i / g.stride(axis)) % static_cast<std::size_t>(g.counts()[axis]));
    m.values[c] += h.values[i];
  }
  for (double& v : m.values) v *= scale;
  return m;
}

double marginal_l1(const Marginal& a, const Marginal& b) {
  if (a.L != b.L) throw std::invalid_argument("marginals live on different intervals");
  const std::size_t na = a.values.size(), nb = b.values.size();
  // walk the merged breakpoints i/na and j/nb in integer arithmetic
  std::size_t i = 0, j = 0;
  double total = 0.0;
  std::size_t pos = 0, lcm_den = na * nb;
  while (i < na && j < nb) {
    std::size_t end_a = (i + 1) * nb, end_b = (j + 1) * na;
    std::size_t end = std::min(end_a, end_b);
    total += std::abs(a.values[i] - b.values[j]) * static_cast<double>(end - pos);
    pos = end;
    if (end == end_a) ++i;
    if (end == end_b) ++j;
  }
  return total * 2.0 * a.L / static_cast<double>(lcm_den);
}

double histogram_l1(std::span<const double> samples, const Marginal& m) {
  const std::size_t n = m.values.size();
  if (samples.empty()) throw std::invalid_argument("no samples");
  std::vector<double> counts(n, 0.0);
  const double cell = m.cell();
  for (double s : samples) {
    double t = std::floor((s + m.L) / cell);
    std::size_t c = t < 0.0 ? 0 : (t >= static_cast<double>(n) ? n - 1 : static_cast<std::size_t>(t));
    counts[c] += 1.0;
  }
  double total = 0.0;
  for (std::size_t c = 0; c < n; ++c) {
    total += std::abs(counts[c] / static_cast<double>(samples.size()) - m.values[c] * cell);
  }
  return total;
}

double empirical_vs_stationary(const Trajectory& t, const Marginal& m, std::size_t burn_in) {
  if (burn_in >= t.x.size()) throw std::invalid_argument("burn-in exceeds trajectory length");
  return histogram_l1(std::span<const double>(t.x.data() + burn_in, t.x.size() - burn_in), m);
}

std::vector<double> sample_from_marginal(const Marginal& m, std::size_t n, std::uint64_t seed) {
  const std::size_t cells = m.values.size();
  std::vector<double> cdf(cells);
  double acc = 0.0;
  for (std::size_t c = 0; c < cells; ++c) {
    acc += std::max(0.0, m.values[c]) * m.cell();
    cdf[c] = acc;
  }
  CounterRng rng(seed, kMarginalStream);
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    auto u = rng.uniform2(i);
    std::size_t c = static_cast<std::size_t>(std::lower_bound(cdf.begin(), cdf.end(), u[0] * acc) - cdf.begin());
    c = std::min(c, cells - 1);
    out[i] = -m.L + (static_cast<double>(c) + u[1]) * m.cell();
  }
  return out;
}

void write_marginal_csv(std::ostream& os, const Marginal& m) {
  os << "t,density\n";
  char buf[80];
  for (std::size_t c = 0; c < m.values.size(); ++c) {
    std::snprintf(buf, sizeof buf, "%.17g,%.17g\n", -m.L + (static_cast<double>(c) + 0.5) * m.cell(), m.values[c]);
    os << buf;
  }
}

// ---------------------------------------------------------------------------
// Skew-product invariance


SkewCheck skew_product_check(const PiecewiseMap& map, const DensityGrid& h, std::size_t samples, std::uint64_t seed,
                             SkewSampler sampler) {
  const Grid& g = h.grid;
  const int k = g.dim();
  const int dims = k + 2;
  std::vector<double> cdf(g.size());
  double acc = 0.0;
  for (std::size_t i = 0; i < g.size(); ++i) {
    acc += std::max(0.0, h.values[i]) * g.box_volume();
    cdf[i] = acc;
  }
  const auto& law = map.spec().perturbation;
  if (sampler == SkewSampler::ScrambledSobol && samples > (std::size_t{1} << 32)) {
    throw std::invalid_argument("scrambled Sobol sampler is limited to 2^32 samples");
  }
  CounterRng rng(seed, kSkewStream);
  ScrambledSobol sobol(seed, kSkewStream, dims);
  std::vector<double> counts(g.size(), 0.0), v(dims), u(k), lower(k), out(k);
  for (std::size_t s = 0; s < samples; ++s) {
    if (sampler == SkewSampler::ScrambledSobol) {
      for (int d = 0; d < dims; ++d) v[d] = sobol.point(static_cast<std::uint32_t>(s), d);
    } else {
      for (int d = 0; d < dims; d += 2) {
        auto r = rng.uniform2(s * 8 + static_cast<std::uint64_t>(d));
        v[d] = r[0];
        if (d + 1 < dims) v[d + 1] = r[1];
      }
    }
    std::size_t box = static_cast<std::size_t>(std::upper_bound(cdf.begin(), cdf.end(), v[0] * acc) - cdf.begin());
    box = std::min(box, g.size() - 1);
    g.lower_corner(box, lower);
    for (int j = 0; j < k; ++j) u[j] = lower[j] + v[1 + j] * g.box_width(j);
    map.apply_T(u, law.quantile(v[k + 1]), out);
    counts[g.index_of(out)] += 1.0;
  }
  SkewCheck r;
  r.samples = samples;
  r.sampler = sampler == SkewSampler::ScrambledSobol ? "sobol" : "iid";
  for (std::size_t i = 0; i < g.size(); ++i) {
    r.l1 += std::abs(counts[i] / static_cast<double>(samples) - h.values[i] * g.box_volume());
  }
  return r;
}

// ---------------------------------------------------------------------------
// Correlation decay

DecayResult correlation_decay(const SparseMatrix& m, const DensityGrid& h_star, const Observable& f,
                              const Observable& h, int n_max) {
  const Grid& g = h_star.grid;
  const std::size_t n = g.size();
  if (m.size() != n) throw std::invalid_argument("matrix and density sizes differ");
  if (n_max < 1) throw std::invalid_argument("n_max must be positive");
  std::vector<double> fv(n), hv(n), pi(n), q(n), next(n), c(g.dim());
  double mean_f = 0.0, mean_h = 0.0, fmax = 0.0, hmax = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    g.center(i, c);
    pi[i] = h_star.values[i] * g.box_volume();
    fv[i] = f(c);
    hv[i] = h(c);
    mean_f += fv[i] * pi[i];
    mean_h += hv[i] * pi[i];
    fmax = std::max(fmax, std::abs(fv[i]));
    hmax = std::max(hmax, std::abs(hv[i]));
  }
  // both sides centred, so q carries zero mass and its rounding noise contracts with it
  for (std::size_t i = 0; i < n; ++i) {
    fv[i] -= mean_f;
    q[i] = (hv[i] - mean_h) * pi[i];
  }
  const double scale = std::max(1.0, fmax * hmax);
  DecayResult r;
  for (int step = 0; step <= n_max; ++step) {
    if (step > 0) {
      m.left_multiply(q, next);
      std::swap(q, next);
    }
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += fv[i] * q[i];
    r.covariances.push_back(s);
  }
  const double floor = 100.0 * DBL_EPSILON * scale;
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  int used = 0;
  for (int step = 0; step <= n_max; ++step) {
    const double a = std::abs(r.covariances[step]);
    if (a <= floor) continue;
    const double y = std::log(a);
    sx += step;
    sy += y;
    sxx += static_cast<double>(step) * step;
    sxy += step * y;
    ++used;
  }
  r.points_used = used;
  if (used < 2) {
    r.note = "decay too fast to fit (fewer than 2 points above noise)";
    return r;
  }
  const double slope = (used * sxy - sx * sy) / (used * sxx - sx * sx);
  r.Lambda = std::exp(slope);
  r.fitted = true;
  return r;
}

// ---------------------------------------------------------------------------
// Oscillation seminorm

SeminormEstimate osc_seminorm(const DensityGrid& f, std::span<const double> eps_list) {
  const Grid& g = f.grid;
  const int k = g.dim();
  if (eps_list.empty()) throw std::invalid_argument("eps list is empty");
  SeminormEstimate out;
  for (double eps : eps_list) {
    if (!(eps >= 2.0 * g.box_diameter() * (1.0 - 1e-12))) {
      throw std::invalid_argument("eps below grid resolution (needs at least two box diameters)");
    }
    // offsets whose box centres lie within eps
    std::vector<int> reach(k);
    for (int j = 0; j < k; ++j) reach[j] = static_cast<int>(std::floor(eps / g.box_width(j)));
    std::vector<std::vector<int>> offsets;
    std::vector<int> o(k);
    std::function<void(int, double)> gen = [&](int j, double r2) {
      if (j == k) {
        offsets.push_back(o);
        return;
      }
      for (int a = -reach[j]; a <= reach[j]; ++a) {
        double d = a * g.box_width(j);
        if (r2 + d * d <= eps * eps * (1.0 + 1e-12)) {
          o[j] = a;
          gen(j + 1, r2 + d * d);
        }
      }
    };
    gen(0, 0.0);

    // padded index space; cells outside the grid hold zero
    std::vector<int> lo(k), hi(k), idx(k), nb(k);
    for (int j = 0; j < k; ++j) {
      lo[j] = -reach[j];
      hi[j] = g.counts()[j] - 1 + reach[j];
      idx[j] = lo[j];
    }
    auto value = [&](const std::vector<int>& m) {
      for (int j = 0; j < k; ++j) {
        if (m[j] < 0 || m[j] >= g.counts()[j]) return 0.0;
      }
      return f.values[g.flat(m)];
    };
    double total = 0.0;
    for (;;) {
      double vmax = -INFINITY, vmin = INFINITY;
      for (const auto& off : offsets) {
        for (int j = 0; j < k; ++j) nb[j] = idx[j] + off[j];
        double v = value(nb);
        vmax = std::max(vmax, v);
        vmin = std::min(vmin, v);
      }
      total += vmax - vmin;
      int j = k - 1;
      while (j >= 0) {
        if (++idx[j] <= hi[j]) break;
        idx[j] = lo[j];
        --j;
      }
      if (j < 0) break;
    }
    out.table.emplace_back(eps, total * g.box_volume() / eps);
  }
  double mx = -INFINITY, mn = INFINITY;
  for (const auto& [e, v] : out.table) {
    mx = std::max(mx, v);
    mn = std::min(mn, v);
  }
  out.estimate = mx;
  out.resolution_error = mx - mn;
  return out;
}

}  // namespace gapkit
