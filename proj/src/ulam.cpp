#include "gapkit/ulam.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <stdexcept>

#include "gapkit/parallel.hpp"
#include "gapkit/rng.hpp"

namespace gapkit {

// ---------------------------------------------------------------------------
// Grid

Grid::Grid(std::vector<double> half_widths, std::vector<int> counts, std::size_t max_boxes)
    : half_widths_(std::move(half_widths)), counts_(std::move(counts)) {
  if (counts_.empty() || counts_.size() != half_widths_.size()) {
    throw std::invalid_argument("grid counts must match the dimension");
  }
  const int k = dim();
  size_ = 1;
  for (int c : counts_) {
    if (c < 1) throw std::invalid_argument("grid counts must be positive");
    if (size_ > max_boxes / static_cast<std::size_t>(c)) {
      throw std::invalid_argument("grid exceeds the maximum of " + std::to_string(max_boxes) + " boxes");
    }
    size_ *= static_cast<std::size_t>(c);
  }
  widths_.resize(k);
  strides_.resize(k);
  volume_ = 1.0;
  for (int j = 0; j < k; ++j) {
    if (!(half_widths_[j] > 0.0)) throw std::invalid_argument("grid half-widths must be positive");
    widths_[j] = 2.0 * half_widths_[j] / counts_[j];
    volume_ *= widths_[j];
  }
  std::size_t s = 1;
  for (int j = k - 1; j >= 0; --j) {
    strides_[j] = s;
    s *= static_cast<std::size_t>(counts_[j]);
  }
}

double Grid::box_diameter() const {
  double s = 0.0;
  for (double w : widths_) s += w * w;
  return std::sqrt(s);
}

int Grid::axis_index(int axis, double v) const {
  double t = std::floor((v + half_widths_[axis]) / widths_[axis]);
  if (!(t >= 0.0)) return 0;  // also catches NaN
  if (t >= counts_[axis]) return counts_[axis] - 1;
  return static_cast<int>(t);
}

std::size_t Grid::index_of(std::span<const double> u) const {
  std::size_t idx = 0;
  for (int j = 0; j < dim(); ++j) idx += static_cast<std::size_t>(axis_index(j, u[j])) * strides_[j];
  return idx;
}

std::size_t Grid::flat(std::span<const int> m) const {
  std::size_t idx = 0;
  for (int j = 0; j < dim(); ++j) idx += static_cast<std::size_t>(m[j]) * strides_[j];
  return idx;
}

std::vector<int> Grid::multi(std::size_t index) const {
  std::vector<int> m(dim());
  for (int j = 0; j < dim(); ++j) {
    m[j] = static_cast<int>(index / strides_[j]);
    index %= strides_[j];
  }
  return m;
}

void Grid::lower_corner(std::size_t index, std::span<double> out) const {
  for (int j = 0; j < dim(); ++j) {
    int m = static_cast<int>(index / strides_[j]);
    index %= strides_[j];
    out[j] = -half_widths_[j] + m * widths_[j];
  }
}

void Grid::center(std::size_t index, std::span<double> out) const {
  lower_corner(index, out);
  for (int j = 0; j < dim(); ++j) out[j] += 0.5 * widths_[j];
}

Grid build_grid(const GeometryReport& geometry, std::span<const int> counts, std::size_t max_boxes) {
  if (counts.size() != geometry.omega_half_widths.size()) {
    throw std::invalid_argument("grid needs one count per coordinate");
  }
  return Grid(geometry.omega_half_widths, std::vector<int>(counts.begin(), counts.end()), max_boxes);
}

// ---------------------------------------------------------------------------
// DensityGrid

DensityGrid DensityGrid::from_function(const Grid& grid, const Observable& f) {
  DensityGrid d{grid, std::vector<double>(grid.size())};
  std::vector<double> c(grid.dim());
  for (std::size_t i = 0; i < grid.size(); ++i) {
    grid.center(i, c);
    d.values[i] = f(c);
  }
  return d;
}

double DensityGrid::integral() const {
  double s = 0.0;
  for (double v : values) s += v;
  return s * grid.box_volume();
}

double DensityGrid::l1_norm() const {
  double s = 0.0;
  for (double v : values) s += std::abs(v);
  return s * grid.box_volume();
}

double DensityGrid::sup_norm() const {
  double s = 0.0;
  for (double v : values) s = std::max(s, std::abs(v));
  return s;
}

double DensityGrid::at(std::span<const double> u) const {
  for (int j = 0; j < grid.dim(); ++j) {
    if (!(std::abs(u[j]) <= grid.half_widths()[j] * (1.0 + 1e-12))) return 0.0;
  }
  return values[grid.index_of(u)];
}

Observable DensityGrid::as_observable() const {
  return [this](std::span<const double> u) { return at(u); };
}

// ---------------------------------------------------------------------------
// SparseMatrix

SparseMatrix SparseMatrix::from_rows(std::size_t n,
                                     const std::vector<std::vector<std::pair<std::size_t, double>>>& rows) {
  if (rows.size() != n) throw std::invalid_argument("row count mismatch");
  SparseMatrix m;
  m.n_ = n;
  m.row_ptr_.assign(n + 1, 0);
  for (std::size_t i = 0; i < n; ++i) m.row_ptr_[i + 1] = m.row_ptr_[i] + rows[i].size();
  m.cols_.resize(m.row_ptr_[n]);
  m.vals_.resize(m.row_ptr_[n]);
  std::vector<std::size_t> col_count(n + 1, 0);
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t at = m.row_ptr_[i];
    for (const auto& [c, v] : rows[i]) {
      if (c >= n) throw std::invalid_argument("column out of range");
      m.cols_[at] = c;
      m.vals_[at] = v;
      ++at;
      ++col_count[c + 1];
    }
  }
  m.t_ptr_.assign(n + 1, 0);
  for (std::size_t c = 0; c < n; ++c) m.t_ptr_[c + 1] = m.t_ptr_[c] + col_count[c + 1];
  m.t_rows_.resize(m.cols_.size());
  m.t_vals_.resize(m.cols_.size());
  std::vector<std::size_t> fill(m.t_ptr_.begin(), m.t_ptr_.end() - 1);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t a = m.row_ptr_[i]; a < m.row_ptr_[i + 1]; ++a) {
      std::size_t pos = fill[m.cols_[a]]++;
      m.t_rows_[pos] = i;
      m.t_vals_[pos] = m.vals_[a];
    }
  }
  return m;
}

double SparseMatrix::entry(std::size_t i, std::size_t j) const {
  auto b = cols_.begin() + static_cast<std::ptrdiff_t>(row_ptr_[i]);
  auto e = cols_.begin() + static_cast<std::ptrdiff_t>(row_ptr_[i + 1]);
  auto it = std::lower_bound(b, e, j);
  return (it != e && *it == j) ? vals_[static_cast<std::size_t>(it - cols_.begin())] : 0.0;
}

double SparseMatrix::row_sum(std::size_t i) const {
  double s = 0.0;
  for (std::size_t a = row_ptr_[i]; a < row_ptr_[i + 1]; ++a) s += vals_[a];
  return s;
}

void SparseMatrix::left_multiply(std::span<const double> p, std::span<double> out) const {
  parallel_chunks(n_, [&](std::size_t, std::size_t b, std::size_t e) {
    for (std::size_t c = b; c < e; ++c) {
      double s = 0.0;
      for (std::size_t a = t_ptr_[c]; a < t_ptr_[c + 1]; ++a) s += p[t_rows_[a]] * t_vals_[a];
      out[c] = s;
    }
  });
}

void SparseMatrix::right_multiply(std::span<const double> v, std::span<double> out) const {
  parallel_chunks(n_, [&](std::size_t, std::size_t b, std::size_t e) {
    for (std::size_t r = b; r < e; ++r) {
      double s = 0.0;
      for (std::size_t a = row_ptr_[r]; a < row_ptr_[r + 1]; ++a) s += vals_[a] * v[cols_[a]];
      out[r] = s;
    }
  });
}

void SparseMatrix::write_triplets(std::ostream& os) const {
  char buf[96];
  for (std::size_t i = 0; i < n_; ++i) {
    for (std::size_t a = row_ptr_[i]; a < row_ptr_[i + 1]; ++a) {
      std::snprintf(buf, sizeof buf, "%zu %zu %.17g\n", i, cols_[a], vals_[a]);
      os << buf;
    }
  }
}

// ---------------------------------------------------------------------------
// Assembly

SparseMatrix assemble_ulam(const PiecewiseMap& map, const Grid& grid, const ThetaQuadrature& quad,
                           const UlamOptions& options) {
  const int k = map.k();
  if (grid.dim() != k) throw std::invalid_argument("grid dimension does not match k");
  if (options.sampling == UlamOptions::Sampling::Midpoint && options.subsamples < 1) {
    throw std::invalid_argument("subsamples must be positive");
  }
  const std::size_t n = grid.size();
  const int s = options.subsamples;
  std::size_t per_box = 1;
  if (options.sampling == UlamOptions::Sampling::Midpoint) {
    for (int j = 0; j < k; ++j) per_box *= static_cast<std::size_t>(s);
  } else {
    per_box = options.mc_samples;
  }
  const double sample_weight = 1.0 / static_cast<double>(per_box);
  const double L = map.L();
  const double top = map.gamma_pow(k - 1);

  std::vector<std::vector<std::pair<std::size_t, double>>> rows(n);
  parallel_chunks(n, [&](std::size_t, std::size_t begin, std::size_t end) {
    // entries are zeroed again after each row, so the buffer can be reused
    thread_local std::vector<double> acc;
    if (acc.size() != n) acc.assign(n, 0.0);
    std::vector<std::size_t> touched;
    std::vector<int> sub(k, 0);
    std::array<double, kMaxOrder> lower{}, u{}, x{};
    for (std::size_t box = begin; box < end; ++box) {
      grid.lower_corner(box, std::span<double>(lower.data(), k));
      CounterRng rng(options.seed, box);
      std::fill(sub.begin(), sub.end(), 0);
      for (std::size_t m = 0; m < per_box; ++m) {
        if (options.sampling == UlamOptions::Sampling::Midpoint) {
          for (int j = 0; j < k; ++j) u[j] = lower[j] + (sub[j] + 0.5) / s * grid.box_width(j);
          int j = k - 1;
          while (j >= 0 && ++sub[j] == s) sub[j--] = 0;
        } else {
          for (int j = 0; j < k; j += 2) {
            auto r = rng.uniform2(m * static_cast<std::size_t>(kMaxOrder) + static_cast<std::size_t>(j));
            u[j] = lower[j] + r[0] * grid.box_width(j);
            if (j + 1 < k) u[j + 1] = lower[j + 1] + r[1] * grid.box_width(j + 1);
          }
        }
        std::size_t base = 0;
        for (int i = 0; i + 1 < k; ++i) {
          base += static_cast<std::size_t>(grid.axis_index(i, u[i + 1] * map.gamma_pow(-1))) * grid.stride(i);
        }
        map.to_x(std::span<const double>(u.data(), k), std::span<double>(x.data(), k));
        const double z = map.spec().phi0.value(std::span<const double>(x.data(), k));
        for (std::size_t q = 0; q < quad.nodes.size(); ++q) {
          const double r = reduce_mod(z + quad.nodes[q], L);
          const std::size_t col = base + static_cast<std::size_t>(grid.axis_index(k - 1, top * r));
          if (acc[col] == 0.0) touched.push_back(col);
          acc[col] += sample_weight * quad.weights[q];
        }
      }
      std::sort(touched.begin(), touched.end());
      double total = 0.0;
      for (std::size_t c : touched) total += acc[c];
      auto& row = rows[box];
      row.reserve(touched.size());
      for (std::size_t c : touched) {
        if (acc[c] > 0.0) row.emplace_back(c, acc[c] / total);
        acc[c] = 0.0;
      }
      touched.clear();
    }
  });
  return SparseMatrix::from_rows(n, rows);
}

// ---------------------------------------------------------------------------
// Stationary density and subdominant modulus

namespace {
double l1_diff(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += std::abs(a[i] - b[i]);
  return s;
}
double l2(std::span<const double> a) {
  double s = 0.0;
  for (double v : a) s += v * v;
  return std::sqrt(s);
}
}  // namespace

StationaryResult stationary_density(const SparseMatrix& m, const Grid& grid, const StationaryOptions& options) {
  const std::size_t n = m.size();
  if (grid.size() != n) throw std::invalid_argument("grid and matrix sizes differ");
  std::vector<double> p(n, 1.0 / static_cast<double>(n)), q(n), sum(n, 0.0);
  StationaryResult res;
  long converged_at = -1;
  long it = 0;
  double r = 0.0;
  for (it = 1; it <= options.max_iterations; ++it) {
    m.left_multiply(p, q);
    r = l1_diff(q, p);
    std::swap(p, q);
    for (std::size_t i = 0; i < n; ++i) sum[i] += p[i];
    if (converged_at < 0 && r <= options.tolerance) {
      converged_at = it;
      res.residual = r;
    }
    if (converged_at >= 0 && r <= options.stagnation) break;
    if (converged_at >= 0 && it >= 4 * converged_at + 200) break;  // rounding floor above the stagnation level
  }
  if (it > options.max_iterations) it = options.max_iterations;
  res.cesaro_iterations = it;
  res.converged = converged_at >= 0;
  res.iterations = res.converged ? converged_at : it;
  if (!res.converged) res.residual = r;

  // Cesaro average over the horizon; terms past the last iteration equal the last iterate
  const double horizon = std::max(options.cesaro_horizon, static_cast<double>(it));
  std::vector<double> avg(n);
  for (std::size_t i = 0; i < n; ++i) avg[i] = (sum[i] + (horizon - static_cast<double>(it)) * p[i]) / horizon;
  if (!res.converged) {
    // no fixed iterate: the plain average of the iterates is the estimate
    for (std::size_t i = 0; i < n; ++i) avg[i] = sum[i] / static_cast<double>(it);
    res.cesaro_discrepancy = l1_diff(avg, p);
    p = avg;
  } else {
    res.cesaro_discrepancy = l1_diff(avg, p);
  }
  double total = std::accumulate(p.begin(), p.end(), 0.0);
  res.density.grid = grid;
  res.density.values.resize(n);
  for (std::size_t i = 0; i < n; ++i) res.density.values[i] = p[i] / total / grid.box_volume();
  return res;
}

SubdominantResult subdominant_modulus(const SparseMatrix& m, std::span<const double> pi,
                                      const SubdominantOptions& options) {
  const std::size_t n = m.size();
  if (pi.size() != n) throw std::invalid_argument("stationary vector size mismatch");
  SubdominantResult out;
  if (n < 2) return out;
  std::vector<double> v(n), w(n);
  auto project = [&](std::vector<double>& a) {
    double mass = std::accumulate(a.begin(), a.end(), 0.0);
    for (std::size_t i = 0; i < n; ++i) a[i] -= mass * pi[i];
  };
  for (int rs = 0; rs < options.restarts; ++rs) {
    RngStream rng(options.seed, static_cast<std::uint64_t>(rs));
    for (auto& e : v) e = rng.uniform() - 0.5;
    project(v);
    double nv = l2(v);
    for (auto& e : v) e /= nv;
    std::vector<double> logs;
    double estimate = 0.0, previous = -1.0;
    bool annihilated = false;
    int it = 0;
    for (it = 1; it <= options.max_iterations; ++it) {
      m.left_multiply(v, w);
      project(w);
      double g = l2(w);
      if (g <= 1e-13) {
        // M^t v vanished for a generic v: the complement is nilpotent to rounding
        annihilated = true;
        estimate = 0.0;
        break;
      }
      for (std::size_t i = 0; i < n; ++i) v[i] = w[i] / g;
      logs.push_back(std::log(g));
      if (static_cast<int>(logs.size()) >= options.window) {
        double s = 0.0;
        for (int a = 0; a < options.window; ++a) s += logs[logs.size() - 1 - a];
        estimate = std::exp(s / options.window);
        if (it >= options.min_iterations && it % options.window == 0) {
          if (previous >= 0.0 && std::abs(estimate - previous) <= options.rel_tol * std::max(estimate, 1e-300)) break;
          previous = estimate;
        }
      }
    }
    if (!annihilated && static_cast<int>(logs.size()) < options.window) {
      double s = std::accumulate(logs.begin(), logs.end(), 0.0);
      estimate = logs.empty() ? 0.0 : std::exp(s / static_cast<double>(logs.size()));
    }
    out.per_restart.push_back(estimate);
    out.iterations.push_back(std::min(it, options.max_iterations));
    out.annihilated.push_back(annihilated);
    out.modulus = std::max(out.modulus, estimate);
  }
  return out;
}

SpectralReport spectral_report(const SparseMatrix& m, const Grid& grid, const StationaryResult& st,
                               const SubdominantOptions& options) {
  SpectralReport r;
  r.grid = grid.counts();
  r.boxes = grid.size();
  r.nnz = m.nnz();
  std::vector<double> pi(st.density.values.size());
  for (std::size_t i = 0; i < pi.size(); ++i) pi[i] = st.density.values[i] * grid.box_volume();
  std::vector<double> next(pi.size());
  m.left_multiply(pi, next);
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < pi.size(); ++i) {
    num += next[i] * pi[i];
    den += pi[i] * pi[i];
  }
  r.leading = den > 0.0 ? num / den : 0.0;
  auto sub = subdominant_modulus(m, pi, options);
  r.lambda2 = sub.modulus;
  r.gap = 1.0 - sub.modulus;
  r.lambda2_per_restart = sub.per_restart;
  r.stationary_converged = st.converged;
  r.stationary_iterations = st.iterations;
  r.stationary_residual = st.residual;
  r.cesaro_discrepancy = st.cesaro_discrepancy;
  r.peripheral_suspected = !st.converged || sub.modulus >= 1.0 - 1e-9;
  return r;
}

void write_density_csv(std::ostream& os, const DensityGrid& d) {
  const int k = d.grid.dim();
  for (int j = 0; j < k; ++j) os << "c" << (j + 1) << ",";
  os << "density\n";
  std::vector<double> c(k);
  char buf[64];
  for (std::size_t i = 0; i < d.grid.size(); ++i) {
    d.grid.center(i, c);
    for (int j = 0; j < k; ++j) {
      std::snprintf(buf, sizeof buf, "%.17g,", c[j]);
      os << buf;
    }
    std::snprintf(buf, sizeof buf, "%.17g\n", d.values[i]);
    os << buf;
  }
}

}  // namespace gapkit
