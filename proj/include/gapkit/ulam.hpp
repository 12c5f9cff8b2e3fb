#pragma once

#include <cstddef>
#include <cstdint>
#include <ostream>
#include <span>
#include <utility>
#include <vector>

#include "gapkit/model.hpp"
#include "gapkit/transfer.hpp"

namespace gapkit {

/// Axis-aligned box partition of the centred box prod [-w_j, w_j].
class Grid {
 public:
  Grid() = default;
  Grid(std::vector<double> half_widths, std::vector<int> counts, std::size_t max_boxes = std::size_t{1} << 24);

  int dim() const { return static_cast<int>(counts_.size()); }
  std::size_t size() const { return size_; }
  const std::vector<int>& counts() const { return counts_; }
  const std::vector<double>& half_widths() const { return half_widths_; }
  double box_width(int axis) const { return widths_[axis]; }
  double box_volume() const { return volume_; }
  double box_diameter() const;
  double total_volume() const { return volume_ * static_cast<double>(size_); }

  /// Index of the box containing u; coordinates on or past the faces are clamped.
  std::size_t index_of(std::span<const double> u) const;
  int axis_index(int axis, double v) const;
  std::size_t flat(std::span<const int> multi) const;
  std::vector<int> multi(std::size_t index) const;
  void lower_corner(std::size_t index, std::span<double> out) const;
  void center(std::size_t index, std::span<double> out) const;
  std::size_t stride(int axis) const { return strides_[axis]; }

 private:
  std::vector<double> half_widths_;
  std::vector<int> counts_;
  std::vector<double> widths_;
  std::vector<std::size_t> strides_;  // last axis fastest
  double volume_ = 0.0;
  std::size_t size_ = 0;
};

/// Grid over Omega from the geometry's half-widths.
Grid build_grid(const GeometryReport& geometry, std::span<const int> counts,
                std::size_t max_boxes = std::size_t{1} << 24);

/// Piecewise-constant density, value per box (per unit volume).
struct DensityGrid {
  Grid grid;
  std::vector<double> values;

  static DensityGrid from_function(const Grid& grid, const Observable& f);  // box-centre samples
  double integral() const;
  double l1_norm() const;
  double sup_norm() const;
  /// Value at u; zero outside the grid's box (beyond a 1e-12 relative slack).
  double at(std::span<const double> u) const;
  Observable as_observable() const;
};

/// Sparse row-stochastic matrix in CSR form, transpose kept for left products.
class SparseMatrix {
 public:
  SparseMatrix() = default;
  /// rows[i] holds (column, value) with strictly increasing columns.
  static SparseMatrix from_rows(std::size_t n, const std::vector<std::vector<std::pair<std::size_t, double>>>& rows);

  std::size_t size() const { return n_; }
  std::size_t nnz() const { return cols_.size(); }
  double entry(std::size_t i, std::size_t j) const;
  double row_sum(std::size_t i) const;
  /// out = p M (p a row vector)
  void left_multiply(std::span<const double> p, std::span<double> out) const;
  /// out = M v
  void right_multiply(std::span<const double> v, std::span<double> out) const;
  /// one "row col value" line per nonzero, 0-based, row-major order
  void write_triplets(std::ostream& os) const;

  const std::vector<std::size_t>& row_ptr() const { return row_ptr_; }
  const std::vector<std::size_t>& cols() const { return cols_; }
  const std::vector<double>& vals() const { return vals_; }

 private:
  std::size_t n_ = 0;
  std::vector<std::size_t> row_ptr_, cols_;
  std::vector<double> vals_;
  std::vector<std::size_t> t_ptr_, t_rows_;
  std::vector<double> t_vals_;
};

struct UlamOptions {
  enum class Sampling { Midpoint, MonteCarlo };
  Sampling sampling = Sampling::Midpoint;
  int subsamples = 16;              // per axis for Midpoint
  std::size_t mc_samples = 4096;    // per box for MonteCarlo
  std::uint64_t seed = 0;
};

/// Entry (i, j) estimates Pr[T_theta(x) in box j] for x uniform in box i and theta
/// from the quadrature. Rows are normalized to sum to one.
SparseMatrix assemble_ulam(const PiecewiseMap& map, const Grid& grid, const ThetaQuadrature& quad,
                           const UlamOptions& options = {});

struct StationaryOptions {
  double tolerance = 1e-10;     // L1 residual |pM - p|
  long max_iterations = 100000;
  double stagnation = 1e-13;    // iterate treated as fixed for the Cesaro tail
  double cesaro_horizon = 1e6;  // number of terms in the Cesaro average
};

struct StationaryResult {
  DensityGrid density;
  bool converged = false;
  long iterations = 0;
  double residual = 0.0;
  double cesaro_discrepancy = 0.0;  // L1 distance to the Cesaro average
  long cesaro_iterations = 0;       // iterations actually run for the Cesaro sum
};

/// Power iteration p <- pM from the uniform vector.
StationaryResult stationary_density(const SparseMatrix& m, const Grid& grid, const StationaryOptions& options = {});

struct SubdominantOptions {
  int restarts = 5;
  int window = 20;
  int min_iterations = 60;
  int max_iterations = 1000;
  double rel_tol = 1e-5;
  std::uint64_t seed = 0x5eed;
};

struct SubdominantResult {
  double modulus = 0.0;
  std::vector<double> per_restart;
  std::vector<int> iterations;
  std::vector<bool> annihilated;  // iterate vanished: complement nilpotent to rounding
};

/// Power iteration on vectors with zero total mass, projected along the
/// stationary masses after each step.
SubdominantResult subdominant_modulus(const SparseMatrix& m, std::span<const double> stationary_masses,
                                      const SubdominantOptions& options = {});

struct SpectralReport {
  std::vector<int> grid;
  std::size_t boxes = 0;
  std::size_t nnz = 0;
  double leading = 0.0;  // (pi M . pi) / (pi . pi) at the stationary masses pi
  double lambda2 = 0.0;
  double gap = 0.0;
  bool stationary_converged = false;
  long stationary_iterations = 0;
  double stationary_residual = 0.0;
  double cesaro_discrepancy = 0.0;
  bool peripheral_suspected = false;
  std::vector<double> lambda2_per_restart;
};

SpectralReport spectral_report(const SparseMatrix& m, const Grid& grid, const StationaryResult& stationary,
                               const SubdominantOptions& options = {});

/// Centres and densities, one CSV row per box.
void write_density_csv(std::ostream& os, const DensityGrid& d);

}  // namespace gapkit
