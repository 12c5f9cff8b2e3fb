#pragma once

#include <cstdint>
#include <ostream>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "gapkit/model.hpp"
#include "gapkit/transfer.hpp"
#include "gapkit/ulam.hpp"

namespace gapkit {

/// Draw n of the perturbation law, a pure function of (seed, n).
double draw_theta(const PerturbationSpec& law, std::uint64_t seed, std::uint64_t n);

struct Trajectory {
  int k = 0;
  std::uint64_t seed = 0;
  std::vector<double> theta;  // theta_0 .. theta_{N-1}
  std::vector<double> x;      // X_0 .. X_{N+k-1}; the first k are the initial state
  double max_embedding_error = 0.0;  // max |Y_{n+1} - T_theta_n(Y_n)|
  long embedding_violations = 0;     // steps where that error exceeded 1e-10
  long boundary_hits = 0;            // phi0 + theta within 1e-14 of an odd multiple of L

  std::size_t steps() const { return theta.size(); }
  /// Y_n = (X_n, gamma X_{n+1}, ..., gamma^{k-1} X_{n+k-1})
  std::vector<double> embedded(std::size_t n, double gamma) const;
};

/// X_{n+1} = phi_theta_n(X_{n-k+1}, ..., X_n) from x0 = (X_0, ..., X_{k-1}).
Trajectory simulate_process(const PiecewiseMap& map, std::span<const double> x0, std::size_t n_steps,
                            std::uint64_t seed);

/// n, theta_n, X_{n+k}: one row per step.
void write_trajectory_csv(std::ostream& os, const Trajectory& t);

/// Density of one coordinate of the process, piecewise constant on [-L, L].
struct Marginal {
  int axis = 0;
  double L = 1.0;
  std::vector<double> values;
  double cell() const { return 2.0 * L / static_cast<double>(values.size()); }
  double integral() const;
};

/// t -> gamma^j * integral of h*(..., gamma^j t, ...) over the other coordinates (axis j, 0-based).
Marginal marginal_density(const DensityGrid& h, int axis, double gamma, double L);
/// L1 distance between two marginals on a common refinement.
double marginal_l1(const Marginal& a, const Marginal& b);
/// L1 distance between the histogram of `samples` on the marginal's cells and the marginal.
double histogram_l1(std::span<const double> samples, const Marginal& m);
/// Histogram L1 of X_n, n >= burn_in, against the marginal.
double empirical_vs_stationary(const Trajectory& t, const Marginal& m, std::size_t burn_in);
/// Inverse-CDF sampling from a marginal, uniform within cells.
std::vector<double> sample_from_marginal(const Marginal& m, std::size_t n, std::uint64_t seed);

void write_marginal_csv(std::ostream& os, const Marginal& m);

struct SkewCheck {
  double l1 = 0.0;
  std::size_t samples = 0;
  std::string sampler;
};

/// Iid: independent draws. ScrambledSobol: one Owen-scrambled Sobol' sequence
/// over (box, position, theta).
enum class SkewSampler { Iid, ScrambledSobol };

/// Draw x ~ h*, theta ~ law, push forward once, histogram on h*'s grid.
SkewCheck skew_product_check(const PiecewiseMap& map, const DensityGrid& h, std::size_t samples, std::uint64_t seed,
                             SkewSampler sampler = SkewSampler::ScrambledSobol);

struct DecayResult {
  std::vector<double> covariances;  // n = 0 .. n_max
  double Lambda = 0.0;              // fitted per-step decay factor
  bool fitted = false;
  int points_used = 0;
  std::string note;
};

/// Cov(f o T^n, h) under h* computed from powers of the Ulam matrix.
DecayResult correlation_decay(const SparseMatrix& m, const DensityGrid& h_star, const Observable& f,
                              const Observable& h, int n_max);

struct SeminormEstimate {
  double estimate = 0.0;  // sup over the eps list
  std::vector<std::pair<double, double>> table;  // (eps, eps^-1 * integral of osc)
  double resolution_error = 0.0;  // spread of the table
};

/// eps^-1 * integral over R^k of osc(f, B_eps(x)) on the grid, f = 0 off the grid.
/// Each eps must be at least two box diameters.
SeminormEstimate osc_seminorm(const DensityGrid& f, std::span<const double> eps_list);

}  // namespace gapkit
