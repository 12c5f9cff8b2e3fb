#pragma once

#include <span>
#include <string>
#include <utility>
#include <vector>

#include "gapkit/expr.hpp"

namespace gapkit {

/// Law of the additive perturbation theta.
struct PerturbationSpec {
  enum class Law { Gaussian, Uniform, Point };
  Law law = Law::Gaussian;
  double mean = 0.0;        // Gaussian
  double stddev = 1.0;      // Gaussian
  double truncation = 8.0;  // Gaussian support is mean +- truncation * stddev
  double lo = 0.0, hi = 0.0;  // Uniform
  double value = 0.0;         // Point: theta is fixed (test mode)

  static PerturbationSpec gaussian(double mean, double stddev, double truncation = 8.0);
  static PerturbationSpec uniform(double lo, double hi);
  static PerturbationSpec point(double value);

  void validate() const;
  std::pair<double, double> support() const;
  /// Density renormalized on the support. Not defined for Point.
  double density(double theta) const;
  /// Inverse CDF on (0, 1).
  double quantile(double u) const;
  std::string name() const;
};

struct ModelSpec {
  int k = 2;
  double L = 1.0;
  double beta = 0.5;
  expr::Expression phi0;
  PerturbationSpec perturbation;
  double C1 = 1.1;
  double C2 = 1.1;
  double sigma = 150.0;

  /// Throws std::invalid_argument naming the first bad field.
  void validate() const;
};

struct ConditionMargin {
  std::string name;
  double margin;  // >= 0 means satisfied
};

struct GeometryReport {
  double gamma = 0.0;
  double Y = 0.0;
  double sigma_threshold = 0.0;
  std::vector<double> omega_half_widths;     // gamma^(j-1) L
  expr::DerivativeBounds bounds_beta;        // on [-L-beta, L+beta]^k
  expr::DerivativeBounds bounds_unit;        // on [-L, L]^k
  std::vector<ConditionMargin> margins;
  bool ok = false;
  double M1_phi0 = 0.0;  // max |grad phi0| on [-L, L]^k
  double M_Gamma = 0.0;  // gamma^-(k-1)
  double eps0 = 0.0;     // boundary-separation cap, lowered later by the Lasota-Yorke tuning
  long N_bound = 0;
  int orientation = 1;   // sign of d_1 phi0
};

/// Volume of the unit ball in R^n; n = 0 gives 1.
double unit_ball_volume(int n);
/// eta_0(sigma, Y) = 1/sqrt(sigma) + 4 Y V_{k-1} / (V_k (sqrt(sigma) - 1)).
double eta0(double sigma, double Y, int k);
/// The sigma where eta0 crosses 1, by bisection to 1e-12 relative.
double crossing_threshold(double Y, int k);

/// Default derivative-sampling resolution per axis for order k.
int default_sample_resolution(int k);

GeometryReport derive_geometry(const ModelSpec& spec, int resolution = 0);

/// (j, r) with r = v - 2jL in [-L, L). When v is within rounding of an odd
/// multiple of L, r is -L.
std::pair<long, double> reduce_branch(double v, double L);
/// j with v - 2jL in [-L, L).
long branch_index(double v, double L);
/// The r of reduce_branch.
double reduce_mod(double v, double L);

/// The embedded map T_theta on Omega together with its unreduced extension S.
class PiecewiseMap {
 public:
  PiecewiseMap(ModelSpec spec, GeometryReport geometry);

  const ModelSpec& spec() const { return spec_; }
  const GeometryReport& geometry() const { return geometry_; }
  int k() const { return spec_.k; }
  double L() const { return spec_.L; }
  double gamma() const { return geometry_.gamma; }
  /// gamma^p for |p| <= k
  double gamma_pow(int p) const { return gpow_[p + spec_.k]; }
  double half_width(int axis) const { return geometry_.omega_half_widths[axis]; }

  bool in_omega(std::span<const double> u, double rel_slack = 1e-12) const;
  /// Gamma u in (-L-beta, L+beta)^k
  bool in_omega_beta(std::span<const double> u) const;

  void to_x(std::span<const double> u, std::span<double> x) const;
  void to_u(std::span<const double> x, std::span<double> u) const;

  /// Throws std::domain_error when u is outside Omega.
  void apply_T(std::span<const double> u, double theta, std::span<double> out, long* branch = nullptr,
               bool* boundary_hit = nullptr) const;
  std::vector<double> apply_T(std::span<const double> u, double theta) const;
  /// Smooth extension without the branch reduction.
  void apply_S(std::span<const double> u, std::span<double> out) const;
  std::vector<double> apply_S(std::span<const double> u) const;

  /// Scalar update phi_theta(x) = reduce(phi0(x) + theta).
  double phi(std::span<const double> x, double theta) const;

 private:
  ModelSpec spec_;
  GeometryReport geometry_;
  std::vector<double> gpow_;
};

struct ExpansionDiagnostics {
  double v1_sq = 0.0;
  double v_norm_sq = 0.0;
  double gamma_m2 = 0.0;
  double lambda_minus = 0.0;
  double lambda_plus = 0.0;
  double margin = 0.0;  // lambda_minus - sigma
};

/// Eigenvalues of DS^T DS at the point u = Gamma^-1 x, from the closed form.
ExpansionDiagnostics expansion_eigenvalues(const PiecewiseMap& map, std::span<const double> x);

struct BoundaryPoint {
  long j;                 // boundary between branches j-1 and j
  std::vector<double> u;  // in Omega
};

struct BoundarySeparation {
  double min_distance = 0.0;  // +inf when fewer than two boundaries are present
  double bound = 0.0;         // 2L / (M1 * M_Gamma)
  std::vector<BoundaryPoint> points;
};

/// Traces the branch boundaries over a grid of the trailing coordinates.
BoundarySeparation boundary_separation(const PiecewiseMap& map, double theta, int per_axis = 33);

}  // namespace gapkit
