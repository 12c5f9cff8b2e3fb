#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "gapkit/model.hpp"
#include "gapkit/rng.hpp"

namespace testing {

using gapkit::ModelSpec;
using gapkit::PerturbationSpec;

inline ModelSpec make_spec(int k, const std::string& phi0, double sigma, PerturbationSpec law, double L = 1.0,
                           double beta = 0.5) {
  ModelSpec s;
  s.k = k;
  s.L = L;
  s.beta = beta;
  s.phi0 = gapkit::expr::Expression::parse(phi0, k);
  s.perturbation = law;
  s.C1 = 1.1;
  s.C2 = 1.1;
  s.sigma = sigma;
  return s;
}

/// k=2, 200 x1 + sin x2, sigma 150, Gaussian(0, 0.25)
inline ModelSpec reference_spec() {
  return make_spec(2, "200*x1 + sin(x2)", 150.0, PerturbationSpec::gaussian(0.0, 0.25));
}

/// Full-branch linear model; every P_theta preserves the uniform density.
inline ModelSpec linear_spec(PerturbationSpec law = PerturbationSpec::gaussian(0.0, 0.25)) {
  return make_spec(2, "200*x1", 150.0, law);
}

/// 200 x1 + 30 sin x1 + sin x2: same conditions, nonuniform invariant density.
inline ModelSpec nonuniform_spec() {
  return make_spec(2, "200*x1 + 30*sin(x1) + sin(x2)", 150.0, PerturbationSpec::gaussian(0.0, 0.25));
}

/// k=1 doubling map x -> 2x mod [-1, 1), no noise.
inline ModelSpec doubling_spec() { return make_spec(1, "2*x1", 2.0, PerturbationSpec::point(0.0)); }

/// Uniform doubles from a counter stream, for generators in property tests.
class Draw {
 public:
  explicit Draw(std::uint64_t seed, std::uint64_t stream = 99) : rng_(seed, stream) {}
  double uniform() { return rng_.uniform(); }
  double uniform(double lo, double hi) { return lo + (hi - lo) * rng_.uniform(); }
  int integer(int lo, int hi) { return lo + static_cast<int>(rng_.uniform() * (hi - lo + 1)) % (hi - lo + 1); }

 private:
  gapkit::RngStream rng_;
};

}  // namespace testing
