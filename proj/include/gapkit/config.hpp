#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "gapkit/model.hpp"
#include "gapkit/stats.hpp"
#include "gapkit/ulam.hpp"

namespace gapkit {

/// Bad or missing configuration. `line` is 0 when not tied to a source line.
class ConfigError : public std::runtime_error {
 public:
  ConfigError(const std::string& what, long line = 0)
      : std::runtime_error(line > 0 ? what + " (line " + std::to_string(line) + ")" : what), line_(line) {}
  long line() const { return line_; }

 private:
  long line_;
};

struct RunConfig {
  ModelSpec model;

  // numerics
  int sample_resolution = 0;  // 0: default_sample_resolution(k)
  int quad_order = 4;
  std::vector<int> grid;      // boxes per axis
  UlamOptions ulam;

  // simulation and statistics
  std::size_t steps = 1000000;
  std::size_t burn_in = 10000;
  std::vector<double> x0;
  std::uint64_t seed = 1;
  std::size_t skew_samples = 1000000;
  SkewSampler skew_sampler = SkewSampler::ScrambledSobol;
  int decay_n_max = 30;
  /// observables on Omega in u-coordinates, written as expressions in x1..xk
  std::vector<std::pair<std::string, std::string>> decay_pairs;
  int boundary_per_axis = 33;

  std::string out_dir = "out";
};

/// Parse TOML text. Unknown keys are rejected; omitted optional keys take the
/// defaults documented in the README.
RunConfig parse_config(std::string_view text, const std::string& source_name = "<config>");
RunConfig load_config(const std::string& path);

/// Default decay observables for a model: cos(pi u1 / L) and
/// sin(pi u1 / L) cos(pi u2 / (gamma L)), each paired with itself.
std::vector<std::pair<std::string, std::string>> default_decay_pairs(int k, double L, double gamma);

}  // namespace gapkit
