#include "gapkit/config.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include "toml.hpp"

namespace gapkit {

namespace {

long line_of(const toml::node& n) { return static_cast<long>(n.source().begin.line); }

void reject_unknown(const toml::table& t, const std::set<std::string>& allowed, const std::string& where) {
  for (const auto& [key, node] : t) {
    if (!allowed.count(std::string(key.str()))) {
      throw ConfigError("unknown key '" + std::string(key.str()) + "' in " + where, line_of(node));
    }
  }
}

double get_number(const toml::table& t, const char* key, const std::string& where) {
  const toml::node* n = t.get(key);
  if (!n) throw ConfigError(std::string(key) + " required in " + where);
  if (auto v = n->value<double>()) return *v;
  throw ConfigError(std::string(key) + " must be a number", line_of(*n));
}

double get_number_or(const toml::table& t, const char* key, double fallback) {
  const toml::node* n = t.get(key);
  if (!n) return fallback;
  if (auto v = n->value<double>()) return *v;
  throw ConfigError(std::string(key) + " must be a number", line_of(*n));
}

std::int64_t get_int_or(const toml::table& t, const char* key, std::int64_t fallback) {
  const toml::node* n = t.get(key);
  if (!n) return fallback;
  if (auto v = n->as_integer()) return v->get();
  throw ConfigError(std::string(key) + " must be an integer", line_of(*n));
}

std::string get_string_or(const toml::table& t, const char* key, const std::string& fallback) {
  const toml::node* n = t.get(key);
  if (!n) return fallback;
  if (auto v = n->as_string()) return v->get();
  throw ConfigError(std::string(key) + " must be a string", line_of(*n));
}

const toml::table* get_table(const toml::table& t, const char* key) {
  const toml::node* n = t.get(key);
  if (!n) return nullptr;
  if (auto tt = n->as_table()) return tt;
  throw ConfigError(std::string(key) + " must be a table", line_of(*n));
}

template <class T>
std::vector<T> get_array(const toml::table& t, const char* key) {
  const toml::node* n = t.get(key);
  if (!n) return {};
  const toml::array* a = n->as_array();
  if (!a) throw ConfigError(std::string(key) + " must be an array", line_of(*n));
  std::vector<T> out;
  for (const auto& e : *a) {
    auto v = e.value<T>();
    if (!v) throw ConfigError(std::string(key) + " has an entry of the wrong type", line_of(e));
    out.push_back(*v);
  }
  return out;
}

std::string format_number(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

std::vector<std::pair<std::string, std::string>> default_decay_pairs(int k, double L, double gamma) {
  const std::string a = "cos(pi*x1/" + format_number(L) + ")";
  std::vector<std::pair<std::string, std::string>> pairs{{a, a}};
  if (k >= 2) {
    const std::string b =
        "sin(pi*x1/" + format_number(L) + ")*cos(pi*x2/" + format_number(gamma * L) + ")";
    pairs.emplace_back(b, b);
  }
  return pairs;
}

RunConfig parse_config(std::string_view text, const std::string& source_name) {
  toml::table root;
  try {
    root = toml::parse(text, source_name);
  } catch (const toml::parse_error& e) {
    throw ConfigError("TOML parse error: " + std::string(e.description()), static_cast<long>(e.source().begin.line));
  }
  reject_unknown(root,
                 {"k", "L", "beta", "phi0", "sigma", "C1", "C2", "perturbation", "numerics", "simulation", "decay",
                  "output"},
                 "top level");

  RunConfig c;
  ModelSpec& m = c.model;
  const toml::node* kn = root.get("k");
  if (!kn) throw ConfigError("k required");
  if (auto v = kn->as_integer()) {
    m.k = static_cast<int>(v->get());
  } else {
    throw ConfigError("k must be an integer", line_of(*kn));
  }
  if (m.k < 1 || m.k > kMaxOrder) throw ConfigError("k must be in 1.." + std::to_string(kMaxOrder), line_of(*kn));
  m.L = get_number(root, "L", "top level");
  m.beta = get_number(root, "beta", "top level");
  m.sigma = get_number(root, "sigma", "top level");
  m.C1 = get_number(root, "C1", "top level");
  m.C2 = get_number(root, "C2", "top level");
  const toml::node* pn = root.get("phi0");
  if (!pn) throw ConfigError("phi0 required");
  auto ps = pn->as_string();
  if (!ps) throw ConfigError("phi0 must be a string", line_of(*pn));
  try {
    m.phi0 = expr::Expression::parse(ps->get(), m.k);
  } catch (const expr::ParseError& e) {
    throw ConfigError(std::string("phi0: ") + e.what(), line_of(*pn));
  }

  const toml::table* pt = get_table(root, "perturbation");
  if (!pt) throw ConfigError("perturbation required");
  reject_unknown(*pt, {"law", "mean", "std", "truncation", "a", "b", "value"}, "[perturbation]");
  const std::string law = get_string_or(*pt, "law", "gaussian");
  if (law == "gaussian") {
    m.perturbation = PerturbationSpec::gaussian(get_number_or(*pt, "mean", 0.0), get_number(*pt, "std", "[perturbation]"),
                                                get_number_or(*pt, "truncation", 8.0));
  } else if (law == "uniform") {
    m.perturbation = PerturbationSpec::uniform(get_number(*pt, "a", "[perturbation]"), get_number(*pt, "b", "[perturbation]"));
  } else if (law == "point") {
    m.perturbation = PerturbationSpec::point(get_number(*pt, "value", "[perturbation]"));
  } else {
    throw ConfigError("perturbation law must be gaussian, uniform or point", line_of(*pt->get("law")));
  }

  try {
    m.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }

  const double gamma = 1.0 / std::sqrt(m.C1 * m.sigma);
  c.grid.assign(m.k, m.k <= 2 ? 64 : std::max(2, static_cast<int>(std::pow(2.0, std::floor(12.0 / m.k)))));
  c.ulam.subsamples = m.k <= 2 ? 16 : 4;
  c.x0.resize(m.k);
  for (int j = 0; j < m.k; ++j) c.x0[j] = m.L * (0.1 + 0.7 * j / std::max(1, m.k)) * (j % 2 ? -1.0 : 1.0);
  c.decay_pairs = default_decay_pairs(m.k, m.L, gamma);

  if (const toml::table* nt = get_table(root, "numerics")) {
    reject_unknown(*nt, {"sample_resolution", "quad_order", "grid", "subsamples", "sampling", "mc_samples"},
                   "[numerics]");
    c.sample_resolution = static_cast<int>(get_int_or(*nt, "sample_resolution", 0));
    if (c.sample_resolution != 0 && c.sample_resolution < 2) throw ConfigError("sample_resolution must be >= 2");
    c.quad_order = static_cast<int>(get_int_or(*nt, "quad_order", c.quad_order));
    if (c.quad_order < 1) throw ConfigError("quad_order must be positive");
    auto g = get_array<std::int64_t>(*nt, "grid");
    if (!g.empty()) {
      if (static_cast<int>(g.size()) != m.k) throw ConfigError("grid needs one count per coordinate");
      c.grid.clear();
      for (auto v : g) {
        if (v < 1) throw ConfigError("grid counts must be positive");
        c.grid.push_back(static_cast<int>(v));
      }
    }
    c.ulam.subsamples = static_cast<int>(get_int_or(*nt, "subsamples", c.ulam.subsamples));
    if (c.ulam.subsamples < 1) throw ConfigError("subsamples must be positive");
    const std::string sampling = get_string_or(*nt, "sampling", "midpoint");
    if (sampling == "midpoint") {
      c.ulam.sampling = UlamOptions::Sampling::Midpoint;
    } else if (sampling == "montecarlo") {
      c.ulam.sampling = UlamOptions::Sampling::MonteCarlo;
    } else {
      throw ConfigError("sampling must be midpoint or montecarlo");
    }
    c.ulam.mc_samples = static_cast<std::size_t>(get_int_or(*nt, "mc_samples", 4096));
  }

  if (const toml::table* st = get_table(root, "simulation")) {
    reject_unknown(*st, {"steps", "burn_in", "x0", "seed", "skew_samples", "skew_sampler"}, "[simulation]");
    auto steps = get_int_or(*st, "steps", static_cast<std::int64_t>(c.steps));
    auto burn = get_int_or(*st, "burn_in", std::min<std::int64_t>(static_cast<std::int64_t>(c.burn_in), steps / 10));
    if (steps < 1 || burn < 0) throw ConfigError("need steps >= 1 and burn_in >= 0");
    if (steps < 10 * burn) throw ConfigError("steps must be at least 10 * burn_in");
    c.steps = static_cast<std::size_t>(steps);
    c.burn_in = static_cast<std::size_t>(burn);
    auto x0 = get_array<double>(*st, "x0");
    if (!x0.empty()) {
      if (static_cast<int>(x0.size()) != m.k) throw ConfigError("x0 needs k entries");
      for (double v : x0) {
        if (!(std::abs(v) <= m.L)) throw ConfigError("x0 entries must lie in [-L, L]");
      }
      c.x0 = x0;
    }
    auto seed = get_int_or(*st, "seed", static_cast<std::int64_t>(c.seed));
    if (seed < 0) throw ConfigError("seed must be non-negative");
    c.seed = static_cast<std::uint64_t>(seed);
    auto skew = get_int_or(*st, "skew_samples", static_cast<std::int64_t>(c.skew_samples));
    if (skew < 1) throw ConfigError("skew_samples must be positive");
    c.skew_samples = static_cast<std::size_t>(skew);
    const std::string sampler = get_string_or(*st, "skew_sampler", "sobol");
    if (sampler == "sobol") {
      c.skew_sampler = SkewSampler::ScrambledSobol;
    } else if (sampler == "iid") {
      c.skew_sampler = SkewSampler::Iid;
    } else {
      throw ConfigError("skew_sampler must be sobol or iid");
    }
  }

  if (const toml::table* dt = get_table(root, "decay")) {
    reject_unknown(*dt, {"n_max", "pairs", "boundary_per_axis"}, "[decay]");
    c.decay_n_max = static_cast<int>(get_int_or(*dt, "n_max", c.decay_n_max));
    if (c.decay_n_max < 1) throw ConfigError("n_max must be positive");
    c.boundary_per_axis = static_cast<int>(get_int_or(*dt, "boundary_per_axis", c.boundary_per_axis));
    if (c.boundary_per_axis < 1) throw ConfigError("boundary_per_axis must be positive");
    if (const toml::node* pn2 = dt->get("pairs")) {
      const toml::array* a = pn2->as_array();
      if (!a) throw ConfigError("pairs must be an array of [f, h] string pairs", line_of(*pn2));
      c.decay_pairs.clear();
      for (const auto& e : *a) {
        const toml::array* pair = e.as_array();
        if (!pair || pair->size() != 2 || !(*pair)[0].is_string() || !(*pair)[1].is_string()) {
          throw ConfigError("pairs must be an array of [f, h] string pairs", line_of(e));
        }
        std::string f = *(*pair)[0].value<std::string>(), h = *(*pair)[1].value<std::string>();
        for (const auto& s : {f, h}) {
          try {
            expr::Expression::parse(s, m.k);
          } catch (const expr::ParseError& err) {
            throw ConfigError(std::string("decay observable: ") + err.what(), line_of(e));
          }
        }
        c.decay_pairs.emplace_back(f, h);
      }
    }
  }

  if (const toml::table* ot = get_table(root, "output")) {
    reject_unknown(*ot, {"dir"}, "[output]");
    c.out_dir = get_string_or(*ot, "dir", c.out_dir);
  }
  return c;
}

RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str(), path);
}

}  // namespace gapkit
