#include "gapkit/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <optional>
#include <stdexcept>

#include "gapkit/model.hpp"
#include "gapkit/stats.hpp"
#include "gapkit/transfer.hpp"
#include "gapkit/ulam.hpp"

namespace gapkit {

using nlohmann::json;

namespace {

constexpr double kStatTolerance = 0.05;

json finite_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

double law_centre(const PerturbationSpec& p) {
  switch (p.law) {
    case PerturbationSpec::Law::Gaussian: return p.mean;
    case PerturbationSpec::Law::Uniform: return 0.5 * (p.lo + p.hi);
    case PerturbationSpec::Law::Point: return p.value;
  }
  return 0.0;
}

std::string sampler_name(SkewSampler s) { return s == SkewSampler::ScrambledSobol ? "sobol" : "iid"; }

/// Stages shared by the commands, computed on first use.
class Session {
 public:
  explicit Session(const RunConfig& cfg) : cfg_(cfg) {}

  const RunConfig& cfg() const { return cfg_; }

  const GeometryReport& geometry() {
    if (!geometry_) geometry_ = derive_geometry(cfg_.model, cfg_.sample_resolution);
    return *geometry_;
  }
  const PiecewiseMap& map() {
    if (!map_) map_.emplace(cfg_.model, geometry());
    return *map_;
  }
  /// nullopt when no eps0 gives eta < 1; the reason is kept in ly_error().
  const std::optional<LYConstants>& ly() {
    if (!ly_done_) {
      ly_done_ = true;
      try {
        ly_ = lasota_yorke_constants(map(), geometry().eps0, cfg_.sample_resolution);
      } catch (const std::runtime_error& e) {
        ly_error_ = e.what();
      }
    }
    return ly_;
  }
  const std::string& ly_error() const { return ly_error_; }
  const ThetaQuadrature& quad() {
    if (!quad_) quad_ = ThetaQuadrature::build(cfg_.model.perturbation, cfg_.quad_order);
    return *quad_;
  }
  const Grid& grid() {
    if (!grid_) grid_ = build_grid(geometry(), cfg_.grid);
    return *grid_;
  }
  const SparseMatrix& matrix() {
    if (!matrix_) {
      UlamOptions opt = cfg_.ulam;
      opt.seed = cfg_.seed;
      matrix_ = assemble_ulam(map(), grid(), quad(), opt);
    }
    return *matrix_;
  }
  const StationaryResult& stationary() {
    if (!stationary_) stationary_ = stationary_density(matrix(), grid());
    return *stationary_;
  }
  const SpectralReport& spectral() {
    if (!spectral_) spectral_ = spectral_report(matrix(), grid(), stationary());
    return *spectral_;
  }
  const Trajectory& trajectory() {
    if (!trajectory_) trajectory_ = simulate_process(map(), cfg_.x0, cfg_.steps, cfg_.seed);
    return *trajectory_;
  }
  std::vector<Marginal> marginals() {
    std::vector<Marginal> out;
    for (int j = 0; j < cfg_.model.k; ++j) {
      out.push_back(marginal_density(stationary().density, j, geometry().gamma, cfg_.model.L));
    }
    return out;
  }

 private:
  const RunConfig& cfg_;
  std::optional<GeometryReport> geometry_;
  std::optional<PiecewiseMap> map_;
  bool ly_done_ = false;
  std::optional<LYConstants> ly_;
  std::string ly_error_;
  std::optional<ThetaQuadrature> quad_;
  std::optional<Grid> grid_;
  std::optional<SparseMatrix> matrix_;
  std::optional<StationaryResult> stationary_;
  std::optional<SpectralReport> spectral_;
  std::optional<Trajectory> trajectory_;
};

/// Writes artifacts under the output directory, each opened by a provenance comment.
class ArtifactWriter {
 public:
  ArtifactWriter(const RunConfig& cfg, const std::string& command) : dir_(cfg.out_dir) {
    std::filesystem::create_directories(dir_);
    provenance_ = "# gapkit " + command + " seed=" + std::to_string(cfg.seed) + " config=" + config_json(cfg).dump();
  }

  template <class Body>
  void write(const std::string& name, Body&& body) {
    std::ofstream os(dir_ / name);
    if (!os) throw std::runtime_error("cannot write " + (dir_ / name).string());
    os << provenance_ << "\n";
    body(os);
    if (!os) throw std::runtime_error("write failed for " + (dir_ / name).string());
    files_.push_back(name);
  }

  const std::vector<std::string>& files() const { return files_; }
  const std::filesystem::path& dir() const { return dir_; }

 private:
  std::filesystem::path dir_;
  std::string provenance_;
  std::vector<std::string> files_;
};

// ---------------------------------------------------------------------------
// JSON views of module results

json bounds_json(const expr::DerivativeBounds& b) {
  return {{"lo", b.lo},
          {"hi", b.hi},
          {"resolution", b.resolution},
          {"dsq_min", b.dsq_min},
          {"dsq_max", b.dsq_max},
          {"grad_norm_max", b.grad_norm_max},
          {"hessian_norm_max", b.hessian_norm_max},
          {"grad_d1_norm_max", b.grad_d1_norm_max},
          {"phi_min", b.phi_min},
          {"phi_max", b.phi_max},
          {"second_derivative_method", b.second_derivative_method}};
}

json geometry_json(const GeometryReport& g) {
  json margins = json::array();
  json failed = json::array();
  for (const auto& m : g.margins) {
    const bool strict = m.name == "sigma_threshold";
    const bool sat = strict ? m.margin > 0.0 : m.margin >= 0.0;
    margins.push_back({{"name", m.name}, {"margin", m.margin}, {"satisfied", sat}});
    if (!sat) failed.push_back(m.name);
  }
  return {{"ok", g.ok},
          {"gamma", g.gamma},
          {"Y", g.Y},
          {"sigma_threshold", g.sigma_threshold},
          {"omega_half_widths", g.omega_half_widths},
          {"margins", margins},
          {"failed", failed},
          {"M1_phi0", g.M1_phi0},
          {"M_Gamma", g.M_Gamma},
          {"eps0_cap", g.eps0},
          {"N_bound", g.N_bound},
          {"orientation", g.orientation},
          {"bounds_beta", bounds_json(g.bounds_beta)},
          {"bounds_unit", bounds_json(g.bounds_unit)},
          {"notes",
           {"derivative suprema and infima are sampled on a closed grid; they bound the true extrema from inside",
            "eps0 omits the separation constraint between S(Omega_beta/3) and the complement of S(Omega_2beta/3)"}}};
}

json ly_json(Session& s) {
  const auto& ly = s.ly();
  if (!ly) return {{"attained", false}, {"message", s.ly_error()}};
  return {{"attained", true},
          {"eps0", ly->eps0},
          {"eps0_cap", ly->eps0_cap},
          {"eps0_adjusted", ly->adjusted},
          {"K", ly->K},
          {"M", ly->M},
          {"eta_bar", ly->eta_bar},
          {"eta", ly->eta},
          {"D", ly->D},
          {"eta_limit", ly->eta_limit},
          {"sup_d1_phi0", ly->sup_d1},
          {"sup_grad_d1_phi0", ly->sup_grad_d1},
          {"sup_DS_inverse", ly->sup_ds_inverse},
          {"sup_chart_first", ly->sup_chart_first},
          {"sup_chart_second", ly->sup_chart_second},
          {"note", "K and M come from sampled suprema, which are lower bounds of the true suprema"}};
}

json boundaries_json(const BoundarySeparation& b, double theta) {
  const bool vacuous = !std::isfinite(b.min_distance);
  json j = {{"theta", theta},
            {"points", b.points.size()},
            {"vacuous", vacuous},
            {"min_distance", finite_or_null(b.min_distance)},
            {"bound", b.bound}};
  return j;
}

void write_boundaries(std::ostream& os, const BoundarySeparation& b, int k) {
  os << "j";
  for (int i = 0; i < k; ++i) os << ",u" << (i + 1);
  os << "\n";
  std::vector<const BoundaryPoint*> pts;
  for (const auto& p : b.points) pts.push_back(&p);
  std::stable_sort(pts.begin(), pts.end(), [](auto* a, auto* c) { return a->j < c->j; });
  char buf[40];
  for (const auto* p : pts) {
    os << p->j;
    for (double v : p->u) {
      std::snprintf(buf, sizeof buf, ",%.17g", v);
      os << buf;
    }
    os << "\n";
  }
}

json spectral_json(const SpectralReport& r) {
  return {{"grid", r.grid},
          {"boxes", r.boxes},
          {"nnz", r.nnz},
          {"leading_eigenvalue", r.leading},
          {"lambda2", r.lambda2},
          {"gap", r.gap},
          {"gap_found", !r.peripheral_suspected},
          {"lambda2_per_restart", r.lambda2_per_restart},
          {"stationary_converged", r.stationary_converged},
          {"stationary_iterations", r.stationary_iterations},
          {"stationary_residual", r.stationary_residual},
          {"cesaro_discrepancy", r.cesaro_discrepancy}};
}

double max_row_drift(const SparseMatrix& m) {
  double d = 0.0;
  for (std::size_t i = 0; i < m.size(); ++i) d = std::max(d, std::abs(m.row_sum(i) - 1.0));
  return d;
}

json finish(const std::string& command, const RunConfig& cfg, json body, const json& checks, bool& ok) {
  ok = true;
  for (const auto& [name, v] : checks.items()) ok = ok && v.get<bool>();
  json doc = {{"command", command}, {"status", ok ? "ok" : "invalid"}, {"ok", ok},
              {"seed", cfg.seed},   {"config", config_json(cfg)},     {"checks", checks}};
  for (auto& [key, v] : body.items()) doc[key] = v;
  doc["generated_at"] = utc_timestamp();
  return doc;
}

// ---------------------------------------------------------------------------
// Commands. Each fills `body` and `checks`.

void cmd_check(Session& s, ArtifactWriter& out, json& body, json& checks) {
  const auto& g = s.geometry();
  body["geometry"] = geometry_json(g);
  body["lasota_yorke"] = ly_json(s);
  const double theta = law_centre(s.cfg().model.perturbation);
  auto sep = boundary_separation(s.map(), theta, s.cfg().boundary_per_axis);
  body["boundaries"] = boundaries_json(sep, theta);
  out.write("boundaries.csv", [&](std::ostream& os) { write_boundaries(os, sep, s.cfg().model.k); });

  checks["conditions"] = g.ok;
  checks["eta_below_one"] = s.ly().has_value() && s.ly()->eta < 1.0;
  checks["D_positive"] = s.ly().has_value() && s.ly()->D > 0.0;
  checks["boundary_separation"] = !std::isfinite(sep.min_distance) || sep.min_distance >= sep.bound;
}

void cmd_simulate(Session& s, ArtifactWriter& out, json& body, json& checks) {
  const auto& t = s.trajectory();
  body["simulation"] = {{"steps", t.steps()},
                        {"x0", s.cfg().x0},
                        {"max_embedding_error", t.max_embedding_error},
                        {"embedding_violations", t.embedding_violations},
                        {"boundary_hits", t.boundary_hits}};
  out.write("trajectory.csv", [&](std::ostream& os) { write_trajectory_csv(os, t); });
  checks["conditions"] = s.geometry().ok;
  checks["embedding"] = t.embedding_violations == 0;
}

void cmd_ulam(Session& s, ArtifactWriter& out, json& body, json& checks) {
  const auto& m = s.matrix();
  const auto& st = s.stationary();
  const double drift = max_row_drift(m);
  body["ulam"] = {{"grid", s.grid().counts()},
                  {"boxes", s.grid().size()},
                  {"nnz", m.nnz()},
                  {"subsamples", s.cfg().ulam.subsamples},
                  {"sampling", s.cfg().ulam.sampling == UlamOptions::Sampling::Midpoint ? "midpoint" : "montecarlo"},
                  {"theta_nodes", s.quad().nodes.size()},
                  {"max_row_sum_drift", drift},
                  {"stationary_converged", st.converged},
                  {"stationary_iterations", st.iterations},
                  {"stationary_residual", st.residual},
                  {"cesaro_discrepancy", st.cesaro_discrepancy},
                  {"density_integral", st.density.integral()}};
  out.write("matrix.txt", [&](std::ostream& os) { m.write_triplets(os); });
  out.write("density.csv", [&](std::ostream& os) { write_density_csv(os, st.density); });
  checks["conditions"] = s.geometry().ok;
  checks["row_stochastic"] = drift <= 1e-12;
  checks["stationary_converged"] = st.converged;
}

void cmd_spectrum(Session& s, ArtifactWriter& out, json& body, json& checks) {
  const auto& r = s.spectral();
  body["spectrum"] = spectral_json(r);
  out.write("density.csv", [&](std::ostream& os) { write_density_csv(os, s.stationary().density); });
  checks["conditions"] = s.geometry().ok;
  checks["stationary_converged"] = r.stationary_converged;
  checks["leading_eigenvalue"] = std::abs(r.leading - 1.0) <= 1e-8;
}

json marginal_table(Session& s, ArtifactWriter& out, json& checks) {
  auto ms = s.marginals();
  const int k = s.cfg().model.k;
  json integrals = json::array();
  bool normalized = true;
  for (const auto& m : ms) {
    integrals.push_back(m.integral());
    normalized = normalized && std::abs(m.integral() - 1.0) <= 1e-8;
    out.write("marginal_x" + std::to_string(m.axis + 1) + ".csv", [&](std::ostream& os) { write_marginal_csv(os, m); });
  }
  json pairs = json::array();
  double worst = 0.0;
  for (int a = 0; a < k; ++a) {
    for (int b = a + 1; b < k; ++b) {
      const double d = marginal_l1(ms[a], ms[b]);
      worst = std::max(worst, d);
      pairs.push_back({{"axes", {a + 1, b + 1}}, {"l1", d}});
    }
  }
  checks["marginals_normalized"] = normalized;
  checks["marginals_agree"] = worst <= kStatTolerance;
  return {{"integrals", integrals}, {"pairwise_l1", pairs}, {"max_pairwise_l1", worst}};
}

void cmd_marginals(Session& s, ArtifactWriter& out, json& body, json& checks) {
  checks["conditions"] = s.geometry().ok;
  checks["stationary_converged"] = s.stationary().converged;
  body["marginals"] = marginal_table(s, out, checks);
}

json decay_table(Session& s, ArtifactWriter& out, json& checks) {
  const int k = s.cfg().model.k;
  const auto& h = s.stationary().density;
  const double lambda2 = s.spectral().lambda2;
  json fits = json::array();
  std::vector<DecayResult> results;
  bool within = true;
  for (const auto& [fs, hs] : s.cfg().decay_pairs) {
    auto fe = expr::Expression::parse(fs, k);
    auto he = expr::Expression::parse(hs, k);
    Observable f = [&fe](std::span<const double> u) { return fe.value(u); };
    Observable g = [&he](std::span<const double> u) { return he.value(u); };
    auto r = correlation_decay(s.matrix(), h, f, g, s.cfg().decay_n_max);
    if (r.fitted) within = within && r.Lambda <= lambda2 + kStatTolerance;
    fits.push_back({{"f", fs},
                    {"h", hs},
                    {"fitted", r.fitted},
                    {"Lambda", r.fitted ? json(r.Lambda) : json(nullptr)},
                    {"points_used", r.points_used},
                    {"note", r.note},
                    {"covariances", r.covariances}});
    results.push_back(std::move(r));
  }
  out.write("decay.csv", [&](std::ostream& os) {
    os << "n";
    for (std::size_t p = 0; p < results.size(); ++p) os << ",cov" << (p + 1);
    os << "\n";
    char buf[40];
    for (int n = 0; n <= s.cfg().decay_n_max; ++n) {
      os << n;
      for (const auto& r : results) {
        std::snprintf(buf, sizeof buf, ",%.17g", r.covariances[n]);
        os << buf;
      }
      os << "\n";
    }
  });
  checks["decay_within_gap"] = within;
  return {{"lambda2", lambda2}, {"n_max", s.cfg().decay_n_max}, {"pairs", fits}};
}

void cmd_decay(Session& s, ArtifactWriter& out, json& body, json& checks) {
  checks["conditions"] = s.geometry().ok;
  checks["stationary_converged"] = s.stationary().converged;
  body["decay"] = decay_table(s, out, checks);
}

void cmd_report(Session& s, ArtifactWriter& out, json& body, json& checks) {
  cmd_check(s, out, body, checks);

  const auto& m = s.matrix();
  const double drift = max_row_drift(m);
  checks["row_stochastic"] = drift <= 1e-12;
  body["spectrum"] = spectral_json(s.spectral());
  body["spectrum"]["max_row_sum_drift"] = drift;
  checks["stationary_converged"] = s.spectral().stationary_converged;
  checks["leading_eigenvalue"] = std::abs(s.spectral().leading - 1.0) <= 1e-8;
  out.write("density.csv", [&](std::ostream& os) { write_density_csv(os, s.stationary().density); });

  body["marginals"] = marginal_table(s, out, checks);
  body["decay"] = decay_table(s, out, checks);

  const auto& t = s.trajectory();
  checks["embedding"] = t.embedding_violations == 0;
  const auto ms = s.marginals();
  const std::size_t burn = s.cfg().burn_in;
  const std::size_t burn2 = std::min(2 * burn, t.x.size() / 2);
  json empirical = json::array();
  double worst = 0.0;
  for (const auto& mg : ms) {
    const double d1 = empirical_vs_stationary(t, mg, burn);
    const double d2 = empirical_vs_stationary(t, mg, burn2);
    worst = std::max(worst, d1);
    empirical.push_back({{"axis", mg.axis + 1}, {"l1", d1}, {"l1_longer_burn_in", d2}});
  }
  body["simulation"] = {{"steps", t.steps()},
                        {"x0", s.cfg().x0},
                        {"burn_in", burn},
                        {"burn_in_alt", burn2},
                        {"max_embedding_error", t.max_embedding_error},
                        {"embedding_violations", t.embedding_violations},
                        {"boundary_hits", t.boundary_hits},
                        {"empirical_vs_marginal", empirical}};
  checks["empirical_marginal"] = worst <= kStatTolerance;
  out.write("histogram.csv", [&](std::ostream& os) {
    const auto& mg = ms.front();
    Marginal hist = mg;
    std::fill(hist.values.begin(), hist.values.end(), 0.0);
    const std::size_t n = t.x.size() - burn;
    for (std::size_t i = burn; i < t.x.size(); ++i) {
      double c = std::floor((t.x[i] + mg.L) / mg.cell());
      std::size_t idx = c < 0 ? 0 : std::min(hist.values.size() - 1, static_cast<std::size_t>(c));
      hist.values[idx] += 1.0;
    }
    for (double& v : hist.values) v /= static_cast<double>(n) * mg.cell();
    write_marginal_csv(os, hist);
  });

  auto skew = skew_product_check(s.map(), s.stationary().density, s.cfg().skew_samples, s.cfg().seed,
                                 s.cfg().skew_sampler);
  body["skew_product"] = {{"samples", skew.samples}, {"sampler", skew.sampler}, {"l1", skew.l1}};
  checks["skew_product"] = skew.l1 <= kStatTolerance;
}

}  // namespace

const std::vector<std::string>& command_names() {
  static const std::vector<std::string> names{"check", "simulate", "ulam", "spectrum", "marginals", "decay", "report"};
  return names;
}

std::string utc_timestamp() {
  std::time_t now = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

json config_json(const RunConfig& cfg) {
  const auto& m = cfg.model;
  json pert = {{"law", m.perturbation.name()}};
  switch (m.perturbation.law) {
    case PerturbationSpec::Law::Gaussian:
      pert["mean"] = m.perturbation.mean;
      pert["std"] = m.perturbation.stddev;
      pert["truncation"] = m.perturbation.truncation;
      break;
    case PerturbationSpec::Law::Uniform:
      pert["a"] = m.perturbation.lo;
      pert["b"] = m.perturbation.hi;
      break;
    case PerturbationSpec::Law::Point: pert["value"] = m.perturbation.value; break;
  }
  json pairs = json::array();
  for (const auto& [f, h] : cfg.decay_pairs) pairs.push_back({f, h});
  return {{"k", m.k},
          {"L", m.L},
          {"beta", m.beta},
          {"phi0", m.phi0.source()},
          {"sigma", m.sigma},
          {"C1", m.C1},
          {"C2", m.C2},
          {"perturbation", pert},
          {"numerics",
           {{"sample_resolution", cfg.sample_resolution > 0 ? cfg.sample_resolution : default_sample_resolution(m.k)},
            {"quad_order", cfg.quad_order},
            {"grid", cfg.grid},
            {"subsamples", cfg.ulam.subsamples},
            {"sampling", cfg.ulam.sampling == UlamOptions::Sampling::Midpoint ? "midpoint" : "montecarlo"},
            {"mc_samples", cfg.ulam.mc_samples}}},
          {"simulation",
           {{"steps", cfg.steps},
            {"burn_in", cfg.burn_in},
            {"x0", cfg.x0},
            {"seed", cfg.seed},
            {"skew_samples", cfg.skew_samples},
            {"skew_sampler", sampler_name(cfg.skew_sampler)}}},
          {"decay", {{"n_max", cfg.decay_n_max}, {"pairs", pairs}, {"boundary_per_axis", cfg.boundary_per_axis}}},
          {"output", {{"dir", cfg.out_dir}}}};
}

json error_json(const std::string& command, const std::string& kind, const std::string& message) {
  return {{"command", command},
          {"status", "error"},
          {"kind", kind},
          {"message", message},
          {"generated_at", utc_timestamp()}};
}

json mask_timestamp(json doc) {
  if (doc.is_object()) doc.erase("generated_at");
  return doc;
}

CommandResult run_command(const std::string& command, const RunConfig& cfg) {
  using Runner = void (*)(Session&, ArtifactWriter&, json&, json&);
  Runner run = nullptr;
  if (command == "check") run = cmd_check;
  if (command == "simulate") run = cmd_simulate;
  if (command == "ulam") run = cmd_ulam;
  if (command == "spectrum") run = cmd_spectrum;
  if (command == "marginals") run = cmd_marginals;
  if (command == "decay") run = cmd_decay;
  if (command == "report") run = cmd_report;
  if (!run) throw std::invalid_argument("unknown command '" + command + "'");

  Session session(cfg);
  ArtifactWriter out(cfg, command);
  json body = json::object(), checks = json::object();
  run(session, out, body, checks);
  body["artifacts"] = out.files();

  CommandResult r;
  r.doc = finish(command, cfg, std::move(body), checks, r.ok);
  std::ofstream os(out.dir() / (command + ".json"));
  os << r.doc.dump(2) << "\n";
  if (!os) throw std::runtime_error("cannot write " + (out.dir() / (command + ".json")).string());
  return r;
}

}  // namespace gapkit
