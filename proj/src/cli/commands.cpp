#include <algorithm>
#include <atomic>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <random>
#include <span>
#include <sstream>

#include "CLI11.hpp"
#include "msmsens/cli.hpp"
#include "msmsens/error.hpp"
#include "msmsens/homotopy.hpp"
#include "msmsens/inference.hpp"
#include "msmsens/oracle.hpp"
#include "msmsens/outcome_bounds.hpp"
#include "msmsens/panel.hpp"
#include "msmsens/parallel.hpp"
#include "msmsens/propensity_bounds.hpp"
#include "msmsens/subset_bounds.hpp"
#include "msmsens/synth.hpp"

namespace msmsens::cli {

namespace fs = std::filesystem;
using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

constexpr const char* kVersion = "0.1.0";

template <class T>
T get(const json& config, const std::string& pointer, T fallback) {
  const json::json_pointer p(pointer);
  return config.contains(p) ? config.at(p).get<T>() : fallback;
}

// ---- output ---------------------------------------------------------------

struct Table {
  std::vector<std::string> columns;
  // Cells are numbers or text; numbers are printed in shortest round-trip form.
  std::vector<std::vector<json>> rows;
};

std::string cell_text(const json& c) {
  if (c.is_string()) return c.get<std::string>();
  if (c.is_boolean()) return c.get<bool>() ? "true" : "false";
  if (c.is_number_integer()) return std::to_string(c.get<long long>());
  if (c.is_null()) return "nan";
  return format_number(c.get<double>());
}

json number(double x) { return std::isfinite(x) ? json(x) : json(nullptr); }

class Output {
 public:
  Output(fs::path dir, std::string format) : dir_(std::move(dir)), format_(std::move(format)) {
    std::error_code ec;
    fs::create_directories(dir_, ec);
    if (ec) fail(ErrorKind::IoError, "cannot create output directory " + dir_.string() + ": " + ec.message());
  }

  void table(const std::string& name, const Table& t) {
    if (format_ == "json") {
      json doc;
      doc["columns"] = t.columns;
      doc["rows"] = json::array();
      for (const auto& r : t.rows) doc["rows"].push_back(r);
      write(name + ".json", doc.dump(2) + "\n");
      return;
    }
    std::ostringstream s;
    for (std::size_t c = 0; c < t.columns.size(); ++c) s << (c ? "," : "") << t.columns[c];
    s << "\n";
    for (const auto& r : t.rows) {
      for (std::size_t c = 0; c < r.size(); ++c) s << (c ? "," : "") << cell_text(r[c]);
      s << "\n";
    }
    write(name + ".csv", s.str());
  }

  void text(const std::string& file, const std::string& body) { write(file, body); }
  const fs::path& dir() const { return dir_; }

 private:
  void write(const std::string& file, const std::string& body) {
    std::ofstream out(dir_ / file, std::ios::binary);
    if (!out) fail(ErrorKind::IoError, "cannot write " + (dir_ / file).string());
    out << body;
  }
  fs::path dir_;
  std::string format_;
};

Table curve_table(const BoundCurve& c) {
  Table t{{"grid_value", "lower", "upper", "ci_lower", "ci_upper"}, {}};
  for (std::size_t j = 0; j < c.size(); ++j) {
    const bool ok = c.valid.empty() || c.valid[j];
    t.rows.push_back({number(c.grid[j]), number(ok ? c.lower[j] : NAN), number(ok ? c.upper[j] : NAN),
                      number(c.ci_lower.empty() ? NAN : c.ci_lower[j]),
                      number(c.ci_upper.empty() ? NAN : c.ci_upper[j])});
  }
  return t;
}

// ---- settings -------------------------------------------------------------

struct Run {
  json config;
  std::string command;
  std::uint64_t seed = 1;
  std::size_t workers = 0;
  std::string format = "csv";
  fs::path out;
  json notes = json::object();  // method flags for the metadata sidecar
  std::shared_ptr<std::atomic<std::size_t>> grid_failures;
};

bool is_panel(const Run& r) { return get<std::string>(r.config, "/data/layout", "static") == "panel"; }

CellScope cell_scope(const std::string& s) {
  return s == "treatment-covariates" ? CellScope::TreatmentCovariates : CellScope::Treatment;
}

NuisanceRecipes recipes_of(const json& c) {
  NuisanceRecipes r;
  const auto om = get<std::string>(c, "/nuisance/outcome/method", "linear");
  r.outcome.method = om == "kernel" ? OutcomeMethod::Kernel : om == "cell-mean" ? OutcomeMethod::CellMean
                                                                                : OutcomeMethod::Linear;
  r.outcome.degree = get<int>(c, "/nuisance/outcome/degree", 1);
  r.outcome.interactions = get<bool>(c, "/nuisance/outcome/interactions", false);
  r.outcome.bandwidth = get<double>(c, "/nuisance/outcome/bandwidth", 0.0);
  r.outcome.cells = cell_scope(get<std::string>(c, "/nuisance/outcome/cells", "treatment"));
  r.propensity.method = get<std::string>(c, "/nuisance/propensity/method", "gaussian") == "discrete"
                            ? PropensityMethod::Discrete
                            : PropensityMethod::Gaussian;
  r.propensity.floor = get<double>(c, "/nuisance/propensity/floor", 1e-3);
  r.propensity.stabilized = get<bool>(c, "/nuisance/propensity/stabilized", true);
  r.propensity.max_levels = get<std::size_t>(c, "/nuisance/propensity/max_levels", 20);
  r.quantile.method = get<std::string>(c, "/nuisance/quantile/method", "pinball") == "empirical"
                          ? QuantileMethod::Empirical
                          : QuantileMethod::Pinball;
  r.quantile.degree = get<int>(c, "/nuisance/quantile/degree", 1);
  r.quantile.interactions = get<bool>(c, "/nuisance/quantile/interactions", false);
  r.quantile.cells = cell_scope(get<std::string>(c, "/nuisance/quantile/cells", "treatment"));
  return r;
}

MsmModel model_of(const json& c) {
  const auto basis = get<std::string>(c, "/model/basis", "polynomial");
  const int degree = get<int>(c, "/model/degree", 1);
  if (basis == "polynomial") return MsmModel::linear(basis::polynomial(degree));
  if (basis == "exp-polynomial") return MsmModel::exp_linear(basis::polynomial(degree));
  return MsmModel::linear({basis::intercept(), basis::cumulative(get<std::size_t>(c, "/model/lag", 0))});
}

std::string require_path(const json& c) {
  if (!c.contains(json::json_pointer("/data/path"))) throw ConfigError("/data/path", "required key is missing");
  return c.at(json::json_pointer("/data/path")).get<std::string>();
}

CsvSchema csv_schema(const json& c) {
  CsvSchema s;
  s.y = get<std::string>(c, "/data/columns/y", "y");
  s.a = get<std::string>(c, "/data/columns/a", "a");
  s.x = get<std::vector<std::string>>(c, "/data/columns/x", {});
  return s;
}

PanelCsvSchema panel_schema(const json& c) {
  PanelCsvSchema s;
  s.id = get<std::string>(c, "/data/columns/id", "id");
  s.t = get<std::string>(c, "/data/columns/t", "t");
  s.y = get<std::string>(c, "/data/columns/y", "y");
  s.a = get<std::string>(c, "/data/columns/a", "a");
  s.x = get<std::vector<std::string>>(c, "/data/columns/x", {});
  return s;
}

CrossFit cross_fit(const Dataset& data, const Run& r) {
  const auto k = get<std::size_t>(r.config, "/nuisance/folds", 2);
  const NuisanceRecipes rec = recipes_of(r.config);
  if (k <= 1) return CrossFit::in_sample(data, rec);
  return CrossFit::fit(data, split_folds(data.size(), k, r.seed), rec);
}

std::string kind_of(const json& c) { return get<std::string>(c, "/sensitivity/kind", "gamma"); }

std::vector<double> sensitivity_grid(const json& c) {
  const std::string kind = kind_of(c);
  if (c.contains(json::json_pointer("/sensitivity/grid"))) {
    auto g = c.at(json::json_pointer("/sensitivity/grid")).get<std::vector<double>>();
    if (g.empty()) throw ConfigError("/sensitivity/grid", "grid is empty");
    for (std::size_t j = 1; j < g.size(); ++j)
      if (!(g[j] > g[j - 1])) throw ConfigError("/sensitivity/grid/" + std::to_string(j), "grid must increase");
    if (kind == "gamma" && g.front() != 1.0) throw ConfigError("/sensitivity/grid/0", "gamma grid must start at 1");
    if (kind == "epsilon" && g.back() > 1.0) throw ConfigError("/sensitivity/grid", "epsilon must lie in [0, 1]");
    return g;
  }
  const double step = get<double>(c, "/sensitivity/step", kind == "gamma" ? 0.05 : 0.1);
  const double max = get<double>(c, "/sensitivity/max", kind == "gamma" ? 2.0 : 1.0);
  if (kind == "gamma") {
    if (max < 1.0) throw ConfigError("/sensitivity/max", "gamma must be >= 1");
    return gamma_grid(max, step);
  }
  if (kind == "epsilon" && max > 1.0) throw ConfigError("/sensitivity/max", "epsilon must lie in [0, 1]");
  std::vector<double> g;
  for (long k = 0;; ++k) {
    const double v = static_cast<double>(k) * step;
    if (v > max + 1e-9 * std::max(1.0, max)) break;
    g.push_back(std::min(v, max));
  }
  return g;
}

// ---- fit ------------------------------------------------------------------

int cmd_fit(Run& r, Output& out) {
  const MsmModel model = model_of(r.config);
  const double alpha = get<double>(r.config, "/inference/alpha", 0.05);
  Table t{{"estimator", "coefficient", "estimate", "std_error", "ci_lower", "ci_upper"}, {}};
  auto add = [&](const std::string& name, const BetaEstimate& b) {
    for (Index c = 0; c < b.beta.size(); ++c) {
      const double var = b.covariance(c, c);
      const auto ci = wald_ci(b.beta[c], std::max(var, 0.0), b.n, alpha);
      const auto& names = model.coefficient_names();
      t.rows.push_back({name, names.size() > static_cast<std::size_t>(c) ? names[c] : "b" + std::to_string(c),
                        number(b.beta[c]), number(std::sqrt(std::max(var, 0.0) / b.n)), number(ci.low),
                        number(ci.high)});
    }
  };
  if (is_panel(r)) {
    const Panel panel = load_panel_csv(require_path(r.config), panel_schema(r.config));
    PanelWeightOptions po{recipes_of(r.config).propensity, get<bool>(r.config, "/nuisance/propensity/pooled", true)};
    const VectorXd w = panel_weights(panel, po);
    add("ipw", panel_fit_msm(panel, model, w));
    r.notes["weights"] = "product of per-step stabilized ratios";
  } else {
    const Dataset data = load_csv(require_path(r.config), csv_schema(r.config));
    const CrossFit cf = cross_fit(data, r);
    add("ipw", fit_msm(model, MsmSample(data, cf.weights())));
    add("dr", fit_dr_msm(cf, model));
  }
  r.notes["interval"] = "wald, asymptotic";
  out.table("fit", t);
  return 0;
}

// ---- bounds ---------------------------------------------------------------

// Coordinate bounds over the sensitivity grid for one (sub)sample.
using CurveFn = std::function<BoundCurve(std::span<const std::size_t>)>;

CurveFn bounds_pipeline(Run& r) {
  const json& c = r.config;
  const std::string kind = kind_of(c);
  const std::vector<double> grid = sensitivity_grid(c);
  const MsmModel model = model_of(c);
  const auto coord = get<std::size_t>(c, "/bounds/coordinate", model.dim() > 1 ? 1 : 0);
  if (coord >= model.dim())
    throw ConfigError("/bounds/coordinate", "model has " + std::to_string(model.dim()) + " coefficients");
  const std::string fallback = kind == "gamma" ? "homotopy" : kind == "delta" ? "outcome-linear" : "subset-linear";
  const std::string method = get<std::string>(c, "/bounds/method", fallback);
  r.notes["method"] = method;
  r.notes["coordinate"] = coord;
  r.notes["rate"] = "asymptotic, rate-conditional";
  if (method == "outcome-grid")
    r.notes["grid_region"] = get<bool>(c, "/bounds/feasibility_filter", false)
                                 ? "bounding box, infeasible nodes dropped"
                                 : "bounding box of the confounding set (conservative)";

  static const std::map<std::string, std::string> kinds = {
      {"homotopy", "gamma"},         {"homotopy-f2", "gamma"},    {"lemma6", "gamma"},
      {"lemma5", "gamma"},           {"local", "gamma"},          {"coordinate-ascent", "gamma"},
      {"outcome-linear", "delta"},   {"outcome-grid", "delta"},   {"subset-linear", "epsilon"},
      {"subset-outcome", "epsilon"}, {"subset-remark", "epsilon"}};
  const auto it = kinds.find(method);
  if (it == kinds.end()) fail(ErrorKind::UsageError, "unknown bounds method '" + method + "'");
  if (it->second != kind)
    fail(ErrorKind::UsageError, "method '" + method + "' needs sensitivity kind '" + it->second + "'");

  HomotopyOptions ho;
  ho.coord = coord;
  ho.functional = method == "homotopy-f2" ? Functional::F2 : Functional::F1;
  ho.constraint = get<std::string>(c, "/bounds/constraint", "large") == "small" ? Constraint::Small : Constraint::Large;
  ho.inner_iterations = get<int>(c, "/bounds/inner_iterations", 1);
  const auto orderings = get<std::size_t>(c, "/bounds/orderings", 4);
  GridOptions go;
  go.resolution = get<int>(c, "/bounds/grid_resolution", 11);
  go.feasibility_filter = get<bool>(c, "/bounds/feasibility_filter", false);
  const double side_gamma = get<double>(c, "/sensitivity/gamma", 2.0);
  const double side_delta = get<double>(c, "/sensitivity/delta", 1.0);
  const std::uint64_t seed = r.seed;

  if (is_panel(r)) {
    const Panel panel = load_panel_csv(require_path(c), panel_schema(c));
    const PanelWeightOptions po{recipes_of(c).propensity, get<bool>(c, "/nuisance/propensity/pooled", true)};
    PanelBoundMethod pm;
    if (method == "homotopy") pm = PanelBoundMethod::HomotopyF1;
    else if (method == "lemma6") pm = PanelBoundMethod::ClosedF2;
    else if (method == "local") pm = PanelBoundMethod::Local;
    else fail(ErrorKind::UsageError, "method '" + method + "' is not available for panel data");
    r.notes["weights"] = "product of per-step stabilized ratios";
    r.notes["panel_coefficients"] = "all model coefficients solved jointly; target coordinate reported";
    return [=](std::span<const std::size_t> idx) {
      const Panel sub = panel.subset(idx);
      return panel_propensity_bounds(sub, model, panel_weights(sub, po), grid, pm, coord, ho);
    };
  }

  const Dataset data = load_csv(require_path(c), csv_schema(c));
  const json config = c;
  // Failed grid nodes across all pipeline runs; the count does not depend on scheduling.
  auto failed_nodes = std::make_shared<std::atomic<std::size_t>>(0);
  r.grid_failures = failed_nodes;
  return [=](std::span<const std::size_t> idx) {
    const Dataset sub = data.subset(idx);
    Run local;
    local.config = config;
    local.seed = seed;
    const CrossFit cf = cross_fit(sub, local);
    const MsmSample sample(sub, cf.weights());
    BoundCurve curve;
    curve.parameter = kind;
    if (method == "homotopy" || method == "homotopy-f2") {
      HomotopyOptions o = ho;
      if (o.constraint == Constraint::Small) o.thresholds = thresholds_from(cf);
      return homotopy_bounds(model, sample, grid, o).curve();
    }
    if (method == "coordinate-ascent") {
      AscentOptions ao;
      ao.coord = coord;
      ao.orderings = orderings;
      ao.seed = seed;
      return coordinate_ascent_bounds(model, sample, grid, ao).curve();
    }
    if (method == "local") return local_bounds(model, sample, grid, coord);
    for (double g : grid) {
      Interval b;
      if (method == "lemma6") b = lemma6_F2_bounds(model, sample, GammaSpec(g), coord).bounds;
      else if (method == "lemma5") b = lemma5_beta1_bounds(cf, model, GammaSpec(g), coord);
      else if (method == "outcome-linear") b = outcome_beta_bounds_linear(cf, model, DeltaSpec(g), coord);
      else if (method == "outcome-grid") {
        const GridBounds gb = outcome_nonlinear_grid_bounds(cf, model, DeltaSpec(g), coord, go);
        *failed_nodes += gb.failed;
        b = gb.bounds;
      }
      else if (method == "subset-linear")
        b = subset_linear_beta_bounds(cf, model, bound_nuisance(cf, GammaSpec(side_gamma)), EpsilonSpec(g), coord);
      else if (method == "subset-outcome")
        b = subset_outcome_beta_bounds(cf, model, EpsilonSpec(g), DeltaSpec(side_delta), coord);
      else {  // subset-remark
        HomotopyOptions o = ho;
        const auto tr = subset_independent_remark_bounds(model, sample, gamma_grid(side_gamma), EpsilonSpec(g), o);
        b = {tr.lower.back(), tr.upper.back()};
        curve.push(g, b.lower, b.upper, tr.valid_lower.back() && tr.valid_upper.back());
        continue;
      }
      curve.push(g, b.lower, b.upper);
    }
    return curve;
  };
}

std::size_t sample_size(const Run& r) {
  if (is_panel(r)) return load_panel_csv(require_path(r.config), panel_schema(r.config)).size();
  return load_csv(require_path(r.config), csv_schema(r.config)).size();
}

std::vector<std::size_t> all_units(std::size_t n) {
  std::vector<std::size_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = i;
  return idx;
}

// Pointwise HulC band: the pipeline rerun on each disjoint subsample.
void attach_hulc(BoundCurve& curve, const CurveFn& pipeline, std::size_t n, Run& r) {
  HulcSpec spec;
  spec.alpha = get<double>(r.config, "/inference/alpha", 0.05);
  spec.seed = r.seed;
  const std::size_t b = spec.subsamples();
  if (n / b < 10) fail(ErrorKind::SubsampleTooSmall, "HulC needs at least 10 units per subsample");
  const auto groups = hulc_partition(n, b, spec.seed);
  std::vector<BoundCurve> parts(b);
  parallel_for(b, r.workers, [&](std::size_t g) { parts[g] = pipeline(groups[g]); });
  std::vector<ConfidenceInterval> lo(curve.size()), hi(curve.size());
  for (std::size_t j = 0; j < curve.size(); ++j) {
    double l = INFINITY, u = -INFINITY;
    for (const auto& p : parts) {
      l = std::min(l, p.lower[j]);
      u = std::max(u, p.upper[j]);
    }
    lo[j] = {l, l, CiMethod::Hulc, 1.0 - spec.alpha};
    hi[j] = {u, u, CiMethod::Hulc, 1.0 - spec.alpha};
  }
  band_over_grid(curve, lo, hi);
  r.notes["interval"] = "hulc, " + std::to_string(b) + " subsamples, pointwise";
}

int finish_curve(const BoundCurve& curve, Output& out, const std::string& name, std::ostream& log) {
  out.table(name, curve_table(curve));
  std::size_t bad = 0;
  for (std::size_t j = 0; j < curve.size(); ++j) bad += !(curve.valid.empty() || curve.valid[j]);
  if (bad) {
    log << "warning: " << bad << " grid point(s) of " << name << " failed to solve\n";
    return 4;
  }
  return 0;
}

int cmd_bounds(Run& r, Output& out, std::ostream& log) {
  const CurveFn pipeline = bounds_pipeline(r);
  const std::size_t n = sample_size(r);
  BoundCurve curve = pipeline(all_units(n));
  const auto inf = get<std::string>(r.config, "/inference/method", "none");
  if (inf == "wald") fail(ErrorKind::UsageError, "coordinate bounds support hulc intervals only; use the curve command for wald");
  if (inf == "hulc") {
    attach_hulc(curve, pipeline, n, r);
    const auto m = r.notes["method"].get<std::string>();
    if (m.rfind("homotopy", 0) == 0 || m == "coordinate-ascent" || m == "subset-remark")
      r.notes["interval"] = r.notes["interval"].get<std::string>() + ", heuristic";
  }
  if (r.grid_failures) {
    r.notes["grid_nodes_failed"] = r.grid_failures->load();
    if (r.grid_failures->load()) log << "warning: " << r.grid_failures->load() << " grid node(s) did not converge\n";
  }
  return finish_curve(curve, out, "bounds", log);
}

// ---- curve ----------------------------------------------------------------

int cmd_curve(Run& r, Output& out, std::ostream& log) {
  const json& c = r.config;
  if (is_panel(r)) fail(ErrorKind::UsageError, "curve bounds need static data");
  const std::string kind = kind_of(c);
  const std::string method = get<std::string>(c, "/curve/method", kind == "delta" ? "outcome" : "propensity");
  if ((method == "outcome") != (kind == "delta"))
    fail(ErrorKind::UsageError, "curve method '" + method + "' does not match sensitivity kind '" + kind + "'");
  const MsmModel model = model_of(c);
  if (!model.is_linear()) fail(ErrorKind::UsageError, "curve bounds need a linear model");
  const Dataset data = load_csv(require_path(c), csv_schema(c));
  std::vector<double> points = get<std::vector<double>>(c, "/curve/points", {});
  if (points.empty()) {
    for (double tau : {0.1, 0.5, 0.9}) points.push_back(type1_quantile(data.a(), tau));
  }
  const std::vector<double> grid = sensitivity_grid(c);
  const std::uint64_t seed = r.seed;

  // Rows: grid points; per a0 the four numbers (lower, upper, var_lower, var_upper).
  auto pipeline = [&](std::span<const std::size_t> idx) {
    const Dataset sub = data.subset(idx);
    Run local;
    local.config = c;
    local.seed = seed;
    const CrossFit cf = cross_fit(sub, local);
    std::vector<std::vector<CurvePoint>> res;
    for (double g : grid) {
      if (method == "outcome") res.push_back(outcome_curve_bounds(cf, model, DeltaSpec(g), points));
      else res.push_back(linear_curve_bounds(cf, model, bound_nuisance(cf, GammaSpec(g)), points));
    }
    return res;
  };
  const auto full = pipeline(all_units(data.size()));
  const auto inf = get<std::string>(c, "/inference/method", "none");
  const double alpha = get<double>(c, "/inference/alpha", 0.05);

  std::vector<std::vector<std::vector<CurvePoint>>> parts;
  if (inf == "hulc") {
    HulcSpec spec;
    spec.alpha = alpha;
    spec.seed = r.seed;
    const std::size_t b = spec.subsamples();
    if (data.size() / b < 10) fail(ErrorKind::SubsampleTooSmall, "HulC needs at least 10 units per subsample");
    const auto groups = hulc_partition(data.size(), b, spec.seed);
    parts.resize(b);
    parallel_for(b, r.workers, [&](std::size_t g) { parts[g] = pipeline(groups[g]); });
    r.notes["interval"] = "hulc, " + std::to_string(b) + " subsamples, pointwise";
  } else if (inf == "wald") {
    r.notes["interval"] = "wald, pointwise, asymptotic";
  }
  r.notes["method"] = method;
  r.notes["rate"] = "asymptotic, rate-conditional";

  Table index{{"curve", "a0"}, {}};
  int status = 0;
  for (std::size_t p = 0; p < points.size(); ++p) {
    BoundCurve curve;
    curve.parameter = kind;
    std::vector<ConfidenceInterval> lo, hi;
    for (std::size_t j = 0; j < grid.size(); ++j) {
      const CurvePoint& cp = full[j][p];
      curve.push(grid[j], cp.lower, cp.upper);
      if (inf == "wald") {
        lo.push_back(wald_ci(cp.lower, std::max(cp.var_lower, 0.0), data.size(), alpha));
        hi.push_back(wald_ci(cp.upper, std::max(cp.var_upper, 0.0), data.size(), alpha));
      } else if (inf == "hulc") {
        double l = INFINITY, u = -INFINITY;
        for (const auto& part : parts) {
          l = std::min(l, part[j][p].lower);
          u = std::max(u, part[j][p].upper);
        }
        lo.push_back({l, l, CiMethod::Hulc, 1.0 - alpha});
        hi.push_back({u, u, CiMethod::Hulc, 1.0 - alpha});
      }
    }
    if (!lo.empty()) band_over_grid(curve, lo, hi);
    const std::string name = "curve_" + std::to_string(p);
    status = std::max(status, finish_curve(curve, out, name, log));
    index.rows.push_back({name, number(points[p])});
  }
  out.table("curves", index);
  return status;
}

// ---- simulate -------------------------------------------------------------

int cmd_simulate(Run& r, Output& out) {
  const json& c = r.config;
  if (!c.contains("simulate")) throw ConfigError("/simulate", "required key is missing");
  DgpSpec spec;
  spec.name = c.at(json::json_pointer("/simulate/dgp")).get<std::string>();
  spec.seed = r.seed;
  if (c.contains(json::json_pointer("/simulate/params")))
    for (const auto& [k, v] : c.at(json::json_pointer("/simulate/params")).items()) spec.params[k] = v.get<double>();
  const auto n = c.at(json::json_pointer("/simulate/n")).get<std::size_t>();
  std::ostringstream s;
  if (is_panel_dgp(spec.name)) {
    write_panel_csv(s, generate_panel(spec, n));
    out.text("panel.csv", s.str());
  } else {
    write_csv(s, generate(spec, n));
    out.text("data.csv", s.str());
  }
  r.notes["dgp"] = spec.name;
  return 0;
}

// ---- oracle-check ---------------------------------------------------------

int cmd_oracle_check(Run& r, Output& out, std::ostream& log) {
  const json& c = r.config;
  const auto instances = get<std::size_t>(c, "/oracle_check/instances", 20);
  const auto gammas = get<std::vector<double>>(c, "/oracle_check/gammas", {1.5, 2.0, 3.0});
  const MsmModel intercept = MsmModel::linear({basis::intercept()});
  const MsmModel line = MsmModel::linear(basis::polynomial(1));

  struct Row {
    std::string check;
    std::size_t n = 0;
    double gamma = 1.0, value = 0.0, reference = 0.0, gap = 0.0, tolerance = 0.0;
    bool pass = true;
  };
  std::vector<std::vector<Row>> rows(instances);
  parallel_for(instances, r.workers, [&](std::size_t i) {
    std::mt19937_64 rng(r.seed * 1000003ULL + i);
    std::normal_distribution<double> z;
    const double g = gammas[i % gammas.size()];
    // Closed-form weight-only bound against the knapsack LP.
    {
      const auto n = static_cast<Index>(7 + rng() % 44);
      VectorXd f(n);
      for (Index k = 0; k < n; ++k) f[k] = z(rng);
      const MsmSample s(MatrixXd::Zero(n, 1), f, VectorXd::Ones(n));
      const auto closed = lemma6_F2_bounds(intercept, s, GammaSpec(g), 0);
      const auto lp = oracle::linear_box_mean(f, g, oracle::Goal::Max);
      const double gap = std::fabs(closed.bounds.upper - lp.value);
      const double tol = (g - 1.0 / g) * f.cwiseAbs().maxCoeff() / static_cast<double>(n);
      rows[i].push_back({"lemma6-vs-lp", static_cast<std::size_t>(n), g, closed.bounds.upper, lp.value, gap, tol,
                         gap <= tol});
    }
    // Homotopy against exhaustive enumeration at tiny n; the gap is reported.
    {
      const std::size_t n = 6 + i % 3;
      const Dataset d = generate({"a1", {}, r.seed * 7919ULL + i}, n);
      const MsmSample s(d, VectorXd::Ones(static_cast<Index>(n)));
      HomotopyOptions o;
      o.coord = 1;
      const auto tr = homotopy_bounds(line, s, gamma_grid(g), o);
      MatrixXd H(static_cast<Index>(n), 2);
      H.col(0).setOnes();
      H.col(1) = d.a();
      const auto ex = oracle::f1_exhaustive(H, s.y, s.weights, g, 1, oracle::Goal::Max);
      const double gap = ex.value - tr.upper.back();
      rows[i].push_back({"homotopy-gap", n, g, tr.upper.back(), ex.value, gap, 1e-4, gap <= 1e-4});
    }
    // Collapse at gamma = 1.
    {
      const Dataset d = generate({"f6a", {}, r.seed * 104729ULL + i}, 60);
      const CrossFit cf = CrossFit::in_sample(d, NuisanceRecipes{});
      const MsmSample s(d, cf.weights());
      const double point = fit_msm(line, s).beta[1];
      HomotopyOptions o;
      o.coord = 1;
      const auto tr = homotopy_bounds(line, s, {1.0}, o);
      const auto l6 = lemma6_F2_bounds(line, s, GammaSpec(1.0), 1);
      const double gap = std::max({std::fabs(tr.upper[0] - point), std::fabs(tr.lower[0] - point),
                                   std::fabs(l6.bounds.upper - point), std::fabs(l6.bounds.lower - point)});
      rows[i].push_back({"gamma1-collapse", d.size(), 1.0, tr.upper[0], point, gap, 1e-8, gap <= 1e-8});
    }
  });

  Table t{{"check", "instance", "n", "gamma", "value", "reference", "gap", "tolerance", "status"}, {}};
  std::map<std::string, std::pair<std::size_t, std::size_t>> tally;
  for (std::size_t i = 0; i < instances; ++i)
    for (const Row& row : rows[i]) {
      t.rows.push_back({row.check, static_cast<long long>(i), static_cast<long long>(row.n), number(row.gamma),
                        number(row.value), number(row.reference), number(row.gap), number(row.tolerance),
                        row.pass ? "pass" : "fail"});
      auto& [ok, total] = tally[row.check];
      ok += row.pass;
      ++total;
    }
  out.table("oracle_check", t);
  json summary = json::object();
  for (const auto& [check, counts] : tally) {
    summary[check] = {{"pass", counts.first}, {"total", counts.second}};
    log << check << ": " << counts.first << "/" << counts.second << " within tolerance\n";
  }
  r.notes["summary"] = summary;
  return 0;
}

}  // namespace

int run_command(const std::string& command, json config, const Flags& flags, std::ostream& log) {
  Run r;
  r.command = command;
  r.seed = flags.seed ? *flags.seed : get<std::uint64_t>(config, "/seed", 1);
  r.workers = flags.workers ? *flags.workers : get<std::size_t>(config, "/workers", 0);
  r.format = flags.format ? *flags.format : get<std::string>(config, "/format", "csv");
  if (r.format != "csv" && r.format != "json") fail(ErrorKind::UsageError, "format must be csv or json");
  r.out = flags.out ? *flags.out : get<std::string>(config, "/output", "msmsens_out");
  // Echoed config leaves out settings that must not change the results.
  json echo = config;
  for (const char* key : {"workers", "output", "format"}) echo.erase(key);
  echo["seed"] = r.seed;
  r.config = std::move(config);

  Output out(r.out, r.format);
  int status = 0;
  if (command == "fit") status = cmd_fit(r, out);
  else if (command == "bounds") status = cmd_bounds(r, out, log);
  else if (command == "curve") status = cmd_curve(r, out, log);
  else if (command == "simulate") status = cmd_simulate(r, out);
  else if (command == "oracle-check") status = cmd_oracle_check(r, out, log);
  else fail(ErrorKind::UsageError, "unknown command '" + command + "'");

  json meta;
  meta["command"] = command;
  meta["version"] = kVersion;
  meta["seed"] = r.seed;
  meta["config"] = echo;
  meta["flags"] = r.notes;
  meta["conventions"] = {{"quantile", "type-1 empirical, ties by index"},
                         {"weights", get<bool>(r.config, "/nuisance/propensity/stabilized", true)
                                         ? "stabilized pi(a)/pi(a|x)"
                                         : "unstabilized 1/pi(a|x)"},
                         {"cross_fitting", "pooled folds"}};
  meta["status"] = status;
  out.text("metadata.json", meta.dump(2) + "\n");
  return status;
}

int main(int argc, char** argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Sensitivity analysis for marginal structural models"};
  app.require_subcommand(1);
  Flags flags;
  std::string config_path, format;
  std::uint64_t seed = 0;
  std::string out_dir;
  std::size_t workers = 0;
  const std::vector<std::pair<std::string, std::string>> commands = {
      {"fit", "Fit the MSM (weighted and doubly robust)"},
      {"bounds", "Coordinate bounds over a sensitivity grid"},
      {"curve", "Dose-response curve bounds at chosen treatment values"},
      {"simulate", "Write a synthetic dataset"},
      {"oracle-check", "Cross-check closed forms against brute-force oracles"}};
  for (const auto& [name, help] : commands) {
    auto* sub = app.add_subcommand(name, help);
    sub->add_option("--config", config_path, "Run configuration (JSON)");
    sub->add_option("--seed", seed, "Random seed");
    sub->add_option("--out", out_dir, "Output directory");
    sub->add_option("--workers", workers, "Worker threads (0 = all cores)");
    sub->add_option("--format", format, "Output format")->check(CLI::IsMember({"csv", "json"}));
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e, out, err);
    return rc == 0 ? 0 : 2;
  }
  auto* chosen = app.get_subcommands().front();
  if (chosen->count("--seed")) flags.seed = seed;
  if (chosen->count("--out")) flags.out = out_dir;
  if (chosen->count("--workers")) flags.workers = workers;
  if (chosen->count("--format")) flags.format = format;

  try {
    const json config = load_config(config_path, environment_overrides());
    const int rc = run_command(chosen->get_name(), config, flags, err);
    if (rc == 4) err << "numerical failure; partial results written\n";
    return rc;
  } catch (const Error& e) {
    err << "error [" << to_string(e.kind()) << "] " << e.what() << "\n";
    switch (e.category()) {
      case ErrorCategory::Config: return 2;
      case ErrorCategory::Data: return 3;
      case ErrorCategory::Numerical: return 4;
    }
  } catch (const json::exception& e) {
    err << "error [ConfigError] " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    err << "internal error: " << e.what() << "\n";
  }
  return 1;
}

}  // namespace msmsens::cli
