#include "enkflab/harness.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "enkflab/csv.hpp"
#include "enkflab/errors.hpp"
#include "enkflab/inequalities.hpp"
#include "enkflab/meanfield.hpp"
#include "enkflab/parallel.hpp"
#include "enkflab/particle.hpp"
#include "enkflab/rng.hpp"

#ifndef ENKFLAB_VERSION
#define ENKFLAB_VERSION "unknown"
#endif

namespace enkflab::harness {

using nlohmann::json;

// ---------------------------------------------------------------------------
// Rate fitting
// ---------------------------------------------------------------------------

FitResult fit_rate(const std::vector<double>& xs, const std::vector<double>& ys) {
  if (xs.size() != ys.size()) throw UsageError("fit_rate: length mismatch");
  if (xs.size() < 3) throw UsageError("fit_rate: need at least 3 points");
  const int n = static_cast<int>(xs.size());
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (int i = 0; i < n; ++i) {
    if (!(xs[i] > 0.0) || !(ys[i] > 0.0))
      throw UsageError("fit_rate: values must be positive");
    const double lx = std::log(xs[i]);
    const double ly = std::log(ys[i]);
    sx += lx;
    sy += ly;
    sxx += lx * lx;
    sxy += lx * ly;
  }
  FitResult fit;
  fit.slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
  fit.intercept = (sy - fit.slope * sx) / n;
  fit.ci_lo = fit.ci_hi = fit.slope;
  return fit;
}

FitResult fit_rate_bootstrap(const std::vector<double>& xs,
                             const Eigen::MatrixXd& values, double reference,
                             int resamples, std::uint64_t seed) {
  const int replicates = static_cast<int>(values.rows());
  const int k_sizes = static_cast<int>(values.cols());
  if (static_cast<std::size_t>(k_sizes) != xs.size())
    throw UsageError("fit_rate_bootstrap: column count must match xs");
  if (replicates < 2) throw UsageError("fit_rate_bootstrap: need >= 2 replicates");

  std::vector<double> rmse(k_sizes);
  auto compute_rmse = [&](const std::vector<int>& ids, std::vector<double>& out) {
    for (int k = 0; k < k_sizes; ++k) {
      double acc = 0.0;
      for (const int r : ids) {
        const double e = values(r, k) - reference;
        acc += e * e;
      }
      out[k] = std::sqrt(acc / ids.size());
    }
  };
  std::vector<int> identity(replicates);
  for (int r = 0; r < replicates; ++r) identity[r] = r;
  compute_rmse(identity, rmse);
  FitResult fit = fit_rate(xs, rmse);

  std::vector<double> slopes;
  slopes.reserve(resamples);
  std::vector<int> ids(replicates);
  std::vector<double> boot_rmse(k_sizes);
  for (int b = 0; b < resamples; ++b) {
    for (int r = 0; r < replicates; ++r)
      ids[r] = static_cast<int>(rng::uniform_u64(seed, 0, std::uint32_t(b),
                                                 std::uint32_t(r), rng::Role::scramble,
                                                 0) %
                                replicates);
    compute_rmse(ids, boot_rmse);
    bool positive = true;
    for (const double v : boot_rmse)
      if (!(v > 0.0)) positive = false;
    if (!positive) continue;
    slopes.push_back(fit_rate(xs, boot_rmse).slope);
  }
  if (slopes.size() >= 20) {
    std::sort(slopes.begin(), slopes.end());
    const auto pick = [&](double q) {
      const double pos = q * (slopes.size() - 1);
      const std::size_t i = static_cast<std::size_t>(pos);
      const double frac = pos - i;
      return i + 1 < slopes.size() ? slopes[i] * (1 - frac) + slopes[i + 1] * frac
                                   : slopes[i];
    };
    fit.ci_lo = pick(0.025);
    fit.ci_hi = pick(0.975);
    fit.has_ci = true;
  }
  return fit;
}

// ---------------------------------------------------------------------------
// Config parsing
// ---------------------------------------------------------------------------

namespace {

const std::vector<std::string> kKinds = {"exactness",  "mc-rate",
                                         "eps-scaling", "chaos",
                                         "lipschitz-suite", "dg-convergence"};

particle::Reference parse_reference(const std::string& name) {
  if (name == "kalman") return particle::Reference::kalman;
  if (name == "mean-field") return particle::Reference::meanfield;
  if (name == "true-filter") return particle::Reference::truefilter;
  throw ConfigError("config field 'reference': unknown value '" + name + "'");
}

}  // namespace

ExperimentConfig ExperimentConfig::from_json_text(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config: invalid JSON: ") + e.what());
  }
  ExperimentConfig cfg;
  try {
    cfg.kind = j.at("kind").get<std::string>();
    if (!j.contains("seed"))
      throw ConfigError("config field 'seed': required, no wall-clock default");
    cfg.seed = j.at("seed").get<std::uint64_t>();
    if (j.contains("model")) cfg.model_json = j.at("model").dump();
    if (j.contains("J")) cfg.J = j.at("J").get<int>();
    if (j.contains("replicates")) cfg.replicates = j.at("replicates").get<int>();
    if (j.contains("N_list")) cfg.N_list = j.at("N_list").get<std::vector<int>>();
    if (j.contains("eps_list"))
      cfg.eps_list = j.at("eps_list").get<std::vector<double>>();
    if (j.contains("observables"))
      cfg.observables = j.at("observables").get<std::vector<std::string>>();
    if (j.contains("reference")) cfg.reference = j.at("reference").get<std::string>();
    if (j.contains("out")) cfg.out_dir = j.at("out").get<std::string>();
    if (j.contains("threads")) cfg.threads = j.at("threads").get<int>();
    if (j.contains("tolerances"))
      for (const auto& [key, value] : j.at("tolerances").items())
        cfg.tolerances[key] = value.get<double>();
    if (j.contains("grid")) {
      const auto& g = j.at("grid");
      const double lo = g.at("lo").get<double>();
      const double hi = g.at("hi").get<double>();
      const int n = g.at("n").get<int>();
      int dim_u = 1;
      if (!cfg.model_json.empty())
        dim_u = model::ModelSpec::from_json(cfg.model_json).dim_u;
      cfg.grid.u_axes.assign(dim_u, measures::GridAxis{lo, hi, n});
      if (g.contains("y_n")) cfg.grid.y_nodes_per_dim = g.at("y_n").get<int>();
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  cfg.validate();
  return cfg;
}

ExperimentConfig ExperimentConfig::from_json_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("config: cannot open '" + path + "'");
  std::string text((std::istreambuf_iterator<char>(is)),
                   std::istreambuf_iterator<char>());
  return from_json_text(text);
}

void ExperimentConfig::validate() const {
  if (std::find(kKinds.begin(), kKinds.end(), kind) == kKinds.end())
    throw ConfigError("config field 'kind': unknown experiment kind '" + kind + "'");
  const bool needs_model = kind != "lipschitz-suite";
  if (needs_model && model_json.empty())
    throw ConfigError("config field 'model': required for kind '" + kind + "'");
  if (!model_json.empty()) model::ModelSpec::from_json(model_json);  // validates

  auto require = [&](bool ok, const std::string& what) {
    if (!ok) throw ConfigError("config: " + what + " (kind '" + kind + "')");
  };
  if (kind == "exactness") {
    require(J >= 1, "field 'J' must be >= 1");
    require(model::ModelSpec::from_json(model_json).is_affine(),
            "field 'model' must be affine for the exactness recipe");
  } else if (kind == "mc-rate") {
    require(N_list.size() >= 3, "field 'N_list' needs at least 3 entries");
    require(replicates >= 2, "field 'replicates' must be >= 2");
    require(!observables.empty(), "field 'observables' must be nonempty");
    parse_reference(reference);
    for (const auto& o : observables) measures::Observable::parse(o);
  } else if (kind == "eps-scaling") {
    require(!eps_list.empty(), "field 'eps_list' must be nonempty");
    for (const double e : eps_list)
      require(e > 0.0, "field 'eps_list' entries must be positive");
    require(model::ModelSpec::from_json(model_json).dynamics.perturbation !=
                model::PerturbationKind::none,
            "field 'model' must declare a dynamics perturbation");
  } else if (kind == "chaos") {
    require(!N_list.empty(), "field 'N_list' must be nonempty");
    require(replicates >= 2, "field 'replicates' must be >= 2");
  } else if (kind == "dg-convergence") {
    require(N_list.size() >= 4, "field 'N_list' needs at least 4 resolutions");
    for (std::size_t i = 0; i + 1 < N_list.size(); ++i)
      require(N_list[i + 1] == 2 * N_list[i], "field 'N_list' must double");
  }
}

double ExperimentConfig::tolerance(const std::string& key, double fallback) const {
  const auto it = tolerances.find(key);
  return it == tolerances.end() ? fallback : it->second;
}

std::string ExperimentConfig::resolved_json() const {
  json j;
  j["kind"] = kind;
  j["seed"] = seed;
  j["J"] = J;
  if (!model_json.empty()) j["model"] = json::parse(model_json);
  if (replicates) j["replicates"] = replicates;
  if (!N_list.empty()) j["N_list"] = N_list;
  if (!eps_list.empty()) j["eps_list"] = eps_list;
  if (!observables.empty()) j["observables"] = observables;
  j["reference"] = reference;
  if (!grid.u_axes.empty()) {
    j["grid"] = {{"lo", grid.u_axes[0].lo},
                 {"hi", grid.u_axes[0].hi},
                 {"n", grid.u_axes[0].n},
                 {"y_n", grid.y_nodes_per_dim}};
  }
  json tol = json::object();
  for (const auto& [k, v] : tolerances) tol[k] = v;
  j["tolerances"] = tol;
  j["out"] = out_dir;
  j["threads"] = threads;
  return j.dump();
}

// ---------------------------------------------------------------------------
// Recipes
// ---------------------------------------------------------------------------

namespace {

struct RecipeOutput {
  CsvWriter csv{{}};
  json results;
  bool pass = false;
};

RecipeOutput run_exactness(const ExperimentConfig& cfg) {
  const auto model = model::ModelSpec::from_json(cfg.model_json);
  const auto data = model::simulate_truth(model, cfg.J, cfg.seed);
  const auto mf = meanfield::mf_run(model, data, cfg.grid);
  const auto kf = truefilter::kalman_exact(model, data);

  RecipeOutput out;
  out.csv = CsvWriter({"step", "mean_diff", "cov_diff"});
  double worst = 0.0;
  for (int j = 0; j <= cfg.J; ++j) {
    const double md =
        (mf.gaussians[j].mean - kf[j].mean).cwiseAbs().maxCoeff();
    const double cd = (mf.gaussians[j].cov - kf[j].cov).cwiseAbs().maxCoeff();
    worst = std::max({worst, md, cd});
    out.csv.add_row({CsvWriter::num(std::int64_t(j)), CsvWriter::num(md),
                     CsvWriter::num(cd)});
  }
  const double tol = cfg.tolerance("max_abs", 1e-12);
  out.results["max_difference"] = worst;
  out.results["tolerance"] = tol;
  out.pass = worst <= tol;
  return out;
}

RecipeOutput run_mc_rate(const ExperimentConfig& cfg) {
  const auto model = model::ModelSpec::from_json(cfg.model_json);
  const auto data = model::simulate_truth(model, cfg.J, cfg.seed);
  std::vector<measures::Observable> phis;
  for (const auto& o : cfg.observables) phis.push_back(measures::Observable::parse(o));

  const auto report = particle::mc_rate_experiment(
      model, data, cfg.N_list, cfg.replicates, phis, parse_reference(cfg.reference),
      cfg.grid, cfg.seed, cfg.threads);

  RecipeOutput out;
  out.csv = CsvWriter({"replicate", "step", "N", "phi", "value"});
  for (const auto& table : report.tables)
    for (std::size_t k = 0; k < cfg.N_list.size(); ++k)
      for (int j = 0; j <= cfg.J; ++j)
        for (int r = 0; r < cfg.replicates; ++r)
          out.csv.add_row({CsvWriter::num(std::int64_t(r)),
                           CsvWriter::num(std::int64_t(j)),
                           CsvWriter::num(std::int64_t(cfg.N_list[k])),
                           table.phi.id(),
                           CsvWriter::num(table.path_values[j](r, k))});

  std::vector<double> xs(cfg.N_list.begin(), cfg.N_list.end());
  const double lo = cfg.tolerance("slope_lo", -0.6);
  const double hi = cfg.tolerance("slope_hi", -0.4);
  const int resamples = static_cast<int>(cfg.tolerance("bootstrap", 1000));
  out.pass = true;
  out.results["tables"] = json::array();
  for (const auto& table : report.tables) {
    const FitResult fit = fit_rate_bootstrap(xs, table.values, table.reference_value,
                                             resamples, cfg.seed);
    json t;
    t["phi"] = table.phi.id();
    t["reference"] = table.reference_value;
    t["rmse"] = table.rmse;
    t["slope"] = fit.slope;
    t["ci"] = {fit.ci_lo, fit.ci_hi};
    out.results["tables"].push_back(t);
    if (!(fit.slope >= lo && fit.slope <= hi)) out.pass = false;
  }
  out.results["slope_band"] = {lo, hi};
  return out;
}

RecipeOutput run_eps_scaling(const ExperimentConfig& cfg) {
  const auto base = model::ModelSpec::from_json(cfg.model_json);
  RecipeOutput out;
  out.csv = CsvWriter({"eps", "dg"});
  std::vector<double> dgs;
  for (const double eps : cfg.eps_list) {
    model::ModelSpec variant = base;
    variant.dynamics.eps = eps;
    const auto data = model::simulate_truth(variant, cfg.J, cfg.seed);
    const auto truth = truefilter::filter_run(variant, data, cfg.grid);
    const auto mf = meanfield::mf_run(variant, data, cfg.grid);
    const double dg =
        measures::weighted_tv(mf.grids.back(), truth.measures.back());
    dgs.push_back(dg);
    out.csv.add_row({CsvWriter::num(eps), CsvWriter::num(dg)});
  }
  const FitResult fit = fit_rate(cfg.eps_list, dgs);
  bool monotone = true;
  for (std::size_t i = 0; i + 1 < dgs.size(); ++i)
    if (!(dgs[i + 1] > dgs[i])) monotone = false;
  const double lo = cfg.tolerance("slope_lo", 0.75);
  const double hi = cfg.tolerance("slope_hi", 1.25);
  out.results["eps"] = cfg.eps_list;
  out.results["dg"] = dgs;
  out.results["slope"] = fit.slope;
  out.results["slope_band"] = {lo, hi};
  out.results["monotone"] = monotone;
  out.pass = monotone && fit.slope >= lo && fit.slope <= hi;
  return out;
}

RecipeOutput run_chaos(const ExperimentConfig& cfg) {
  const auto model = model::ModelSpec::from_json(cfg.model_json);
  const auto data = model::simulate_truth(model, cfg.J, cfg.seed);
  const auto mf_path = particle::mean_field_path(model, data, cfg.grid);

  RecipeOutput out;
  out.csv = CsvWriter({"N", "step", "D1", "D2", "D4", "Z", "S2", "S4"});
  std::vector<double> sqrtn_d;
  bool zero_start = true;
  for (const int n : cfg.N_list) {
    const auto diag = particle::coupled_diagnostics(model, data, n, cfg.seed,
                                                    cfg.replicates, mf_path,
                                                    cfg.threads);
    for (int j = 0; j <= data.J; ++j)
      out.csv.add_row({CsvWriter::num(std::int64_t(n)),
                       CsvWriter::num(std::int64_t(j)),
                       CsvWriter::num(diag.D[j][0]), CsvWriter::num(diag.D[j][1]),
                       CsvWriter::num(diag.D[j][2]), CsvWriter::num(diag.Z[j]),
                       CsvWriter::num(diag.S[j][0]), CsvWriter::num(diag.S[j][1])});
    for (std::size_t p = 0; p < diag.p_orders.size(); ++p)
      if (diag.D[0][p] != 0.0) zero_start = false;
    sqrtn_d.push_back(std::sqrt(double(n)) * diag.D[data.J][1]);
  }
  const double ratio =
      *std::max_element(sqrtn_d.begin(), sqrtn_d.end()) /
      *std::min_element(sqrtn_d.begin(), sqrtn_d.end());
  const double ratio_max = cfg.tolerance("ratio_max", 3.0);
  out.results["sqrtN_D"] = sqrtn_d;
  out.results["ratio"] = ratio;
  out.results["ratio_max"] = ratio_max;
  out.results["D0_zero"] = zero_start;
  out.pass = zero_start && ratio <= ratio_max;
  return out;
}

RecipeOutput run_lipschitz_suite(const ExperimentConfig& cfg) {
  const int instances = cfg.replicates > 0 ? cfg.replicates : 100;
  const auto report = inequalities::run_all(instances, cfg.seed);

  RecipeOutput out;
  out.csv = CsvWriter({"suite", "instance", "value", "bound", "margin", "asserted"});
  for (const auto& r : report.rows)
    out.csv.add_row({r.suite, CsvWriter::num(std::int64_t(r.instance)),
                     CsvWriter::num(r.value), CsvWriter::num(r.bound),
                     CsvWriter::num(r.margin), r.asserted ? "1" : "0"});
  const double slack = cfg.tolerance("slack", 1e-10);
  out.results["instances"] = instances;
  out.results["min_margin"] = report.min_asserted_margin();
  out.results["slack"] = slack;
  out.pass = report.pass(slack);
  return out;
}

RecipeOutput run_dg_convergence(const ExperimentConfig& cfg) {
  const auto model = model::ModelSpec::from_json(cfg.model_json);
  if (model.dim_u != 1)
    throw ConfigError("dg-convergence: requires a 1D state space");
  const measures::GaussianMeasure mu0 = model.initial();
  const double m = mu0.mean[0];
  const double sd = std::sqrt(model.c0(0, 0));

  double lo = m - 12.0 * sd, hi = m + 12.0 * sd;
  if (!cfg.grid.u_axes.empty()) {
    lo = cfg.grid.u_axes[0].lo;
    hi = cfg.grid.u_axes[0].hi;
  }

  // The integrand is kinked where the densities cross, so a single pair's
  // midpoint error oscillates with the kink's alignment. A fixed batch of
  // pairs around mu0 is averaged, and the quadrature order is asserted per
  // quadrupling of the resolution.
  const std::vector<std::array<double, 4>> pairs = {
      {m, sd * sd, m + 0.5 * sd, 1.2 * sd * sd},
      {m - 0.4 * sd, 0.8 * sd * sd, m + 0.3 * sd, 1.1 * sd * sd},
      {m + 0.2 * sd, 1.4 * sd * sd, m - 0.1 * sd, 0.7 * sd * sd},
      {m + 0.7 * sd, sd * sd, m - 0.6 * sd, 1.3 * sd * sd},
      {m, 0.9 * sd * sd, m + 0.1 * sd, 1.6 * sd * sd},
      {m - 0.8 * sd, 1.2 * sd * sd, m + 0.4 * sd, 0.9 * sd * sd}};
  auto gauss1 = [&](double mean, double var) {
    return measures::GaussianMeasure(Eigen::VectorXd::Constant(1, mean),
                                     Eigen::MatrixXd::Constant(1, 1, var));
  };
  auto mean_dg = [&](int n) {
    const std::vector<measures::GridAxis> axes = {measures::GridAxis{lo, hi, n}};
    std::vector<double> dgs;
    for (const auto& p : pairs)
      dgs.push_back(
          measures::weighted_tv(measures::render_gaussian(gauss1(p[0], p[1]), axes),
                                measures::render_gaussian(gauss1(p[2], p[3]), axes)));
    return dgs;
  };

  const std::vector<double> reference = mean_dg(4 * cfg.N_list.back());
  std::vector<double> errors;
  for (const int n : cfg.N_list) {
    const std::vector<double> dgs = mean_dg(n);
    double acc = 0.0;
    for (std::size_t p = 0; p < pairs.size(); ++p)
      acc += std::abs(dgs[p] - reference[p]);
    errors.push_back(acc / pairs.size());
  }

  RecipeOutput out;
  out.csv = CsvWriter({"n", "mean_error", "quadrupling_ratio"});
  const double ratio_max = cfg.tolerance("ratio_max", 0.25);
  std::vector<double> ratios;
  bool pass = true;
  for (std::size_t i = 0; i < errors.size(); ++i) {
    double ratio = 0.0;
    if (i >= 2) {
      ratio = errors[i] / errors[i - 2];
      ratios.push_back(ratio);
      if (!(ratio <= ratio_max)) pass = false;
    }
    out.csv.add_row({CsvWriter::num(std::int64_t(cfg.N_list[i])),
                     CsvWriter::num(errors[i]), CsvWriter::num(ratio)});
  }
  out.results["errors"] = errors;
  out.results["quadrupling_ratios"] = ratios;
  out.results["ratio_max"] = ratio_max;
  out.pass = pass;
  return out;
}

}  // namespace

int run_experiment(const ExperimentConfig& cfg) {
  if (cfg.threads > 0) set_default_threads(cfg.threads);

  RecipeOutput out;
  if (cfg.kind == "exactness")
    out = run_exactness(cfg);
  else if (cfg.kind == "mc-rate")
    out = run_mc_rate(cfg);
  else if (cfg.kind == "eps-scaling")
    out = run_eps_scaling(cfg);
  else if (cfg.kind == "chaos")
    out = run_chaos(cfg);
  else if (cfg.kind == "lipschitz-suite")
    out = run_lipschitz_suite(cfg);
  else if (cfg.kind == "dg-convergence")
    out = run_dg_convergence(cfg);
  else
    throw ConfigError("run_experiment: unknown kind '" + cfg.kind + "'");

  namespace fs = std::filesystem;
  fs::create_directories(cfg.out_dir);
  out.csv.write_file((fs::path(cfg.out_dir) / "results.csv").string());

  json summary;
  summary["config"] = json::parse(cfg.resolved_json());
  summary["version"] = ENKFLAB_VERSION;
  summary["results"] = out.results;
  summary["pass"] = out.pass;
  {
    std::ofstream os(fs::path(cfg.out_dir) / "summary.json", std::ios::binary);
    os << summary.dump(2) << "\n";
  }
  {
    const auto now = std::chrono::system_clock::now();
    const std::time_t t = std::chrono::system_clock::to_time_t(now);
    char buf[32];
    std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&t));
    json meta;
    meta["timestamp"] = buf;
    std::ofstream os(fs::path(cfg.out_dir) / "metadata.json", std::ios::binary);
    os << meta.dump(2) << "\n";
  }
  return out.pass ? 0 : 2;
}

}  // namespace enkflab::harness
