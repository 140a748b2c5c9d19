#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "enkflab/measures.hpp"
#include "enkflab/model.hpp"
#include "enkflab/truefilter.hpp"

namespace enkflab::harness {

// ---------------------------------------------------------------------------
// Rate fitting
// ---------------------------------------------------------------------------

struct FitResult {
  double slope = 0.0;
  double intercept = 0.0;
  double ci_lo = 0.0;
  double ci_hi = 0.0;
  bool has_ci = false;
};

// Least squares on (log x, log y); all inputs must be positive, >= 3 points.
FitResult fit_rate(const std::vector<double>& xs, const std::vector<double>& ys);

// Slope CI by bootstrap over replicates: values is replicates x xs.size(),
// one final observable value per cell; the RMSE against reference is
// recomputed per resample.
FitResult fit_rate_bootstrap(const std::vector<double>& xs,
                             const Eigen::MatrixXd& values, double reference,
                             int resamples, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Experiment configuration
// ---------------------------------------------------------------------------

struct ExperimentConfig {
  std::string kind;
  std::string model_json;  // the resolved model document
  int J = 5;
  std::uint64_t seed = 0;
  int replicates = 0;
  std::vector<int> N_list;
  std::vector<double> eps_list;
  std::vector<std::string> observables;
  std::string reference = "kalman";
  truefilter::GridPolicy grid;
  std::map<std::string, double> tolerances;
  std::string out_dir = "out";
  int threads = 0;

  // Parses and validates; throws ConfigError with field diagnostics.
  static ExperimentConfig from_json_text(const std::string& text);
  static ExperimentConfig from_json_file(const std::string& path);
  void validate() const;
  double tolerance(const std::string& key, double fallback) const;
  std::string resolved_json() const;
};

// Exit codes: 0 pass, 2 tolerance failure (errors are thrown, the CLI maps
// them to 1). Writes results.csv, summary.json and metadata.json under
// config.out_dir.
int run_experiment(const ExperimentConfig& config);

}  // namespace enkflab::harness
