#include <cstdint>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "enkflab/errors.hpp"
#include "enkflab/harness.hpp"
#include "enkflab/model.hpp"
#include "enkflab/parallel.hpp"

namespace {

int cmd_run(const std::string& config_path, const std::string& out_override,
            std::uint64_t seed_override, bool seed_given, int threads) {
  auto config = enkflab::harness::ExperimentConfig::from_json_file(config_path);
  if (!out_override.empty()) config.out_dir = out_override;
  if (seed_given) config.seed = seed_override;
  if (threads > 0) config.threads = threads;
  const int code = enkflab::harness::run_experiment(config);
  std::cout << (code == 0 ? "pass" : "tolerance failure") << " (" << config.kind
            << "), outputs in " << config.out_dir << "\n";
  return code;
}

int cmd_validate(const std::string& config_path) {
  const auto config = enkflab::harness::ExperimentConfig::from_json_file(config_path);
  std::cout << "config ok: kind=" << config.kind << " seed=" << config.seed << "\n";
  if (!config.model_json.empty()) {
    const auto model = enkflab::model::ModelSpec::from_json(config.model_json);
    const auto probes = enkflab::model::default_probes(model.dim_u, 10.0, 41);
    const auto report = enkflab::model::validate_assumptions(model, probes);
    std::cout << report.to_string();
    if (!report.all_pass()) return 1;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Stochastic filtering laboratory: Bayes, mean-field and particle "
               "ensemble Kalman filters"};
  app.require_subcommand(1);

  std::string config_path;
  std::string out_dir;
  std::uint64_t seed = 0;
  int threads = 0;

  auto* run = app.add_subcommand("run", "Run a configured experiment");
  run->add_option("--config", config_path, "Experiment config (JSON)")->required();
  run->add_option("--out", out_dir, "Output directory override");
  auto* seed_opt = run->add_option("--seed", seed, "Seed override");
  run->add_option("--threads", threads, "Worker thread count");

  auto* validate = app.add_subcommand("validate", "Validate a config and its model");
  validate->add_option("--config", config_path, "Experiment config (JSON)")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (app.got_subcommand("run"))
      return cmd_run(config_path, out_dir, seed, !seed_opt->empty(), threads);
    return cmd_validate(config_path);
  } catch (const enkflab::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "unexpected error: " << e.what() << "\n";
    return 1;
  }
}
