#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "enkflab/errors.hpp"
#include "enkflab/harness.hpp"
#include "enkflab/rng.hpp"
#include "test_support.hpp"

using namespace enkflab;
using namespace enkflab::harness;

namespace {

std::string slurp(const std::filesystem::path& p) {
  std::ifstream is(p, std::ios::binary);
  REQUIRE(is.good());
  return std::string((std::istreambuf_iterator<char>(is)),
                     std::istreambuf_iterator<char>());
}

std::string affine_model_json() {
  return testsupport::scalar_model(0.9, 0.0, 1.0, 0.0, 0.5, 0.5, 0.0, 1.0).to_json();
}

}  // namespace

TEST_CASE("fit_rate") {
  std::vector<double> xs = {64, 256, 1024, 4096};
  std::vector<double> inv_sqrt, linear;
  for (const double x : xs) {
    inv_sqrt.push_back(1.0 / std::sqrt(x));
    linear.push_back(3.5 * x);
  }
  CHECK(std::abs(fit_rate(xs, inv_sqrt).slope + 0.5) < 1e-12);
  CHECK(std::abs(fit_rate(xs, linear).slope - 1.0) < 1e-12);

  CHECK_THROWS_AS(fit_rate({1.0, 2.0}, {1.0, 2.0}), UsageError);
  CHECK_THROWS_AS(fit_rate({1.0, 2.0, -3.0}, {1.0, 2.0, 3.0}), UsageError);
  CHECK_THROWS_AS(fit_rate({1.0, 2.0, 3.0}, {1.0, 0.0, 3.0}), UsageError);
}

TEST_CASE("bootstrap interval halves in width with four times the replicates") {
  // Synthetic replicate values around a reference with 1/sqrt(N) spread.
  std::vector<double> xs = {64, 256, 1024};
  auto make_values = [&](int reps) {
    Eigen::MatrixXd v(reps, 3);
    for (int r = 0; r < reps; ++r)
      for (int k = 0; k < 3; ++k)
        v(r, k) = rng::normal(31, 0, std::uint32_t(r), std::uint32_t(k),
                              rng::Role::scramble, 0) /
                  std::sqrt(xs[k]);
    return v;
  };
  const FitResult small = fit_rate_bootstrap(xs, make_values(100), 0.0, 800, 5);
  const FitResult large = fit_rate_bootstrap(xs, make_values(400), 0.0, 800, 5);
  REQUIRE(small.has_ci);
  REQUIRE(large.has_ci);
  const double shrink =
      (small.ci_hi - small.ci_lo) / (large.ci_hi - large.ci_lo);
  CHECK(shrink > 1.4);  // expect about 2 for a 4x replicate increase
  CHECK(shrink < 2.9);
  CHECK(small.ci_lo <= small.slope);
  CHECK(small.ci_hi >= small.slope);
}

TEST_CASE("config parsing and validation") {
  CHECK_THROWS_AS(ExperimentConfig::from_json_text("{"), ConfigError);
  CHECK_THROWS_AS(ExperimentConfig::from_json_text(R"({"kind":"exactness"})"),
                  ConfigError);  // seed required
  CHECK_THROWS_AS(ExperimentConfig::from_json_text(
                      R"({"kind":"warp-drive","seed":1})"),
                  ConfigError);

  const std::string good = std::string(R"({"kind":"exactness","seed":7,"J":4,)") +
                           "\"model\":" + affine_model_json() + "}";
  const ExperimentConfig cfg = ExperimentConfig::from_json_text(good);
  CHECK(cfg.kind == "exactness");
  CHECK(cfg.seed == 7);
  CHECK(cfg.J == 4);

  // mc-rate demands at least 3 ensemble sizes.
  const std::string short_list =
      std::string(R"({"kind":"mc-rate","seed":7,"N_list":[64,128],"replicates":4,)") +
      R"("observables":["coordinate:0"],"model":)" + affine_model_json() + "}";
  CHECK_THROWS_AS(ExperimentConfig::from_json_text(short_list), ConfigError);
}

TEST_CASE("exactness experiment passes and emits deterministic outputs") {
  const std::string text = std::string(R"({"kind":"exactness","seed":11,"J":10,)") +
                           "\"model\":" + affine_model_json() +
                           R"(,"out":"test_out/exactness"})";
  ExperimentConfig cfg = ExperimentConfig::from_json_text(text);
  CHECK(run_experiment(cfg) == 0);
  const std::string first = slurp("test_out/exactness/results.csv");
  const std::string summary = slurp("test_out/exactness/summary.json");
  CHECK(summary.find("\"pass\": true") != std::string::npos);
  CHECK(summary.find("\"version\"") != std::string::npos);
  CHECK(summary.find("\"config\"") != std::string::npos);

  CHECK(run_experiment(cfg) == 0);
  CHECK(slurp("test_out/exactness/results.csv") == first);
}

TEST_CASE("mc-rate experiment is byte-identical across thread counts") {
  const std::string base =
      std::string(
          R"({"kind":"mc-rate","seed":3,"J":3,"N_list":[32,64,128],"replicates":16,)") +
      R"("observables":["coordinate:0"],"reference":"kalman","model":)" +
      affine_model_json();
  ExperimentConfig one = ExperimentConfig::from_json_text(
      base + R"(,"threads":1,"out":"test_out/mc1"})");
  ExperimentConfig four = ExperimentConfig::from_json_text(
      base + R"(,"threads":4,"out":"test_out/mc4"})");
  // Slope tolerances are irrelevant here; disable the gate via wide bands.
  one.tolerances["slope_lo"] = four.tolerances["slope_lo"] = -10.0;
  one.tolerances["slope_hi"] = four.tolerances["slope_hi"] = 10.0;
  CHECK(run_experiment(one) == 0);
  CHECK(run_experiment(four) == 0);
  CHECK(slurp("test_out/mc1/results.csv") == slurp("test_out/mc4/results.csv"));
  CHECK(slurp("test_out/mc1/summary.json") == slurp("test_out/mc4/summary.json"));
}

TEST_CASE("dg-convergence experiment validates doubling resolutions") {
  const std::string text =
      std::string(R"({"kind":"dg-convergence","seed":1,"N_list":[64,128,256,512,1024],)") +
      "\"model\":" + affine_model_json() + R"(,"out":"test_out/dg"})";
  const ExperimentConfig cfg = ExperimentConfig::from_json_text(text);
  CHECK(run_experiment(cfg) == 0);

  const std::string bad =
      std::string(R"({"kind":"dg-convergence","seed":1,"N_list":[64,100,200,400],)") +
      "\"model\":" + affine_model_json() + "}";
  CHECK_THROWS_AS(ExperimentConfig::from_json_text(bad), ConfigError);
}
