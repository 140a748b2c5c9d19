#include <doctest.h>

#include <cmath>

#include "enkflab/errors.hpp"
#include "enkflab/harness.hpp"
#include "enkflab/particle.hpp"
#include "test_support.hpp"

using namespace enkflab;
using namespace enkflab::particle;
using measures::Observable;
using testsupport::scalar_model;
using testsupport::scalar_model_perturbed;

namespace {
model::DataRecord one_step_datum(const model::ModelSpec& model, double y) {
  model::DataRecord data;
  data.J = 1;
  data.truth = Eigen::MatrixXd::Zero(2, model.dim_u);
  data.observations = Eigen::MatrixXd::Constant(1, model.dim_y, y);
  data.kappa_y = std::abs(y);
  return data;
}
}  // namespace

TEST_CASE("a collapsed ensemble takes almost no update") {
  const auto model = scalar_model(1.0, 0.0, 1.0, 0.0, 1e-12, 1.0, 0.0, 1.0);
  EnsembleState ens;
  ens.u = Eigen::MatrixXd::Constant(64, 1, 0.5);
  ens.seed = 4;
  ens.replicate = 0;
  ens.step = 0;
  StepDebug dbg;
  const EnsembleState next =
      enkf_step(ens, Eigen::VectorXd::Constant(1, 2.0), model, &dbg);
  CHECK((next.u - dbg.forecast).cwiseAbs().maxCoeff() < 1e-6);
  CHECK(dbg.chh_gamma_min_eig >= model.gamma(0, 0));
}

TEST_CASE("inflating Gamma drives the gain to zero") {
  const auto base = scalar_model(1.0, 0.0, 1.0, 0.0, 1.0, 1.0, 0.0, 1.0);
  const auto heavy = scalar_model(1.0, 0.0, 1.0, 0.0, 1.0, 1e6, 0.0, 1.0);
  const EnsembleState ens = enkf_init(base, 512, 11, 0);
  StepDebug d1, d2;
  const Eigen::VectorXd y = Eigen::VectorXd::Constant(1, 1.5);
  const EnsembleState n1 = enkf_step(ens, y, base, &d1);
  const EnsembleState n2 = enkf_step(ens, y, heavy, &d2);
  // The forecasts and C_uh, C_hh coincide; the gain drops by (C_hh+1)/(C_hh+1e6).
  CHECK(d2.forecast == d1.forecast);
  const double gain_ratio = d2.gain(0, 0) / d1.gain(0, 0);
  CHECK(gain_ratio > 1e-7);
  CHECK(gain_ratio < 1e-5);
  // The realized increment carries the inflated innovation (~ sqrt(Gamma)),
  // still a large net shrink.
  const double inc1 = (n1.u - d1.forecast).cwiseAbs().mean();
  const double inc2 = (n2.u - d2.forecast).cwiseAbs().mean();
  CHECK(inc2 < inc1 * 1e-2);
  CHECK(inc2 > 0.0);
}

TEST_CASE("one large-ensemble step reproduces the Kalman posterior") {
  const auto model = scalar_model(1.0, 0.0, 1.0, 0.0, 1.0, 1.0, 0.0, 1.0);
  const int N = 100000;
  const EnsembleState ens = enkf_init(model, N, 2718, 0);
  const EnsembleState next =
      enkf_step(ens, Eigen::VectorXd::Constant(1, 1.0), model);
  const double mean = next.u.col(0).mean();
  const double var =
      (next.u.col(0).array() - mean).square().sum() / N;
  const double se_mean = std::sqrt(var / N);
  const double se_var = var * std::sqrt(2.0 / N);
  CHECK(std::abs(mean - 2.0 / 3.0) < 3.0 * se_mean);
  CHECK(std::abs(var - 2.0 / 3.0) < 3.0 * se_var);
}

TEST_CASE("enkf_run: initialization sampling and determinism") {
  const auto model = scalar_model(0.9, 0.0, 1.0, 0.0, 0.5, 0.5, 0.0, 1.0);
  const auto data0 = model::simulate_truth(model, 0, 3);
  const int N = 4096;
  const auto run0 = enkf_run(model, data0, N, 77, 0, {Observable::coordinate(0)});
  CHECK(std::abs(run0.observable_path[0][0]) < 4.0 * std::sqrt(1.0 / N));

  const auto data = model::simulate_truth(model, 5, 3);
  const auto a = enkf_run(model, data, 256, 123, 4, {Observable::coordinate(0)});
  const auto b = enkf_run(model, data, 256, 123, 4, {Observable::coordinate(0)});
  for (int j = 0; j <= 5; ++j) CHECK(a.ensembles[j] == b.ensembles[j]);
  const auto c = enkf_run(model, data, 256, 124, 4, {Observable::coordinate(0)});
  CHECK(a.ensembles[5] != c.ensembles[5]);
}

TEST_CASE("coupled run: identical start, interacting side replays enkf_run") {
  const auto model = scalar_model(0.9, 0.0, 1.0, 0.0, 0.5, 0.5, 0.0, 1.0);
  const auto data = model::simulate_truth(model, 5, 9);
  truefilter::GridPolicy policy;
  const MeanFieldPath mf = mean_field_path(model, data, policy);
  const CoupledRunResult coupled = coupled_run(model, data, 128, 42, 1, mf);

  CHECK(coupled.interacting[0] == coupled.replicas[0]);  // D_0 = 0 exactly
  const auto plain = enkf_run(model, data, 128, 42, 1, {});
  for (int j = 0; j <= 5; ++j) CHECK(coupled.interacting[j] == plain.ensembles[j]);

  const auto nonlinear_h = model::ModelSpec::create(
      model.dynamics,
      model::VectorFieldSpec::affine_plus_bounded(Eigen::MatrixXd::Identity(1, 1),
                                                  Eigen::VectorXd::Zero(1), 0.1,
                                                  model::PerturbationKind::tanh),
      model.sigma, model.gamma, model.m0, model.c0);
  CHECK_THROWS_AS(coupled_run(nonlinear_h, data, 16, 1, 0, mf), UsageError);
}

TEST_CASE("replica particles decorrelate across the ensemble") {
  const auto model = scalar_model(0.9, 0.0, 1.0, 0.0, 0.5, 0.5, 0.0, 1.0);
  const auto data = model::simulate_truth(model, 3, 13);
  truefilter::GridPolicy policy;
  const MeanFieldPath mf = mean_field_path(model, data, policy);
  const int reps = 400;
  double sx = 0, sy = 0, sxx = 0, syy = 0, sxy = 0;
  for (int r = 0; r < reps; ++r) {
    const CoupledRunResult c = coupled_run(model, data, 8, 5151, std::uint32_t(r), mf);
    const double x = c.replicas[3](0, 0);
    const double y = c.replicas[3](1, 0);
    sx += x;
    sy += y;
    sxx += x * x;
    syy += y * y;
    sxy += x * y;
  }
  const double corr = (reps * sxy - sx * sy) /
                      std::sqrt((reps * sxx - sx * sx) * (reps * syy - sy * sy));
  CHECK(std::abs(corr) < 4.0 / std::sqrt(double(reps)));
}

TEST_CASE("chaos diagnostics: zero start and sqrt(N) scaling") {
  const auto model = scalar_model(0.9, 0.0, 1.0, 0.0, 0.5, 0.5, 0.0, 1.0);
  const auto data = model::simulate_truth(model, 5, 17);
  truefilter::GridPolicy policy;
  const MeanFieldPath mf = mean_field_path(model, data, policy);

  std::vector<double> sqrtn_d, zs, ns;
  for (const int n : {128, 512, 2048}) {
    const auto diag = coupled_diagnostics(model, data, n, 555, 40, mf);
    for (std::size_t p = 0; p < diag.p_orders.size(); ++p)
      CHECK(diag.D[0][p] == 0.0);
    sqrtn_d.push_back(std::sqrt(double(n)) * diag.D[5][1]);
    zs.push_back(diag.Z[5]);
    ns.push_back(double(n));
    CHECK(diag.S[5][0] > 0.0);
  }
  const double ratio = *std::max_element(sqrtn_d.begin(), sqrtn_d.end()) /
                       *std::min_element(sqrtn_d.begin(), sqrtn_d.end());
  CHECK(ratio <= 3.0);

  // Covariance LLN rate in N.
  const double slope = harness::fit_rate(ns, zs).slope;
  CHECK(slope > -0.65);
  CHECK(slope < -0.35);
}

TEST_CASE("mc_rate_experiment") {
  const auto model = scalar_model(0.9, 0.0, 1.0, 0.0, 0.5, 0.5, 0.0, 1.0);
  const auto data = model::simulate_truth(model, 5, 23);
  truefilter::GridPolicy policy;

  CHECK_THROWS_AS(mc_rate_experiment(model, data, {64, 128}, 10,
                                     {Observable::coordinate(0)}, Reference::kalman,
                                     policy, 1),
                  UsageError);

  // Constant observables carry no Monte Carlo error at all.
  const auto const_report =
      mc_rate_experiment(model, data, {16, 32, 64}, 5, {Observable::constant()},
                         Reference::kalman, policy, 1);
  for (const double r : const_report.tables[0].rmse) CHECK(r == 0.0);

  const auto report = mc_rate_experiment(
      model, data, {64, 256, 1024}, 50,
      {Observable::coordinate(0), Observable::squared_norm()}, Reference::kalman,
      policy, 99);
  std::vector<double> xs = {64.0, 256.0, 1024.0};
  for (const auto& table : report.tables) {
    const auto fit = harness::fit_rate_bootstrap(xs, table.values,
                                                 table.reference_value, 500, 7);
    CHECK(fit.slope > -0.75);
    CHECK(fit.slope < -0.25);
    CHECK(fit.has_ci);
    CHECK(fit.ci_lo <= fit.slope);
    CHECK(fit.ci_hi >= fit.slope);
  }
}

TEST_CASE("combined nonlinear reference uses the grids") {
  const auto model = scalar_model_perturbed(0.8, 0.0, 0.1, model::PerturbationKind::sine,
                                            1.0, 0.0, 0.5, 0.5, 0.0, 1.0);
  const auto data = model::simulate_truth(model, 2, 31);
  truefilter::GridPolicy policy;
  policy.u_axes = {measures::GridAxis{-12.0, 12.0, 512}};
  policy.y_nodes_per_dim = 256;
  const auto report =
      mc_rate_experiment(model, data, {64, 128, 256}, 10, {Observable::coordinate(0)},
                         Reference::truefilter, policy, 5);
  CHECK(std::isfinite(report.tables[0].reference_value));
  for (const double r : report.tables[0].rmse) CHECK(r > 0.0);
}
