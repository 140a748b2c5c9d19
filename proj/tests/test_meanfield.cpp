#include <doctest.h>

#include <cmath>

#include "enkflab/errors.hpp"
#include "enkflab/meanfield.hpp"
#include "enkflab/rng.hpp"
#include "test_support.hpp"

using namespace enkflab;
using namespace enkflab::meanfield;
using measures::GaussianMeasure;
using measures::GridAxis;
using measures::GridMeasure;
using measures::JointMoments;
using testsupport::render1d;
using testsupport::scalar_model;
using testsupport::scalar_model_perturbed;

namespace {
JointMoments scalar_moments(double c_uy, double c_yy) {
  JointMoments jm;
  jm.m_u = Eigen::VectorXd::Zero(1);
  jm.m_y = Eigen::VectorXd::Zero(1);
  jm.c_uu = Eigen::MatrixXd::Constant(1, 1, 1.0);
  jm.c_uy = Eigen::MatrixXd::Constant(1, 1, c_uy);
  jm.c_yy = Eigen::MatrixXd::Constant(1, 1, c_yy);
  return jm;
}
}  // namespace

TEST_CASE("kalman_gain") {
  CHECK(kalman_gain(scalar_moments(1.0, 2.0)).A(0, 0) == doctest::Approx(0.5));
  CHECK(kalman_gain(scalar_moments(0.0, 2.0)).A(0, 0) == 0.0);
  // The forecast gain of the scalar textbook example.
  CHECK(kalman_gain(scalar_moments(2.0, 3.0)).A(0, 0) == doctest::Approx(2.0 / 3.0));
  CHECK_THROWS_AS(kalman_gain(scalar_moments(1.0, 1e-15)), DegenerateError);
}

TEST_CASE("transport map") {
  const KalmanGain gain = kalman_gain(scalar_moments(1.0, 2.0));
  const Eigen::VectorXd u = Eigen::VectorXd::Constant(1, 1.0);
  CHECK(transport(u, Eigen::VectorXd::Constant(1, 0.7), gain,
                  Eigen::VectorXd::Constant(1, 0.7))[0] == 1.0);

  const KalmanGain half = kalman_gain(scalar_moments(1.0, 2.0));
  CHECK(transport(Eigen::VectorXd::Constant(1, 1.0),
                  Eigen::VectorXd::Constant(1, 0.5), half,
                  Eigen::VectorXd::Constant(1, 1.5))[0] == doctest::Approx(1.5));

  // Affinity in (u, y) for fixed gain and datum.
  for (int trial = 0; trial < 20; ++trial) {
    auto r = [&](int k) {
      return 2.0 * rng::uniform01(3, 0, std::uint32_t(trial), 0, rng::Role::scramble,
                                  std::uint32_t(k)) -
             1.0;
    };
    const double alpha = 0.5 * (r(0) + 1.0);
    Eigen::VectorXd u1 = Eigen::VectorXd::Constant(1, r(1));
    Eigen::VectorXd u2 = Eigen::VectorXd::Constant(1, r(2));
    Eigen::VectorXd y1 = Eigen::VectorXd::Constant(1, r(3));
    Eigen::VectorXd y2 = Eigen::VectorXd::Constant(1, r(4));
    Eigen::VectorXd z = Eigen::VectorXd::Constant(1, r(5));
    const double lhs =
        transport(alpha * u1 + (1 - alpha) * u2, alpha * y1 + (1 - alpha) * y2, gain,
                  z)[0];
    const double rhs = alpha * transport(u1, y1, gain, z)[0] +
                       (1 - alpha) * transport(u2, y2, gain, z)[0];
    CHECK(lhs == doctest::Approx(rhs).epsilon(1e-14));
  }
}

TEST_CASE("gaussian step equals the Kalman update") {
  const auto model = scalar_model(1.0, 0.0, 1.0, 0.0, 1.0, 1.0, 0.0, 1.0);
  const GaussianMeasure mu0(Eigen::VectorXd::Zero(1), Eigen::MatrixXd::Identity(1, 1));
  const GaussianMeasure post =
      mf_step_gaussian(mu0, Eigen::VectorXd::Constant(1, 1.0), model);
  CHECK(post.mean[0] == doctest::Approx(2.0 / 3.0).epsilon(1e-14));
  CHECK(post.cov(0, 0) == doctest::Approx(2.0 / 3.0).epsilon(1e-14));

  // Zero observation operator: forecast returned unchanged.
  const auto blind = scalar_model(1.0, 0.0, 0.0, 0.0, 1.0, 1.0, 0.0, 1.0);
  const GaussianMeasure fc =
      mf_step_gaussian(mu0, Eigen::VectorXd::Constant(1, 5.0), blind);
  CHECK(fc.mean[0] == doctest::Approx(0.0));
  CHECK(fc.cov(0, 0) == doctest::Approx(2.0));

  // Covariance does not depend on the datum.
  const GaussianMeasure a =
      mf_step_gaussian(mu0, Eigen::VectorXd::Constant(1, -3.0), model);
  const GaussianMeasure b =
      mf_step_gaussian(mu0, Eigen::VectorXd::Constant(1, 7.0), model);
  CHECK(a.cov(0, 0) == b.cov(0, 0));

  const auto nonaffine = scalar_model_perturbed(
      0.9, 0.0, 0.1, model::PerturbationKind::sine, 1.0, 0.0, 0.5, 0.5, 0.0, 1.0);
  CHECK_THROWS_AS(mf_step_gaussian(mu0, Eigen::VectorXd::Zero(1), nonaffine),
                  UsageError);
}

TEST_CASE("grid step agrees with the Gaussian path on affine models") {
  const auto model = scalar_model(0.9, 0.0, 1.0, 0.0, 0.5, 0.5, 0.0, 1.0);
  const std::vector<GridAxis> axes{GridAxis{-12.0, 12.0, 2048}};
  const std::vector<GridAxis> y_axes{GridAxis{-14.0, 14.0, 512}};
  const GridMeasure mu = render1d(0.0, 1.0, -12.0, 12.0, 2048);
  const Eigen::VectorXd y_obs = Eigen::VectorXd::Constant(1, 0.8);

  MfStepDiag diag;
  const GridMeasure out = mf_step_grid(mu, y_obs, model, axes, y_axes, 1e-8, &diag);
  const GaussianMeasure ref = mf_step_gaussian(
      GaussianMeasure(Eigen::VectorXd::Zero(1), Eigen::MatrixXd::Identity(1, 1)),
      y_obs, model);
  auto [m, c] = measures::mean_cov(out);
  CHECK(std::abs(m[0] - ref.mean[0]) < 1e-4);
  CHECK(std::abs(c(0, 0) - ref.cov(0, 0)) < 1e-4);
  CHECK(diag.truncated_mass < 1e-6);
  CHECK(diag.gain_norm > 0.0);

  // Pushforward conserves mass up to the tracked loss.
  CHECK(std::abs(out.mass() - 1.0) < 1e-12);
}

TEST_CASE("grid step with zero gain returns the forecast") {
  // h independent of u makes C_uy vanish; transport is the identity in u.
  const auto deaf = scalar_model(0.9, 0.0, 0.0, 0.0, 0.5, 0.5, 0.0, 1.0);
  const std::vector<GridAxis> axes{GridAxis{-12.0, 12.0, 1024}};
  const std::vector<GridAxis> y_axes{GridAxis{-8.0, 8.0, 256}};
  const GridMeasure mu = render1d(0.4, 0.8, -12.0, 12.0, 1024);
  const GridMeasure out =
      mf_step_grid(mu, Eigen::VectorXd::Constant(1, 3.0), deaf, axes, y_axes);
  const GridMeasure forecast = truefilter::predict_grid(mu, deaf, axes);
  CHECK((out.density() - forecast.density()).abs().maxCoeff() < 1e-10);
}

TEST_CASE("mf_run: affine path matches kalman_exact; J = 0 returns mu0") {
  const auto model = scalar_model(0.9, 0.0, 1.0, 0.0, 0.5, 0.5, 0.0, 1.0);
  const auto data = model::simulate_truth(model, 10, 21);
  truefilter::GridPolicy policy;
  const MfRunResult mf = mf_run(model, data, policy);
  REQUIRE(mf.gaussian_path);
  const auto kf = truefilter::kalman_exact(model, data);
  for (int j = 0; j <= 10; ++j) {
    CHECK(std::abs(mf.gaussians[j].mean[0] - kf[j].mean[0]) < 1e-12);
    CHECK(std::abs(mf.gaussians[j].cov(0, 0) - kf[j].cov(0, 0)) < 1e-12);
  }

  const auto data0 = model::simulate_truth(model, 0, 21);
  const MfRunResult mf0 = mf_run(model, data0, policy);
  CHECK(mf0.gaussians.size() == 1);
  CHECK(mf0.steps.empty());
}

TEST_CASE("mf_run: nonlinear model stays comparable to the true filter") {
  const auto model = scalar_model_perturbed(0.8, 0.0, 0.1, model::PerturbationKind::sine,
                                            1.0, 0.0, 0.5, 0.5, 0.0, 1.0);
  const auto data = model::simulate_truth(model, 3, 5);
  truefilter::GridPolicy policy;
  policy.u_axes = {GridAxis{-12.0, 12.0, 1024}};
  policy.y_nodes_per_dim = 384;
  const MfRunResult mf = mf_run(model, data, policy);
  REQUIRE_FALSE(mf.gaussian_path);
  const auto truth = truefilter::filter_run(model, data, policy);
  for (int j = 0; j <= 3; ++j) {
    const double dg = measures::weighted_tv(mf.grids[j], truth.measures[j]);
    CHECK(std::isfinite(dg));
    CHECK(dg < 1.0);
  }
}

TEST_CASE("conditioning and transport agree on Gaussians") {
  Eigen::MatrixXd cov(2, 2);
  cov << 2.0, 1.0, 1.0, 2.0;
  const GaussianMeasure joint(Eigen::VectorXd::Zero(2), cov);
  const EquivalenceReport rep =
      gaussian_equivalence_check(joint, 1, Eigen::VectorXd::Constant(1, 1.0));
  CHECK(rep.max_discrepancy() <= 1e-10);
  CHECK(rep.conditioned.mean[0] == doctest::Approx(0.5));
  CHECK(rep.conditioned.cov(0, 0) == doctest::Approx(1.5));

  // Independent blocks: both routes return the u-marginal.
  Eigen::MatrixXd diag = Eigen::MatrixXd::Identity(2, 2);
  diag(0, 0) = 1.7;
  const GaussianMeasure indep(Eigen::VectorXd::Constant(2, 0.4), diag);
  const EquivalenceReport rep2 =
      gaussian_equivalence_check(indep, 1, Eigen::VectorXd::Constant(1, -2.0));
  CHECK(rep2.conditioned.mean[0] == doctest::Approx(0.4));
  CHECK(rep2.conditioned.cov(0, 0) == doctest::Approx(1.7));
  CHECK(rep2.pushforward.mean[0] == doctest::Approx(0.4));

  // Randomized joints, d_u = 2, d_y = 1.
  for (int trial = 0; trial < 200; ++trial) {
    auto r = [&](int k) {
      return 2.0 * rng::uniform01(55, 0, std::uint32_t(trial), 0, rng::Role::scramble,
                                  std::uint32_t(k)) -
             1.0;
    };
    Eigen::MatrixXd a(3, 3);
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) a(i, j) = r(3 * i + j);
    Eigen::MatrixXd c = a * a.transpose() + 0.1 * Eigen::MatrixXd::Identity(3, 3);
    Eigen::VectorXd mean(3);
    mean << r(9), r(10), r(11);
    const GaussianMeasure g(mean, c);
    const EquivalenceReport rr =
        gaussian_equivalence_check(g, 2, Eigen::VectorXd::Constant(1, r(12)));
    CHECK(rr.max_discrepancy() <= 1e-8);
  }
}
