#include <doctest.h>

#include <cmath>
#include <sstream>

#include "enkflab/errors.hpp"
#include "enkflab/measures.hpp"
#include "enkflab/rng.hpp"
#include "test_support.hpp"

using namespace enkflab;
using namespace enkflab::measures;
using testsupport::adaptive_simpson;
using testsupport::gauss_pdf;
using testsupport::render1d;

namespace {

GridMeasure mixture_grid(const std::vector<double>& means,
                         const std::vector<double>& vars,
                         const std::vector<double>& weights, double lo, double hi,
                         int n) {
  GridAxis axis{lo, hi, n};
  Eigen::ArrayXd density(n);
  for (int i = 0; i < n; ++i) {
    double v = 0.0;
    for (std::size_t c = 0; c < means.size(); ++c)
      v += weights[c] * gauss_pdf(axis.node(i), means[c], vars[c]);
    density[i] = v;
  }
  GridMeasure out({axis}, density);
  out.normalize();
  return out;
}

}  // namespace

TEST_CASE("gaussian polynomial moments") {
  GaussianMeasure std2(Eigen::VectorXd::Zero(2), Eigen::MatrixXd::Identity(2, 2));
  CHECK(moment_q(std2, 2) == doctest::Approx(2.0).epsilon(1e-14));

  GaussianMeasure std1(Eigen::VectorXd::Zero(1), Eigen::MatrixXd::Identity(1, 1));
  CHECK(moment_q(std1, 4) == doctest::Approx(3.0).epsilon(1e-14));

  // 1D with nonzero mean, checked against adaptive quadrature.
  GaussianMeasure g(Eigen::VectorXd::Constant(1, 0.7),
                    Eigen::MatrixXd::Constant(1, 1, 1.69));
  for (const int q : {1, 2, 3, 4, 6}) {
    const double oracle = adaptive_simpson(
        [&](double x) { return std::pow(std::abs(x), q) * gauss_pdf(x, 0.7, 1.69); },
        -20.0, 20.0, 1e-12);
    CHECK(moment_q(g, q) == doctest::Approx(oracle).epsilon(1e-10));
  }
}

TEST_CASE("grid moment matches the closed form") {
  const GridMeasure g = render1d(0.0, 1.0, -10.0, 10.0, 4096);
  CHECK(std::abs(moment_q(g, 2) - 1.0) < 1e-8);
}

TEST_CASE("grid moment guards against truncation") {
  // Heavy grid truncation: N(0,1) chopped at +-1.5 keeps boundary mass high.
  const GridMeasure g = render1d(0.0, 1.0, -1.5, 1.5, 64);
  CHECK_THROWS_AS(moment_q(g, 4), TruncationError);
}

TEST_CASE("mean and covariance per representation") {
  GaussianMeasure g(Eigen::VectorXd::Constant(1, 1.5),
                    Eigen::MatrixXd::Constant(1, 1, 2.5));
  auto [gm, gc] = mean_cov(g);
  CHECK(gm[0] == 1.5);
  CHECK(gc(0, 0) == 2.5);

  Eigen::MatrixXd pts(2, 1);
  pts << -1.0, 1.0;
  auto [em, ec] = mean_cov(EmpiricalMeasure(pts));
  CHECK(em[0] == doctest::Approx(0.0));
  CHECK(ec(0, 0) == doctest::Approx(1.0));  // population 1/N normalization

  const GridMeasure grid = render1d(1.0, 2.0, -12.0, 14.0, 4096);
  auto [mm, mc] = mean_cov(grid);
  CHECK(mm[0] == doctest::Approx(1.0).epsilon(1e-8));
  CHECK(mc(0, 0) == doctest::Approx(2.0).epsilon(1e-8));
}

TEST_CASE("joint blocks") {
  // Product measure: independent coordinates, zero cross-covariance.
  GaussianMeasure joint2(Eigen::VectorXd::Zero(2), Eigen::MatrixXd::Identity(2, 2));
  const GridMeasure grid = render_gaussian(
      joint2, {GridAxis{-8.0, 8.0, 128}, GridAxis{-8.0, 8.0, 128}});
  const JointMoments jm = joint_blocks(grid, 1);
  CHECK(std::abs(jm.c_uy(0, 0)) < 1e-8);
  CHECK(jm.c_uu(0, 0) == doctest::Approx(1.0).epsilon(1e-6));

  Eigen::MatrixXd u(2, 1), y(2, 1);
  u << 0.0, 1.0;
  y << 0.0, 1.0;
  const JointMoments pm = joint_blocks(u, y);
  CHECK(pm.c_uu(0, 0) == doctest::Approx(0.25));
  CHECK(pm.c_uy(0, 0) == doctest::Approx(0.25));
  CHECK(pm.c_yy(0, 0) == doctest::Approx(0.25));

  // Lift of N(0,1) through h(u) = 2u with unit observation noise.
  GridAxis ua{-10.0, 10.0, 256}, ya{-24.0, 24.0, 256};
  Eigen::ArrayXd density(256 * 256);
  for (int i = 0; i < 256; ++i)
    for (int j = 0; j < 256; ++j)
      density[i * 256 + j] =
          gauss_pdf(ua.node(i), 0.0, 1.0) * gauss_pdf(ya.node(j), 2.0 * ua.node(i), 1.0);
  GridMeasure lifted({ua, ya}, density);
  lifted.normalize();
  const JointMoments lm = joint_blocks(lifted, 1);
  CHECK(lm.c_uy(0, 0) == doctest::Approx(2.0).epsilon(1e-6));
  CHECK(lm.c_yy(0, 0) == doctest::Approx(5.0).epsilon(1e-6));
}

TEST_CASE("gaussian projection") {
  GaussianMeasure g(Eigen::VectorXd::Constant(1, 0.3),
                    Eigen::MatrixXd::Constant(1, 1, 0.9));
  const GaussianMeasure pg = gaussian_projection(g);
  CHECK(pg.mean[0] == 0.3);
  CHECK(pg.cov(0, 0) == 0.9);

  Eigen::MatrixXd pts(2, 1);
  pts << -1.0, 1.0;
  const GaussianMeasure pe = gaussian_projection(EmpiricalMeasure(pts));
  CHECK(pe.mean[0] == doctest::Approx(0.0));
  CHECK(pe.cov(0, 0) == doctest::Approx(1.0));

  // Bimodal mixture: mean 0, variance 0.5 + 4 = 4.5.
  const GridMeasure bimodal =
      mixture_grid({-2.0, 2.0}, {0.5, 0.5}, {0.5, 0.5}, -14.0, 14.0, 4096);
  const GaussianMeasure pb = gaussian_projection(bimodal);
  CHECK(pb.mean[0] == doctest::Approx(0.0).epsilon(1e-6));
  CHECK(std::abs(pb.cov(0, 0) - 4.5) < 1e-6);

  // Projection preserves mean and covariance exactly.
  auto [m1, c1] = mean_cov(bimodal);
  auto [m2, c2] = mean_cov(pb);
  CHECK((m1 - m2).norm() < 1e-12);
  CHECK((c1 - c2).norm() < 1e-12);
}

TEST_CASE("weighted tv against an adaptive quadrature oracle") {
  const int n = 8192;
  const GridMeasure a = render1d(0.0, 1.0, -12.0, 12.0, n);
  const GridMeasure b = render1d(1.0, 1.0, -12.0, 12.0, n);
  CHECK(weighted_tv(a, a) == 0.0);

  const double frozen = 2.61875526626873;  // adaptive quadrature of g|rho1-rho2|
  const double oracle =
      adaptive_simpson(
          [](double v) {
            return (1.0 + v * v) *
                   std::abs(gauss_pdf(v, 0.0, 1.0) - gauss_pdf(v, 1.0, 1.0));
          },
          -12.0, 0.5, 1e-11) +
      adaptive_simpson(
          [](double v) {
            return (1.0 + v * v) *
                   std::abs(gauss_pdf(v, 0.0, 1.0) - gauss_pdf(v, 1.0, 1.0));
          },
          0.5, 12.0, 1e-11);
  CHECK(oracle == doctest::Approx(frozen).epsilon(1e-9));
  CHECK(std::abs(weighted_tv(a, b) - oracle) < 1e-6);

  // Monotone in the mean shift.
  double prev = 0.0;
  for (const double m : {0.1, 0.2, 0.4}) {
    const double d = weighted_tv(a, render1d(m, 1.0, -12.0, 12.0, n));
    CHECK(d > prev);
    prev = d;
  }

  const GridMeasure coarse = render1d(0.0, 1.0, -12.0, 12.0, 1024);
  CHECK_THROWS_AS(weighted_tv(a, coarse), UsageError);
}

TEST_CASE("weighted tv self-convergence under refinement") {
  // The integrand is kinked where the densities cross, so a single pair's
  // midpoint error oscillates with the kink's position inside a cell. The
  // second-order envelope shows cleanly on a batch average and per
  // quadrupling: two doublings must cut the averaged error to a quarter.
  const std::vector<std::array<double, 4>> pairs = {
      {0.0, 1.0, 0.5, 1.2}, {-0.4, 0.8, 0.3, 1.1}, {0.2, 1.4, -0.1, 0.7},
      {0.7, 1.0, -0.6, 1.3}, {0.0, 0.9, 0.1, 1.6}, {-0.8, 1.2, 0.4, 0.9}};
  auto err_at = [&](int n) {
    double acc = 0.0;
    for (const auto& p : pairs) {
      const double fine =
          weighted_tv(render1d(p[0], p[1], -12.0, 12.0, 1 << 14),
                      render1d(p[2], p[3], -12.0, 12.0, 1 << 14));
      acc += std::abs(weighted_tv(render1d(p[0], p[1], -12.0, 12.0, n),
                                  render1d(p[2], p[3], -12.0, 12.0, n)) -
                      fine);
    }
    return acc / pairs.size();
  };
  const double e64 = err_at(64);
  const double e256 = err_at(256);
  const double e1024 = err_at(1024);
  CHECK(e256 <= 0.25 * e64);
  CHECK(e1024 <= 0.25 * e256);
}

TEST_CASE("metric axioms on random grid densities") {
  for (int trial = 0; trial < 25; ++trial) {
    auto rnd = [&](int k) {
      return 0.5 + rng::uniform01(1234, 0, std::uint32_t(trial), 0,
                                  rng::Role::scramble, std::uint32_t(k));
    };
    const GridMeasure m1 = mixture_grid({-rnd(0), rnd(1)}, {rnd(2), rnd(3)},
                                        {rnd(4), rnd(5)}, -16.0, 16.0, 512);
    const GridMeasure m2 = mixture_grid({rnd(6), -rnd(7)}, {rnd(8), rnd(9)},
                                        {rnd(10), rnd(11)}, -16.0, 16.0, 512);
    const GridMeasure m3 = mixture_grid({rnd(12), rnd(13) - 2.0}, {rnd(14), rnd(15)},
                                        {rnd(16), rnd(17)}, -16.0, 16.0, 512);
    const double d12 = weighted_tv(m1, m2);
    const double d21 = weighted_tv(m2, m1);
    CHECK(d12 == d21);
    CHECK(weighted_tv(m1, m3) <= d12 + weighted_tv(m2, m3) + 1e-10);
  }
}

TEST_CASE("observable errors") {
  GaussianMeasure a(Eigen::VectorXd::Zero(1), Eigen::MatrixXd::Identity(1, 1));
  GaussianMeasure b(Eigen::VectorXd::Constant(1, 1.0), Eigen::MatrixXd::Identity(1, 1));
  GaussianMeasure c(Eigen::VectorXd::Zero(1), Eigen::MatrixXd::Constant(1, 1, 2.0));
  const Observable coord = Observable::coordinate(0);
  const Observable sq = Observable::squared_norm();
  CHECK(observable_error(a, a, coord) == 0.0);
  CHECK(observable_error(a, b, coord) == doctest::Approx(1.0));
  CHECK(observable_error(a, c, sq) == doctest::Approx(1.0));
  CHECK(Observable::parse("monomial:0,0").id() == "monomial:0,0");
  CHECK_THROWS_AS(Observable::parse("cubic"), UsageError);
}

TEST_CASE("membership in P_R") {
  GaussianMeasure id2(Eigen::VectorXd::Zero(2), Eigen::MatrixXd::Identity(2, 2));
  CHECK(in_P_R(id2, 1.0));
  GaussianMeasure wide(Eigen::VectorXd::Zero(2), 4.0 * Eigen::MatrixXd::Identity(2, 2));
  CHECK_FALSE(in_P_R(wide, 1.0));
  CHECK(in_P_R(wide, 2.0));
  CHECK_THROWS_AS(in_P_R(id2, 0.5), UsageError);
  CHECK(minimal_P_R(wide) == doctest::Approx(2.0));
  CHECK(in_P_R(wide, minimal_P_R(wide)));
}

TEST_CASE("binary and csv serialization round trip") {
  for (int trial = 0; trial < 5; ++trial) {
    auto rnd = [&](int k) {
      return 0.5 + rng::uniform01(77, 0, std::uint32_t(trial), 0, rng::Role::scramble,
                                  std::uint32_t(k));
    };
    const GridMeasure g = mixture_grid({rnd(0), -rnd(1)}, {rnd(2), rnd(3)},
                                       {rnd(4), rnd(5)}, -15.0, 15.0, 257);
    std::stringstream buf;
    write_binary(g, buf);
    const GridMeasure back = read_binary(buf);
    REQUIRE(back.axes().size() == g.axes().size());
    CHECK(back.axes()[0].lo == g.axes()[0].lo);
    CHECK(back.axes()[0].n == g.axes()[0].n);
    CHECK((back.density() == g.density()).all());
  }

  const GridMeasure g = render1d(0.0, 1.0, -2.0, 2.0, 4);
  std::ostringstream csv;
  write_csv(g, csv);
  CHECK(csv.str().rfind("x0,density\r\n", 0) == 0);
}

TEST_CASE("degenerate covariance is rejected") {
  Eigen::MatrixXd singular = Eigen::MatrixXd::Zero(2, 2);
  singular(0, 0) = 1.0;
  CHECK_THROWS_AS(GaussianMeasure(Eigen::VectorXd::Zero(2), singular),
                  DegenerateError);
}
