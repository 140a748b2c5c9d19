#include <doctest.h>

#include <cmath>

#include "enkflab/inequalities.hpp"

using namespace enkflab::inequalities;

namespace {
constexpr int kInstances = 12;
constexpr std::uint64_t kSeed = 314159;
constexpr double kSlack = 1e-10;

void check_suite(const SuiteReport& report, const char* name) {
  INFO(name << ": min margin " << report.min_asserted_margin());
  CHECK(report.pass(kSlack));
  CHECK_FALSE(report.rows.empty());
}
}  // namespace

TEST_CASE("forecast moment bounds hold on random models") {
  check_suite(predict_moment_bounds(kInstances, kSeed), "predict_moment_bounds");
}

TEST_CASE("lifted covariance bounds hold on random models") {
  check_suite(lift_covariance_bounds(kInstances, kSeed), "lift_covariance_bounds");
}

TEST_CASE("weighted TV controls mean and covariance gaps") {
  check_suite(tv_moment_control(kInstances, kSeed), "tv_moment_control");
}

TEST_CASE("off-center second moments dominate the covariance") {
  const SuiteReport report = psd_centering_gap(50, kSeed);
  for (const auto& row : report.rows) CHECK(row.margin >= -1e-12);
}

TEST_CASE("prediction operator is Lipschitz in weighted TV") {
  check_suite(predict_lipschitz(kInstances, kSeed), "predict_lipschitz");
}

TEST_CASE("lift operator is Lipschitz in joint weighted TV") {
  check_suite(lift_lipschitz(kInstances, kSeed), "lift_lipschitz");
}

TEST_CASE("analysis step obeys the normalizer moment recursion") {
  check_suite(filter_moment_recursion(kInstances, kSeed), "filter_moment_recursion");
}

TEST_CASE("mean-field step obeys the moment growth envelope") {
  check_suite(transport_moment_recursion(kInstances, kSeed),
              "transport_moment_recursion");
}

TEST_CASE("forecast response is linear in the perturbation amplitude") {
  const SuiteReport report = perturbation_linearity(kInstances, kSeed);
  check_suite(report, "perturbation_linearity");
  for (const auto& row : report.rows) {
    CHECK(row.value == doctest::Approx(1.0).epsilon(0.16));
  }
}

TEST_CASE("transport stability factor is finite and reported") {
  const SuiteReport report = transport_stability(6, kSeed);
  for (const auto& row : report.rows) {
    CHECK_FALSE(row.asserted);
    CHECK(std::isfinite(row.value));
    CHECK(row.value > 0.0);
  }
}
