#include <doctest.h>

#include <cmath>
#include <vector>

#include "enkflab/parallel.hpp"
#include "enkflab/rng.hpp"

using namespace enkflab;
using rng::Role;

TEST_CASE("draws are pure functions of the stream tuple") {
  const double a = rng::normal(42, 3, 17, 5, Role::dynamics, 2);
  const double b = rng::normal(42, 3, 17, 5, Role::dynamics, 2);
  CHECK(a == b);

  CHECK(rng::normal(42, 3, 17, 5, Role::dynamics, 2) !=
        rng::normal(42, 3, 17, 5, Role::observation, 2));
  CHECK(rng::normal(42, 3, 17, 5, Role::dynamics, 2) !=
        rng::normal(42, 3, 18, 5, Role::dynamics, 2));
  CHECK(rng::normal(42, 3, 17, 6, Role::dynamics, 2) !=
        rng::normal(42, 3, 17, 5, Role::dynamics, 2));
  CHECK(rng::normal(43, 3, 17, 5, Role::dynamics, 2) !=
        rng::normal(42, 3, 17, 5, Role::dynamics, 2));
}

TEST_CASE("normal stream has standard moments") {
  const int n = 100000;
  double sum = 0.0, sum2 = 0.0, sum3 = 0.0;
  for (int i = 0; i < n; ++i) {
    const double z = rng::normal(7, 0, std::uint32_t(i), 0, Role::init, 0);
    sum += z;
    sum2 += z * z;
    sum3 += z * z * z;
  }
  const double mean = sum / n;
  const double var = sum2 / n - mean * mean;
  const double skew = sum3 / n;
  CHECK(std::abs(mean) < 4.0 / std::sqrt(double(n)));
  CHECK(std::abs(var - 1.0) < 4.0 * std::sqrt(2.0 / n));
  CHECK(std::abs(skew) < 4.0 * std::sqrt(15.0 / n));
}

TEST_CASE("role streams are uncorrelated") {
  const int n = 10000;
  double sxy = 0.0, sx = 0.0, sy = 0.0, sxx = 0.0, syy = 0.0;
  for (int i = 0; i < n; ++i) {
    const double x = rng::normal(11, std::uint32_t(i), 0, 0, Role::dynamics, 0);
    const double y = rng::normal(11, std::uint32_t(i), 0, 1, Role::observation, 0);
    sx += x;
    sy += y;
    sxx += x * x;
    syy += y * y;
    sxy += x * y;
  }
  const double corr = (n * sxy - sx * sy) /
                      std::sqrt((n * sxx - sx * sx) * (n * syy - sy * sy));
  CHECK(std::abs(corr) < 4.0 / std::sqrt(double(n)));
}

TEST_CASE("uniform01 stays strictly inside the unit interval") {
  for (int i = 0; i < 1000; ++i) {
    const double u = rng::uniform01(5, 0, 0, std::uint32_t(i), Role::scramble, 0);
    CHECK(u > 0.0);
    CHECK(u < 1.0);
  }
}

TEST_CASE("parallel fills are identical across thread counts") {
  const int n = 4096;
  std::vector<double> one(n), four(n);
  parallel_for(n, [&](std::int64_t i) {
    one[i] = rng::normal(99, 0, std::uint32_t(i), 3, Role::dynamics, 1);
  }, 1);
  parallel_for(n, [&](std::int64_t i) {
    four[i] = rng::normal(99, 0, std::uint32_t(i), 3, Role::dynamics, 1);
  }, 4);
  CHECK(one == four);
}
