#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace enkflab::inequalities {

// One checked inequality instance. margin = bound - value, nonnegative up to
// numerical slack when the inequality holds. Rows with asserted = false are
// reported measurements (no bound from the theory is claimed).
struct InstanceResult {
  std::string suite;
  int instance = 0;
  double value = 0.0;
  double bound = 0.0;
  double margin = 0.0;
  bool asserted = true;
};

struct SuiteReport {
  std::vector<InstanceResult> rows;

  double min_asserted_margin() const;
  bool pass(double slack) const { return min_asserted_margin() >= -slack; }
  void append(SuiteReport other);
};

// Forecast moment bounds: mean growth and covariance sandwich of P mu.
SuiteReport predict_moment_bounds(int instances, std::uint64_t seed);

// Joint moment bounds of the lifted forecast: covariance sandwich,
// C_yy >= Gamma, and membership in P_R at the theoretical radius.
SuiteReport lift_covariance_bounds(int instances, std::uint64_t seed);

// Mean and covariance differences controlled by the weighted TV distance.
SuiteReport tv_moment_control(int instances, std::uint64_t seed);

// Second-moment matrix about any point dominates the covariance.
SuiteReport psd_centering_gap(int instances, std::uint64_t seed);

// Lipschitz bound of the prediction operator in weighted TV.
SuiteReport predict_lipschitz(int instances, std::uint64_t seed);

// Lipschitz bound of the lift operator in joint weighted TV.
SuiteReport lift_lipschitz(int instances, std::uint64_t seed);

// Along short filter runs: the analysis step inflates polynomial moments by
// at most the inverse normalizer, itself bounded below via Jensen.
SuiteReport filter_moment_recursion(int instances, std::uint64_t seed);

// Along short mean-field runs: one-step moment growth stays inside the
// (1 + M_q)^{2q+1} envelope.
SuiteReport transport_moment_recursion(int instances, std::uint64_t seed);

// Linear-in-eps response of the forecast to a bounded field perturbation
// (log-log slope within 1 +- 0.15).
SuiteReport perturbation_linearity(int instances, std::uint64_t seed);

// Transport-map stability factor, measured and reported only.
SuiteReport transport_stability(int instances, std::uint64_t seed);

// Every suite at the given instance count, concatenated.
SuiteReport run_all(int instances, std::uint64_t seed);

}  // namespace enkflab::inequalities
