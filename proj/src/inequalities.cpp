#include "enkflab/inequalities.hpp"

#include <Eigen/Eigenvalues>
#include <cmath>
#include <limits>

#include "enkflab/errors.hpp"
#include "enkflab/meanfield.hpp"
#include "enkflab/measures.hpp"
#include "enkflab/model.hpp"
#include "enkflab/parallel.hpp"
#include "enkflab/rng.hpp"
#include "enkflab/truefilter.hpp"

namespace enkflab::inequalities {

using measures::GridAxis;
using measures::GridMeasure;
using model::ModelSpec;
using model::PerturbationKind;
using model::VectorFieldSpec;
using rng::Role;

namespace {

// Stream ids keep the suites' random instances disjoint.
enum SuiteId : std::uint32_t {
  kPredictBounds = 1,
  kLiftBounds,
  kTvControl,
  kPsdGap,
  kPredictLip,
  kLiftLip,
  kFilterRecursion,
  kTransportRecursion,
  kEpsLinearity,
  kTransportStability,
};

struct Draw {
  std::uint64_t seed;
  std::uint32_t suite;
  std::uint32_t instance;
  std::uint32_t k = 0;

  double u01() { return rng::uniform01(seed, suite, 0, instance, Role::scramble, k++); }
  double in(double lo, double hi) { return lo + (hi - lo) * u01(); }
  double signed_in(double lo, double hi) {
    const double v = in(lo, hi);
    return u01() < 0.5 ? -v : v;
  }
  int index(int n) { return static_cast<int>(u01() * n) % n; }
};

PerturbationKind random_perturbation(Draw& d) {
  switch (d.index(3)) {
    case 0:
      return PerturbationKind::sine;
    case 1:
      return PerturbationKind::tanh;
    default:
      return PerturbationKind::gaussian_bump;
  }
}

// 1D Gaussian mixture rendered on the axis; smooth, light-tailed test input.
GridMeasure random_mixture(Draw& d, const std::vector<GridAxis>& axes) {
  const int dim = static_cast<int>(axes.size());
  const int comps = 2 + d.index(2);
  std::vector<Eigen::VectorXd> means;
  std::vector<double> stds, weights;
  double wsum = 0.0;
  for (int c = 0; c < comps; ++c) {
    Eigen::VectorXd m(dim);
    for (int k = 0; k < dim; ++k) m[k] = d.signed_in(0.0, dim == 1 ? 3.0 : 2.0);
    means.push_back(m);
    stds.push_back(d.in(0.6, dim == 1 ? 2.0 : 1.5));
    const double w = d.in(0.2, 1.0);
    weights.push_back(w);
    wsum += w;
  }
  std::int64_t total = 1;
  for (const auto& a : axes) total *= a.n;
  Eigen::ArrayXd density = Eigen::ArrayXd::Zero(total);
  GridMeasure shape(axes, Eigen::ArrayXd::Ones(total));
  for (std::int64_t flat = 0; flat < total; ++flat) {
    const Eigen::VectorXd x = shape.node(flat);
    double v = 0.0;
    for (int c = 0; c < comps; ++c) {
      const double r2 = (x - means[c]).squaredNorm();
      const double s2 = stds[c] * stds[c];
      v += weights[c] / wsum * std::exp(-0.5 * r2 / s2) /
           std::pow(2.0 * M_PI * s2, 0.5 * dim);
    }
    density[flat] = v;
  }
  GridMeasure out(axes, std::move(density));
  out.normalize();
  return out;
}

ModelSpec random_model(Draw& d, bool perturb_dynamics, bool perturb_observation) {
  const double m = d.signed_in(0.2, 0.9);
  const double b = d.signed_in(0.0, 0.5);
  const double h = d.in(0.5, 1.5);
  const double w = d.signed_in(0.0, 0.5);
  const double sigma = d.in(0.4, 1.5);
  const double gamma = d.in(0.4, 1.5);

  VectorFieldSpec dyn =
      perturb_dynamics
          ? VectorFieldSpec::affine_plus_bounded(Eigen::MatrixXd::Constant(1, 1, m),
                                                 Eigen::VectorXd::Constant(1, b),
                                                 d.in(0.05, 0.3), random_perturbation(d))
          : VectorFieldSpec::affine(Eigen::MatrixXd::Constant(1, 1, m),
                                    Eigen::VectorXd::Constant(1, b));
  VectorFieldSpec obs =
      perturb_observation
          ? VectorFieldSpec::affine_plus_bounded(Eigen::MatrixXd::Constant(1, 1, h),
                                                 Eigen::VectorXd::Constant(1, w),
                                                 d.in(0.05, 0.2), random_perturbation(d))
          : VectorFieldSpec::affine(Eigen::MatrixXd::Constant(1, 1, h),
                                    Eigen::VectorXd::Constant(1, w));
  return ModelSpec::create(std::move(dyn), std::move(obs),
                           Eigen::MatrixXd::Constant(1, 1, sigma),
                           Eigen::MatrixXd::Constant(1, 1, gamma),
                           Eigen::VectorXd::Zero(1), Eigen::MatrixXd::Identity(1, 1));
}

double eig_min(const Eigen::MatrixXd& sym) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(sym);
  return es.eigenvalues().minCoeff();
}

double op_norm(const Eigen::MatrixXd& sym) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(sym);
  return es.eigenvalues().cwiseAbs().maxCoeff();
}

// Scalar inequalities are scored with margins relative to the bound scale so
// one absolute slack applies across suites.
InstanceResult scalar_row(const std::string& suite, int inst, double value,
                          double bound) {
  const double margin = (bound - value) / std::max(1.0, std::abs(bound));
  return {suite, inst, value, bound, margin, true};
}

InstanceResult psd_row(const std::string& suite, int inst, double smallest_eig) {
  return {suite, inst, smallest_eig, 0.0, smallest_eig, true};
}

double loglog_slope(const std::vector<double>& xs, const std::vector<double>& ys) {
  const int n = static_cast<int>(xs.size());
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (int i = 0; i < n; ++i) {
    const double lx = std::log(xs[i]);
    const double ly = std::log(ys[i]);
    sx += lx;
    sy += ly;
    sxx += lx * lx;
    sxy += lx * ly;
  }
  return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

const std::vector<GridAxis> kInAxes1d = {GridAxis{-24.0, 24.0, 1024}};
const std::vector<GridAxis> kOutAxes1d = {GridAxis{-36.0, 36.0, 1280}};

truefilter::GridPolicy suite_policy() {
  truefilter::GridPolicy policy;
  policy.u_axes = {GridAxis{-26.0, 26.0, 1024}};
  policy.y_nodes_per_dim = 512;
  return policy;
}

template <class Fn>
SuiteReport run_instances(int instances, Fn&& fn) {
  std::vector<std::vector<InstanceResult>> slots(instances);
  parallel_for(instances, [&](std::int64_t i) {
    slots[i] = fn(static_cast<int>(i));
  });
  SuiteReport report;
  for (auto& s : slots)
    report.rows.insert(report.rows.end(), s.begin(), s.end());
  return report;
}

}  // namespace

double SuiteReport::min_asserted_margin() const {
  double m = std::numeric_limits<double>::infinity();
  for (const auto& r : rows)
    if (r.asserted) m = std::min(m, r.margin);
  return m;
}

void SuiteReport::append(SuiteReport other) {
  rows.insert(rows.end(), other.rows.begin(), other.rows.end());
}

// ---------------------------------------------------------------------------
// Forecast moment bounds
// ---------------------------------------------------------------------------

SuiteReport predict_moment_bounds(int instances, std::uint64_t seed) {
  return run_instances(instances, [&](int inst) {
    Draw d{seed, kPredictBounds, std::uint32_t(inst)};
    const ModelSpec model = random_model(d, true, false);
    const GridMeasure mu = random_mixture(d, kInAxes1d);
    const double m1 = measures::moment_q(mu, 1);
    const double m2 = measures::moment_q(mu, 2);
    const GridMeasure pmu = truefilter::predict_grid(mu, model, kOutAxes1d);
    const auto [mean, cov] = measures::mean_cov(pmu);
    const double kappa = model.dynamics.growth_kappa();

    std::vector<InstanceResult> rows;
    rows.push_back(scalar_row("predict_mean_growth", inst, mean.norm(),
                              kappa * (1.0 + m1)));
    rows.push_back(psd_row("predict_cov_lower", inst, eig_min(cov - model.sigma)));
    const Eigen::MatrixXd upper =
        model.sigma + 2.0 * kappa * kappa * (1.0 + m2) *
                          Eigen::MatrixXd::Identity(1, 1);
    rows.push_back(psd_row("predict_cov_upper", inst, eig_min(upper - cov)));
    return rows;
  });
}

// ---------------------------------------------------------------------------
// Lifted forecast covariance bounds
// ---------------------------------------------------------------------------

SuiteReport lift_covariance_bounds(int instances, std::uint64_t seed) {
  return run_instances(instances, [&](int inst) {
    Draw d{seed, kLiftBounds, std::uint32_t(inst)};
    const ModelSpec model = random_model(d, true, d.u01() < 0.5);
    const GridMeasure mu = random_mixture(d, kInAxes1d);
    const double m1 = measures::moment_q(mu, 1);
    const double m2 = measures::moment_q(mu, 2);

    const GridMeasure pmu = truefilter::predict_grid(mu, model, kOutAxes1d);
    truefilter::GridPolicy policy;
    policy.y_nodes_per_dim = 512;
    const auto y_axes = truefilter::derive_y_axes(kOutAxes1d, model, policy);
    const GridMeasure joint = truefilter::lift_grid(pmu, model, y_axes);
    const auto [mean, cov] = measures::mean_cov(joint);

    const double kp = model.dynamics.growth_kappa();
    const double kh = model.observation.growth_kappa();
    const double tr_sigma = model.sigma.trace();
    const double push = 1.0 + tr_sigma + 2.0 * kp * kp * (1.0 + m2);

    std::vector<InstanceResult> rows;
    rows.push_back(psd_row("lift_cyy_minus_gamma", inst,
                           eig_min(cov.bottomRightCorner(1, 1) - model.gamma)));

    Eigen::MatrixXd upper = Eigen::MatrixXd::Zero(2, 2);
    upper(0, 0) = 4.0 * kp * kp * (1.0 + m2) + 2.0 * model.sigma(0, 0);
    upper(1, 1) = 4.0 * kh * kh * push + model.gamma(0, 0);
    rows.push_back(psd_row("lift_cov_upper", inst, eig_min(upper - cov)));

    const double sig = model.sigma_min_eig;
    const double gam = model.gamma_min_eig;
    const double big = 4.0 * kh * kh * push;
    const double floor_c = gam * std::min(2.0 * sig, gam + big) / (2.0 * gam + 2.0 * big);
    rows.push_back(psd_row(
        "lift_cov_lower", inst,
        eig_min(cov - floor_c * Eigen::MatrixXd::Identity(2, 2))));

    // Minimal P_R radius against the radius implied by the bounds above.
    const double mean_bound = std::sqrt(kp * kp * (1.0 + m1) * (1.0 + m1) +
                                        2.0 * kh * kh * push);
    const double r_theory =
        std::max({1.0, mean_bound, std::sqrt(upper.diagonal().maxCoeff()),
                  1.0 / std::sqrt(floor_c)});
    rows.push_back(scalar_row("lift_p_r_radius", inst,
                              measures::minimal_P_R(joint), r_theory));
    return rows;
  });
}

// ---------------------------------------------------------------------------
// Weighted TV controls moments
// ---------------------------------------------------------------------------

SuiteReport tv_moment_control(int instances, std::uint64_t seed) {
  return run_instances(instances, [&](int inst) {
    Draw d{seed, kTvControl, std::uint32_t(inst)};
    const bool two_d = inst % 5 == 4;
    const std::vector<GridAxis> axes =
        two_d ? std::vector<GridAxis>{GridAxis{-12.0, 12.0, 128},
                                      GridAxis{-12.0, 12.0, 128}}
              : kInAxes1d;
    const GridMeasure mu1 = random_mixture(d, axes);
    const GridMeasure mu2 = random_mixture(d, axes);
    const double dg = measures::weighted_tv(mu1, mu2);
    const auto [m1, c1] = measures::mean_cov(mu1);
    const auto [m2, c2] = measures::mean_cov(mu2);

    std::vector<InstanceResult> rows;
    rows.push_back(scalar_row("tv_mean_control", inst, (m1 - m2).norm(), 0.5 * dg));
    rows.push_back(scalar_row("tv_cov_control", inst, op_norm(c1 - c2),
                              (1.0 + 0.5 * (m1 + m2).norm()) * dg));
    return rows;
  });
}

// ---------------------------------------------------------------------------
// Second moment about a point dominates the covariance
// ---------------------------------------------------------------------------

SuiteReport psd_centering_gap(int instances, std::uint64_t seed) {
  return run_instances(instances, [&](int inst) {
    Draw d{seed, kPsdGap, std::uint32_t(inst)};
    const int dim = 1 + d.index(3);
    const int n = 16 + d.index(113);
    Eigen::MatrixXd x(n, dim);
    for (int i = 0; i < n; ++i)
      for (int k = 0; k < dim; ++k)
        x(i, k) = d.signed_in(0.0, 3.0) +
                  rng::normal(seed, kPsdGap, std::uint32_t(inst), std::uint32_t(i),
                              Role::scramble, std::uint32_t(k));
    Eigen::VectorXd a(dim);
    for (int k = 0; k < dim; ++k) a[k] = d.signed_in(0.0, 2.0);

    const measures::EmpiricalMeasure emp(x);
    const auto [mean, cov] = measures::mean_cov(emp);
    Eigen::MatrixXd s_a = Eigen::MatrixXd::Zero(dim, dim);
    for (int i = 0; i < n; ++i) {
      const Eigen::VectorXd dlt = x.row(i).transpose() - a;
      s_a.noalias() += dlt * dlt.transpose();
    }
    s_a /= double(n);
    return std::vector<InstanceResult>{
        psd_row("psd_centering_gap", inst, eig_min(s_a - cov))};
  });
}

// ---------------------------------------------------------------------------
// Lipschitz bounds of P and Q
// ---------------------------------------------------------------------------

SuiteReport predict_lipschitz(int instances, std::uint64_t seed) {
  return run_instances(instances, [&](int inst) {
    Draw d{seed, kPredictLip, std::uint32_t(inst)};
    const ModelSpec model = random_model(d, true, false);
    const GridMeasure mu = random_mixture(d, kInAxes1d);
    const GridMeasure nu = random_mixture(d, kInAxes1d);
    const GridMeasure pmu = truefilter::predict_grid(mu, model, kOutAxes1d);
    const GridMeasure pnu = truefilter::predict_grid(nu, model, kOutAxes1d);
    const double kappa = model.dynamics.growth_kappa();
    const double lip = 1.0 + 2.0 * kappa * kappa + model.sigma.trace();
    return std::vector<InstanceResult>{
        scalar_row("predict_lipschitz", inst, measures::weighted_tv(pmu, pnu),
                   lip * measures::weighted_tv(mu, nu))};
  });
}

SuiteReport lift_lipschitz(int instances, std::uint64_t seed) {
  return run_instances(instances, [&](int inst) {
    Draw d{seed, kLiftLip, std::uint32_t(inst)};
    const ModelSpec model = random_model(d, false, d.u01() < 0.5);
    const GridMeasure mu = random_mixture(d, kInAxes1d);
    const GridMeasure nu = random_mixture(d, kInAxes1d);
    truefilter::GridPolicy policy;
    policy.y_nodes_per_dim = 512;
    const auto y_axes = truefilter::derive_y_axes(kInAxes1d, model, policy);
    const GridMeasure qmu = truefilter::lift_grid(mu, model, y_axes);
    const GridMeasure qnu = truefilter::lift_grid(nu, model, y_axes);
    const double kappa = model.observation.growth_kappa();
    const double lip = 1.0 + 2.0 * kappa * kappa + model.gamma.trace();
    return std::vector<InstanceResult>{
        scalar_row("lift_lipschitz", inst, measures::weighted_tv(qmu, qnu),
                   lip * measures::weighted_tv(mu, nu))};
  });
}

// ---------------------------------------------------------------------------
// Moment recursions along filter runs
// ---------------------------------------------------------------------------

SuiteReport filter_moment_recursion(int instances, std::uint64_t seed) {
  return run_instances(instances, [&](int inst) {
    Draw d{seed, kFilterRecursion, std::uint32_t(inst)};
    const ModelSpec model = random_model(d, true, false);
    const int J = 3;
    const auto data = model::simulate_truth(model, J, seed ^ (0x9e3779b9u + inst));
    const auto policy = suite_policy();
    const auto axes = policy.u_axes;

    std::vector<InstanceResult> rows;
    GridMeasure mu = measures::render_gaussian(model.initial(), axes);
    const Eigen::MatrixXd gamma_inv = model.gamma.inverse();
    for (int j = 0; j < J; ++j) {
      const GridMeasure forecast = truefilter::predict_grid(mu, model, axes);
      const Eigen::VectorXd y = data.observations.row(j).transpose();
      double normalizer = 0.0;
      const GridMeasure posterior =
          truefilter::analysis_fused(forecast, y, model, &normalizer);
      // Jensen floor for the normalizer.
      const double mean_misfit = forecast.integrate([&](const Eigen::VectorXd& u) {
        const Eigen::VectorXd dlt = y - model.observation(u);
        return dlt.dot(gamma_inv * dlt);
      });
      rows.push_back(scalar_row("filter_normalizer_jensen", inst,
                                std::exp(-0.5 * mean_misfit), normalizer));
      for (const int q : {2, 4}) {
        const double lhs = measures::moment_q(posterior, q);
        const double rhs = measures::moment_q(forecast, q) / normalizer;
        rows.push_back(
            scalar_row("filter_moment_q" + std::to_string(q), inst, lhs, rhs));
      }
      mu = posterior;
    }
    return rows;
  });
}

SuiteReport transport_moment_recursion(int instances, std::uint64_t seed) {
  return run_instances(instances, [&](int inst) {
    Draw d{seed, kTransportRecursion, std::uint32_t(inst)};
    const ModelSpec model = random_model(d, true, false);
    const int J = 3;
    const auto data = model::simulate_truth(model, J, seed ^ (0x51ed2701u + inst));
    const auto mf = meanfield::mf_run(model, data, suite_policy());

    std::vector<InstanceResult> rows;
    for (int j = 0; j < J; ++j) {
      for (const int q : {2, 4}) {
        const double prev = measures::moment_q(mf.grids[j], q);
        const double next = measures::moment_q(mf.grids[j + 1], q);
        const double envelope = std::pow(1.0 + prev, 2 * q + 1);
        if (!std::isfinite(next)) {
          rows.push_back({"transport_moment_q" + std::to_string(q), inst, next,
                          envelope, -1.0, true});
          continue;
        }
        rows.push_back(scalar_row("transport_moment_q" + std::to_string(q), inst,
                                  next, envelope));
      }
    }
    return rows;
  });
}

// ---------------------------------------------------------------------------
// Linear-in-eps forecast response
// ---------------------------------------------------------------------------

SuiteReport perturbation_linearity(int instances, std::uint64_t seed) {
  return run_instances(instances, [&](int inst) {
    Draw d{seed, kEpsLinearity, std::uint32_t(inst)};
    const double m = d.signed_in(0.2, 0.9);
    const double b = d.signed_in(0.0, 0.5);
    const double sigma = d.in(0.4, 1.5);
    const PerturbationKind kind = random_perturbation(d);
    const GridMeasure mu = random_mixture(d, kInAxes1d);

    auto make_model = [&](double eps) {
      VectorFieldSpec dyn =
          eps == 0.0 ? VectorFieldSpec::affine(Eigen::MatrixXd::Constant(1, 1, m),
                                               Eigen::VectorXd::Constant(1, b))
                     : VectorFieldSpec::affine_plus_bounded(
                           Eigen::MatrixXd::Constant(1, 1, m),
                           Eigen::VectorXd::Constant(1, b), eps, kind);
      return ModelSpec::create(
          std::move(dyn),
          VectorFieldSpec::affine(Eigen::MatrixXd::Identity(1, 1),
                                  Eigen::VectorXd::Zero(1)),
          Eigen::MatrixXd::Constant(1, 1, sigma), Eigen::MatrixXd::Identity(1, 1),
          Eigen::VectorXd::Zero(1), Eigen::MatrixXd::Identity(1, 1));
    };

    const GridMeasure base = truefilter::predict_grid(mu, make_model(0.0), kOutAxes1d);
    const std::vector<double> eps = {0.02, 0.04, 0.08, 0.16, 0.32};
    std::vector<double> dg;
    for (const double e : eps)
      dg.push_back(measures::weighted_tv(
          base, truefilter::predict_grid(mu, make_model(e), kOutAxes1d)));
    const double slope = loglog_slope(eps, dg);
    return std::vector<InstanceResult>{{"perturbation_linearity", inst, slope, 1.0,
                                        0.15 - std::abs(slope - 1.0), true}};
  });
}

// ---------------------------------------------------------------------------
// Transport stability factor (measured, not asserted)
// ---------------------------------------------------------------------------

SuiteReport transport_stability(int instances, std::uint64_t seed) {
  return run_instances(instances, [&](int inst) {
    Draw d{seed, kTransportStability, std::uint32_t(inst)};
    const ModelSpec model = random_model(d, true, false);
    const GridMeasure mu1 = random_mixture(d, kInAxes1d);
    const GridMeasure mu2 = random_mixture(d, kInAxes1d);
    truefilter::GridPolicy policy;
    policy.y_nodes_per_dim = 384;
    const auto y_axes = truefilter::derive_y_axes(kOutAxes1d, model, policy);

    const GridMeasure pi =
        truefilter::lift_grid(truefilter::predict_grid(mu1, model, kOutAxes1d),
                              model, y_axes);
    const GridMeasure p =
        truefilter::lift_grid(truefilter::predict_grid(mu2, model, kOutAxes1d),
                              model, y_axes);

    const Eigen::VectorXd y_obs = Eigen::VectorXd::Constant(1, d.signed_in(0.0, 2.0));
    const auto gain_pi = meanfield::kalman_gain(measures::joint_blocks(pi, 1));
    const auto gain_p = meanfield::kalman_gain(measures::joint_blocks(p, 1));
    const std::vector<GridAxis> wide = {GridAxis{-48.0, 48.0, 1024}};
    const GridMeasure t_pi =
        meanfield::transport_pushforward(pi, 1, gain_pi.A, y_obs, wide, 1e-6);
    const GridMeasure t_p =
        meanfield::transport_pushforward(p, 1, gain_p.A, y_obs, wide, 1e-6);

    const double ratio =
        measures::weighted_tv(t_pi, t_p) / measures::weighted_tv(pi, p);
    const bool finite = std::isfinite(ratio);
    return std::vector<InstanceResult>{
        {"transport_stability_factor", inst, ratio, 0.0, finite ? 1.0 : -1.0, false}};
  });
}

SuiteReport run_all(int instances, std::uint64_t seed) {
  SuiteReport report = predict_moment_bounds(instances, seed);
  report.append(lift_covariance_bounds(instances, seed));
  report.append(tv_moment_control(instances, seed));
  report.append(psd_centering_gap(instances, seed));
  report.append(predict_lipschitz(instances, seed));
  report.append(lift_lipschitz(instances, seed));
  report.append(filter_moment_recursion(instances, seed));
  report.append(transport_moment_recursion(instances, seed));
  report.append(perturbation_linearity(instances, seed));
  report.append(transport_stability(instances, seed));
  return report;
}

}  // namespace enkflab::inequalities
