#include "enkflab/particle.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>
#include <cmath>

#include "enkflab/errors.hpp"
#include "enkflab/parallel.hpp"
#include "enkflab/rng.hpp"

namespace enkflab::particle {

namespace {

using rng::Role;

double operator_norm(const Eigen::MatrixXd& sym) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(sym);
  return es.eigenvalues().cwiseAbs().maxCoeff();
}

// Forecast/update core shared by the interacting and replica systems. Noise
// matrices are passed in so coupled systems consume identical draws.
struct StepNoise {
  Eigen::MatrixXd xi;   // N x d_u
  Eigen::MatrixXd eta;  // N x d_y
};

StepNoise draw_noise(const ModelSpec& model, int N, std::uint64_t seed,
                     std::uint32_t replicate, int step) {
  StepNoise n;
  n.xi.resize(N, model.dim_u);
  n.eta.resize(N, model.dim_y);
  for (int i = 0; i < N; ++i) {
    n.xi.row(i) =
        (model.chol_sigma * rng::normal_vector(seed, replicate, std::uint32_t(i),
                                               std::uint32_t(step), Role::dynamics,
                                               model.dim_u))
            .transpose();
    n.eta.row(i) =
        (model.chol_gamma * rng::normal_vector(seed, replicate, std::uint32_t(i),
                                               std::uint32_t(step + 1),
                                               Role::observation, model.dim_y))
            .transpose();
  }
  return n;
}

struct Forecast {
  Eigen::MatrixXd v;      // N x d_u
  Eigen::MatrixXd h_val;  // N x d_y, h evaluated at the forecast
  Eigen::MatrixXd y;      // N x d_y, simulated data h(v) + eta
};

Forecast forecast_ensemble(const Eigen::MatrixXd& u, const ModelSpec& model,
                           const StepNoise& noise) {
  const int N = static_cast<int>(u.rows());
  Forecast f;
  f.v.resize(N, model.dim_u);
  f.h_val.resize(N, model.dim_y);
  for (int i = 0; i < N; ++i) {
    f.v.row(i) = (model.dynamics(u.row(i).transpose())).transpose() + noise.xi.row(i);
    f.h_val.row(i) = model.observation(f.v.row(i).transpose()).transpose();
  }
  f.y = f.h_val + noise.eta;
  return f;
}

// Empirical gain C_uh (C_hh + Gamma)^{-1} with 1/N normalization.
Eigen::MatrixXd empirical_gain(const Forecast& f, const ModelSpec& model,
                               double* min_eig_out) {
  const int N = static_cast<int>(f.v.rows());
  const Eigen::VectorXd v_mean = f.v.colwise().mean();
  const Eigen::VectorXd h_mean = f.h_val.colwise().mean();
  const Eigen::MatrixXd vc = f.v.rowwise() - v_mean.transpose();
  const Eigen::MatrixXd hc = f.h_val.rowwise() - h_mean.transpose();
  const Eigen::MatrixXd c_uh = (vc.transpose() * hc) / double(N);
  const Eigen::MatrixXd c_hh = (hc.transpose() * hc) / double(N);
  const Eigen::MatrixXd s = c_hh + model.gamma;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(s);
  const double lo = es.eigenvalues().minCoeff();
  if (min_eig_out) *min_eig_out = lo;
  if (!(lo > 0.0))
    throw InternalError("enkf_step: C_hh + Gamma lost positive definiteness");
  return s.ldlt().solve(c_uh.transpose()).transpose();
}

}  // namespace

// ---------------------------------------------------------------------------
// Interacting ensemble
// ---------------------------------------------------------------------------

EnsembleState enkf_init(const ModelSpec& model, int N, std::uint64_t seed,
                        std::uint32_t replicate) {
  if (N < 1) throw UsageError("enkf_init: N must be >= 1");
  model::require_sampleable(model);
  EnsembleState ens;
  ens.u.resize(N, model.dim_u);
  for (int i = 0; i < N; ++i)
    ens.u.row(i) = (model.m0 + model.chol_c0 * rng::normal_vector(
                                                  seed, replicate, std::uint32_t(i), 0,
                                                  Role::init, model.dim_u))
                       .transpose();
  ens.step = 0;
  ens.seed = seed;
  ens.replicate = replicate;
  return ens;
}

EnsembleState enkf_step(const EnsembleState& ens, const Eigen::VectorXd& y_obs,
                        const ModelSpec& model, StepDebug* debug) {
  model::require_sampleable(model);
  if (y_obs.size() != model.dim_y) throw UsageError("enkf_step: datum dimension mismatch");
  const int N = ens.count();
  const StepNoise noise = draw_noise(model, N, ens.seed, ens.replicate, ens.step);
  const Forecast f = forecast_ensemble(ens.u, model, noise);
  double min_eig = 0.0;
  const Eigen::MatrixXd gain = empirical_gain(f, model, &min_eig);

  EnsembleState next;
  next.u.resize(N, model.dim_u);
  for (int i = 0; i < N; ++i)
    next.u.row(i) =
        f.v.row(i) + (gain * (y_obs - f.y.row(i).transpose())).transpose();
  next.step = ens.step + 1;
  next.seed = ens.seed;
  next.replicate = ens.replicate;
  if (!next.u.allFinite()) throw InternalError("enkf_step: non-finite analysis state");

  if (debug) {
    debug->forecast = f.v;
    debug->sim_obs = f.y;
    debug->gain = gain;
    debug->chh_gamma_min_eig = min_eig;
    debug->degenerate_ensemble = N < 2;
  }
  return next;
}

EnkfRunResult enkf_run(const ModelSpec& model, const DataRecord& data, int N,
                       std::uint64_t seed, std::uint32_t replicate,
                       const std::vector<Observable>& observables) {
  EnkfRunResult result;
  result.observables = observables;
  result.observable_path.assign(observables.size(), {});

  EnsembleState ens = enkf_init(model, N, seed, replicate);
  auto record = [&](const EnsembleState& state) {
    const measures::EmpiricalMeasure emp(state.u);
    for (std::size_t p = 0; p < observables.size(); ++p) {
      const auto& phi = observables[p];
      // Growth-envelope spot-check of the observable metadata.
      for (int i = 0; i < state.count(); ++i) {
        const Eigen::VectorXd ui = state.u.row(i).transpose();
        if (std::abs(phi(ui)) > phi.envelope(ui) + 1e-12)
          throw InternalError("enkf_run: observable violates its declared envelope");
      }
      result.observable_path[p].push_back(measures::expectation(emp, phi));
    }
    result.ensembles.push_back(state.u);
  };
  record(ens);
  for (int j = 0; j < data.J; ++j) {
    ens = enkf_step(ens, data.observations.row(j).transpose(), model);
    record(ens);
  }
  return result;
}

// ---------------------------------------------------------------------------
// Mean-field path and synchronous coupling
// ---------------------------------------------------------------------------

MeanFieldPath mean_field_path(const ModelSpec& model, const DataRecord& data,
                              const GridPolicy& policy) {
  const meanfield::MfRunResult mf = meanfield::mf_run(model, data, policy);
  MeanFieldPath path;
  path.gains.reserve(mf.steps.size());
  path.joints.reserve(mf.steps.size());
  for (const auto& s : mf.steps) {
    path.gains.push_back(s.gain);
    path.joints.push_back(s.joint);
  }
  return path;
}

CoupledRunResult coupled_run(const ModelSpec& model, const DataRecord& data, int N,
                             std::uint64_t seed, std::uint32_t replicate,
                             const MeanFieldPath& mf) {
  if (!model.observation.is_affine())
    throw UsageError(
        "coupled_run: unsupported for nonlinear observation maps; the coupling "
        "analysis requires a linear h");
  if (static_cast<int>(mf.gains.size()) < data.J)
    throw UsageError("coupled_run: mean-field path shorter than the data record");

  CoupledRunResult out;
  EnsembleState inter = enkf_init(model, N, seed, replicate);
  Eigen::MatrixXd replicas = inter.u;
  out.interacting.push_back(inter.u);
  out.replicas.push_back(replicas);

  for (int j = 0; j < data.J; ++j) {
    const Eigen::VectorXd y_obs = data.observations.row(j).transpose();
    const StepNoise noise = draw_noise(model, N, seed, replicate, j);

    const Forecast fi = forecast_ensemble(inter.u, model, noise);
    double min_eig = 0.0;
    const Eigen::MatrixXd gain = empirical_gain(fi, model, &min_eig);
    EnsembleState next;
    next.u.resize(N, model.dim_u);
    for (int i = 0; i < N; ++i)
      next.u.row(i) =
          fi.v.row(i) + (gain * (y_obs - fi.y.row(i).transpose())).transpose();
    next.step = inter.step + 1;
    next.seed = seed;
    next.replicate = replicate;
    inter = std::move(next);

    const Forecast fr = forecast_ensemble(replicas, model, noise);
    const Eigen::MatrixXd& a_bar = mf.gains[j];
    Eigen::MatrixXd next_rep(N, model.dim_u);
    for (int i = 0; i < N; ++i)
      next_rep.row(i) =
          fr.v.row(i) + (a_bar * (y_obs - fr.y.row(i).transpose())).transpose();
    replicas = std::move(next_rep);

    out.interacting.push_back(inter.u);
    out.replicas.push_back(replicas);
  }
  return out;
}

ChaosDiagnostics coupled_diagnostics(const ModelSpec& model, const DataRecord& data,
                                     int N, std::uint64_t seed, int replicates,
                                     const MeanFieldPath& mf, int threads) {
  if (replicates < 1) throw UsageError("coupled_diagnostics: needs replicates >= 1");
  ChaosDiagnostics diag;
  diag.p_orders = {1, 2, 4};
  diag.t_orders = {2, 4};
  diag.replicates = replicates;
  diag.N = N;
  const int J = data.J;
  const std::size_t np = diag.p_orders.size();
  const std::size_t nt = diag.t_orders.size();

  struct ReplicateSums {
    std::vector<std::vector<double>> d;  // [step][p] sums of |u - ubar|^p
    std::vector<std::vector<double>> s;  // [step][t] sums of |innovation|^t
    std::vector<double> z;               // [step]
  };
  std::vector<ReplicateSums> per_rep(replicates);

  parallel_for(
      replicates,
      [&](std::int64_t r) {
        ReplicateSums sums;
        sums.d.assign(J + 1, std::vector<double>(np, 0.0));
        sums.s.assign(J + 1, std::vector<double>(nt, 0.0));
        sums.z.assign(J + 1, 0.0);

        EnsembleState inter = enkf_init(model, N, seed, std::uint32_t(r));
        Eigen::MatrixXd replicas = inter.u;
        for (int j = 0; j < J; ++j) {
          const Eigen::VectorXd y_obs = data.observations.row(j).transpose();
          const StepNoise noise = draw_noise(model, N, seed, std::uint32_t(r), j);

          const Forecast fi = forecast_ensemble(inter.u, model, noise);
          double min_eig = 0.0;
          const Eigen::MatrixXd gain = empirical_gain(fi, model, &min_eig);
          Eigen::MatrixXd next(N, model.dim_u);
          for (int i = 0; i < N; ++i)
            next.row(i) =
                fi.v.row(i) + (gain * (y_obs - fi.y.row(i).transpose())).transpose();
          inter.u = std::move(next);
          inter.step = j + 1;

          const Forecast fr = forecast_ensemble(replicas, model, noise);
          const Eigen::MatrixXd& a_bar = mf.gains[j];
          Eigen::MatrixXd next_rep(N, model.dim_u);
          for (int i = 0; i < N; ++i)
            next_rep.row(i) =
                fr.v.row(i) + (a_bar * (y_obs - fr.y.row(i).transpose())).transpose();
          replicas = std::move(next_rep);

          for (int i = 0; i < N; ++i) {
            const double dist = (inter.u.row(i) - replicas.row(i)).norm();
            for (std::size_t p = 0; p < np; ++p)
              sums.d[j + 1][p] += std::pow(dist, diag.p_orders[p]);
            const double innov = (y_obs - fr.y.row(i).transpose()).norm();
            for (std::size_t t = 0; t < nt; ++t)
              sums.s[j + 1][t] += std::pow(innov, diag.t_orders[t]);
          }
          const auto mc = measures::mean_cov(measures::EmpiricalMeasure(fr.v));
          sums.z[j + 1] = operator_norm(mc.second - mf.joints[j].c_uu);
        }
        per_rep[r] = std::move(sums);
      },
      threads);

  diag.D.assign(J + 1, std::vector<double>(np, 0.0));
  diag.S.assign(J + 1, std::vector<double>(nt, 0.0));
  diag.Z.assign(J + 1, 0.0);
  const double denom = double(N) * double(replicates);
  for (int j = 1; j <= J; ++j) {
    for (std::size_t p = 0; p < np; ++p) {
      double acc = 0.0;
      for (int r = 0; r < replicates; ++r) acc += per_rep[r].d[j][p];
      diag.D[j][p] = std::pow(acc / denom, 1.0 / diag.p_orders[p]);
    }
    for (std::size_t t = 0; t < nt; ++t) {
      double acc = 0.0;
      for (int r = 0; r < replicates; ++r) acc += per_rep[r].s[j][t];
      diag.S[j][t] = std::pow(acc / denom, 1.0 / diag.t_orders[t]);
    }
    double accz = 0.0;
    for (int r = 0; r < replicates; ++r) accz += per_rep[r].z[j];
    diag.Z[j] = accz / replicates;
  }
  return diag;
}

// ---------------------------------------------------------------------------
// Monte Carlo rate experiment
// ---------------------------------------------------------------------------

RateReport mc_rate_experiment(const ModelSpec& model, const DataRecord& data,
                              const std::vector<int>& N_list, int replicates,
                              const std::vector<Observable>& phis, Reference reference,
                              const GridPolicy& policy, std::uint64_t seed,
                              int threads) {
  if (N_list.size() < 3)
    throw UsageError("mc_rate_experiment: need at least 3 ensemble sizes");
  if (replicates < 2) throw UsageError("mc_rate_experiment: need replicates >= 2");

  RateReport report;
  report.N_list = N_list;
  report.replicates = replicates;

  // Reference expectations at the final step.
  std::vector<double> ref_values(phis.size(), 0.0);
  switch (reference) {
    case Reference::kalman: {
      const auto kf = truefilter::kalman_exact(model, data);
      for (std::size_t p = 0; p < phis.size(); ++p)
        ref_values[p] = measures::expectation(kf.back(), phis[p]);
      break;
    }
    case Reference::meanfield: {
      const auto mf = meanfield::mf_run(model, data, policy);
      for (std::size_t p = 0; p < phis.size(); ++p)
        ref_values[p] = mf.gaussian_path
                            ? measures::expectation(mf.gaussians.back(), phis[p])
                            : measures::expectation(mf.grids.back(), phis[p]);
      break;
    }
    case Reference::truefilter: {
      const auto tf = truefilter::filter_run(model, data, policy);
      for (std::size_t p = 0; p < phis.size(); ++p)
        ref_values[p] = measures::expectation(tf.measures.back(), phis[p]);
      break;
    }
  }

  const int n_sizes = static_cast<int>(N_list.size());
  std::vector<std::vector<Eigen::MatrixXd>> paths(phis.size());
  for (auto& v : paths)
    v.assign(data.J + 1, Eigen::MatrixXd::Zero(replicates, n_sizes));

  parallel_for(
      std::int64_t(replicates) * n_sizes,
      [&](std::int64_t cell) {
        const int r = static_cast<int>(cell / n_sizes);
        const int k = static_cast<int>(cell % n_sizes);
        const EnkfRunResult run =
            enkf_run(model, data, N_list[k], seed, std::uint32_t(r), phis);
        for (std::size_t p = 0; p < phis.size(); ++p)
          for (int j = 0; j <= data.J; ++j)
            paths[p][j](r, k) = run.observable_path[p][j];
      },
      threads);

  for (std::size_t p = 0; p < phis.size(); ++p) {
    RateTable table;
    table.phi = phis[p];
    table.reference_value = ref_values[p];
    table.path_values = paths[p];
    table.values = paths[p].back();
    table.rmse.resize(n_sizes);
    for (int k = 0; k < n_sizes; ++k) {
      double acc = 0.0;
      for (int r = 0; r < replicates; ++r) {
        const double e = table.values(r, k) - ref_values[p];
        acc += e * e;
      }
      table.rmse[k] = std::sqrt(acc / replicates);
    }
    report.tables.push_back(std::move(table));
  }
  return report;
}

}  // namespace enkflab::particle
