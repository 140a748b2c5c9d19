#pragma once

#include <cstdint>
#include <vector>

#include "enkflab/meanfield.hpp"
#include "enkflab/measures.hpp"
#include "enkflab/model.hpp"
#include "enkflab/truefilter.hpp"

namespace enkflab::particle {

using measures::JointMoments;
using measures::Observable;
using model::DataRecord;
using model::ModelSpec;
using truefilter::GridPolicy;

// N particles plus the stream coordinates that make every draw replayable.
struct EnsembleState {
  Eigen::MatrixXd u;  // N x d_u
  int step = 0;
  std::uint64_t seed = 0;
  std::uint32_t replicate = 0;

  int count() const { return static_cast<int>(u.rows()); }
};

EnsembleState enkf_init(const ModelSpec& model, int N, std::uint64_t seed,
                        std::uint32_t replicate);

struct StepDebug {
  Eigen::MatrixXd forecast;
  Eigen::MatrixXd sim_obs;
  Eigen::MatrixXd gain;
  double chh_gamma_min_eig = 0.0;
  bool degenerate_ensemble = false;  // N < 2, gain from a single particle
};

// One interacting-ensemble step: forecast, simulated data, empirical gain
// C_uh (C_hh + Gamma)^{-1} with 1/N normalization, analysis update.
EnsembleState enkf_step(const EnsembleState& ens, const Eigen::VectorXd& y_obs,
                        const ModelSpec& model, StepDebug* debug = nullptr);

struct EnkfRunResult {
  std::vector<Eigen::MatrixXd> ensembles;            // J+1 entries
  std::vector<Observable> observables;
  std::vector<std::vector<double>> observable_path;  // [phi][step]
};

EnkfRunResult enkf_run(const ModelSpec& model, const DataRecord& data, int N,
                       std::uint64_t seed, std::uint32_t replicate,
                       const std::vector<Observable>& observables);

// Gains and forecast moments of the mean-field filter, one entry per step;
// the replica system applies these exact-moment gains.
struct MeanFieldPath {
  std::vector<Eigen::MatrixXd> gains;  // J entries
  std::vector<JointMoments> joints;    // J entries, c_uu = C(P mu_j)
};

MeanFieldPath mean_field_path(const ModelSpec& model, const DataRecord& data,
                              const GridPolicy& policy);

// Interacting system and its synchronously coupled mean-field replicas,
// driven by identical noise.
struct CoupledRunResult {
  std::vector<Eigen::MatrixXd> interacting;  // J+1 entries
  std::vector<Eigen::MatrixXd> replicas;     // J+1 entries
};

CoupledRunResult coupled_run(const ModelSpec& model, const DataRecord& data, int N,
                             std::uint64_t seed, std::uint32_t replicate,
                             const MeanFieldPath& mf);

// Propagation-of-chaos diagnostics accumulated over particles and replicates.
struct ChaosDiagnostics {
  std::vector<int> p_orders;            // discrepancy orders, default {1,2,4}
  std::vector<int> t_orders;            // innovation orders, default {2,4}
  std::vector<std::vector<double>> D;   // [step][p]   (E|u - ubar|^p)^{1/p}
  std::vector<std::vector<double>> S;   // [step][t]   innovation moments
  std::vector<double> Z;                // [step]      E ||C_emp(vbar) - C(P mu)||
  int replicates = 0;
  int N = 0;
};

ChaosDiagnostics coupled_diagnostics(const ModelSpec& model, const DataRecord& data,
                                     int N, std::uint64_t seed, int replicates,
                                     const MeanFieldPath& mf, int threads = 0);

// Reference distribution the particle observables are scored against.
enum class Reference { kalman, meanfield, truefilter };

struct RateTable {
  Observable phi;
  double reference_value = 0.0;
  std::vector<double> rmse;  // per N
  Eigen::MatrixXd values;    // replicates x N_list.size(), final-step phi values
  std::vector<Eigen::MatrixXd> path_values;  // per step, replicates x N_list.size()
};

struct RateReport {
  std::vector<int> N_list;
  int replicates = 0;
  std::vector<RateTable> tables;
};

// Monte Carlo RMSE sweep of the final-step observables over the N list.
RateReport mc_rate_experiment(const ModelSpec& model, const DataRecord& data,
                              const std::vector<int>& N_list, int replicates,
                              const std::vector<Observable>& phis, Reference reference,
                              const GridPolicy& policy, std::uint64_t seed,
                              int threads = 0);

}  // namespace enkflab::particle
