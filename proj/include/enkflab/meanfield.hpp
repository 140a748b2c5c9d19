#pragma once

#include <iosfwd>
#include <vector>

#include "enkflab/measures.hpp"
#include "enkflab/model.hpp"
#include "enkflab/truefilter.hpp"

namespace enkflab::meanfield {

using measures::GaussianMeasure;
using measures::GridAxis;
using measures::GridMeasure;
using measures::JointMoments;
using model::DataRecord;
using model::ModelSpec;
using truefilter::GridPolicy;

// Kalman transport gain A = C_uy (C_yy)^{-1}, solved, never inverted.
struct KalmanGain {
  Eigen::MatrixXd A;
  JointMoments source;
};

KalmanGain kalman_gain(const JointMoments& moments);

// The transport map: u + A (y_obs - y).
Eigen::VectorXd transport(const Eigen::VectorXd& u, const Eigen::VectorXd& y,
                          const KalmanGain& gain, const Eigen::VectorXd& y_obs);

// Closed-form step for affine models: the transport pushforward of the joint
// Gaussian, which coincides with Gaussian conditioning.
GaussianMeasure mf_step_gaussian(const GaussianMeasure& mu, const Eigen::VectorXd& y_obs,
                                 const ModelSpec& model, JointMoments* joint_out = nullptr,
                                 Eigen::MatrixXd* gain_out = nullptr);

struct MfStepDiag {
  double gain_norm = 0.0;
  double cyy_cond = 0.0;
  double truncated_mass = 0.0;
  double mass_defect = 0.0;
};

// Pushforward of a joint (u,y) grid measure under the transport map, each
// cell's mass deposited at its image with linear (cloud-in-cell) weights.
GridMeasure transport_pushforward(const GridMeasure& joint, int du,
                                  const Eigen::MatrixXd& gain,
                                  const Eigen::VectorXd& y_obs,
                                  const std::vector<GridAxis>& out_axes,
                                  double truncation_tol = 1e-8,
                                  double* lost_mass = nullptr);

// Grid step for nonlinear models: lift the forecast, read the gain off the
// discretized joint, push each joint cell through the transport map with
// cloud-in-cell deposition.
GridMeasure mf_step_grid(const GridMeasure& mu, const Eigen::VectorXd& y_obs,
                         const ModelSpec& model, const std::vector<GridAxis>& out_axes,
                         const std::vector<GridAxis>& y_axes,
                         double truncation_tol = 1e-8, MfStepDiag* diag = nullptr,
                         JointMoments* joint_out = nullptr,
                         Eigen::MatrixXd* gain_out = nullptr);

struct MfStepRecord {
  JointMoments joint;    // moments of the lifted forecast driving the gain
  Eigen::MatrixXd gain;  // A_j
  MfStepDiag diag;
};

struct MfRunResult {
  bool gaussian_path = false;
  std::vector<GaussianMeasure> gaussians;  // J+1 entries when gaussian_path
  std::vector<GridMeasure> grids;          // J+1 entries otherwise
  std::vector<MfStepRecord> steps;         // J entries

  int steps_count() const { return static_cast<int>(steps.size()); }
};

// Runs the mean-field filter, dispatching on the declared model kind.
MfRunResult mf_run(const ModelSpec& model, const DataRecord& data,
                   const GridPolicy& policy);

void write_mf_csv(const MfRunResult& result, std::ostream& os);

// Conditioning and transport pushforward computed by independent routes on a
// joint Gaussian; they agree identically in exact arithmetic.
struct EquivalenceReport {
  GaussianMeasure conditioned;
  GaussianMeasure pushforward;
  double mean_discrepancy = 0.0;
  double cov_discrepancy = 0.0;
  double max_discrepancy() const { return std::max(mean_discrepancy, cov_discrepancy); }
};

EquivalenceReport gaussian_equivalence_check(const GaussianMeasure& joint, int du,
                                             const Eigen::VectorXd& y_obs);

}  // namespace enkflab::meanfield
