#pragma once

#include <iosfwd>
#include <optional>
#include <vector>

#include "enkflab/measures.hpp"
#include "enkflab/model.hpp"

namespace enkflab::truefilter {

using measures::GaussianMeasure;
using measures::GridAxis;
using measures::GridMeasure;
using model::DataRecord;
using model::ModelSpec;

// Grid configuration shared by the grid-based filters.
struct GridPolicy {
  // State axes; when empty they are derived from the model and data.
  std::vector<GridAxis> u_axes;
  int nodes_per_dim = 4096;
  double halfwidth_sigmas = 8.0;
  // Lift resolution (joint state-observation grids).
  int y_nodes_per_dim = 512;
  double y_halfwidth_sigmas = 8.0;
  double truncation_tol = 1e-8;
};

std::vector<GridAxis> derive_u_axes(const ModelSpec& model, int J,
                                    const GridPolicy& policy);
std::vector<GridAxis> derive_y_axes(const std::vector<GridAxis>& u_axes,
                                    const ModelSpec& model, const GridPolicy& policy);

struct PredictDiag {
  double mass_defect = 0.0;   // |1 - raw quadrature mass| before renormalization
  double boundary_mass = 0.0; // raw mass in the outermost cell layer
};

// One step of the prediction operator: Gaussian Markov kernel applied by
// midpoint quadrature, then renormalized.
GridMeasure predict_grid(const GridMeasure& mu, const ModelSpec& model,
                         const std::vector<GridAxis>& out_axes,
                         double truncation_tol = 1e-8, PredictDiag* diag = nullptr);

// Lift to the joint law of (U, h(U) + eta) on the tensor grid.
GridMeasure lift_grid(const GridMeasure& nu, const ModelSpec& model,
                      const std::vector<GridAxis>& y_axes,
                      double truncation_tol = 1e-8, PredictDiag* diag = nullptr);

// Conditioning on the datum: u-slice of the joint at the plane nearest y_obs,
// linearly interpolated between the two bracketing planes, renormalized.
GridMeasure condition(const GridMeasure& joint, int du, const Eigen::VectorXd& y_obs);

// Fused analysis step: pointwise likelihood reweighting, no joint grid.
GridMeasure analysis_fused(const GridMeasure& nu, const Eigen::VectorXd& y_obs,
                           const ModelSpec& model, double* normalizer = nullptr);

struct StepDiagnostics {
  int step = 0;
  double mass_defect = 0.0;
  double boundary_mass = 0.0;
  double normalizer = 0.0;
  Eigen::VectorXd mean;
  Eigen::MatrixXd cov;
  double m2 = 0.0;
  double m4 = 0.0;
};

struct FilterRunResult {
  std::vector<GridMeasure> measures;  // J+1 entries, index j holds mu_j
  std::vector<StepDiagnostics> diagnostics;
};

// Propagates the filtering distribution J steps on the grid.
FilterRunResult filter_run(const ModelSpec& model, const DataRecord& data,
                           const GridPolicy& policy);

void write_filter_csv(const FilterRunResult& result, std::ostream& os);

// Closed-form Kalman recursion; the affine-Gaussian reference path.
// Returns J+1 posteriors, index 0 being mu0.
std::vector<GaussianMeasure> kalman_exact(const ModelSpec& model,
                                          const DataRecord& data);

}  // namespace enkflab::truefilter
