#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <string>
#include <vector>

#include "enkflab/measures.hpp"

namespace enkflab::model {

// Bounded smooth perturbations with sup-norm 1 and known Lipschitz constant,
// applied componentwise and scaled by 1/sqrt(d_out) so the Euclidean sup-norm
// of the vector-valued perturbation stays exactly 1.
enum class PerturbationKind { none, sine, tanh, gaussian_bump };

const char* perturbation_name(PerturbationKind kind);
PerturbationKind perturbation_from_name(const std::string& name);
// Lipschitz constant of the scalar catalog function.
double perturbation_lipschitz(PerturbationKind kind);
double perturbation_scalar(PerturbationKind kind, double t);

// Affine map plus an optional bounded perturbation of amplitude eps:
// field(u) = linear u + offset + eps * perturbation(u).
struct VectorFieldSpec {
  Eigen::MatrixXd linear;
  Eigen::VectorXd offset;
  double eps = 0.0;
  PerturbationKind perturbation = PerturbationKind::none;

  int in_dim() const { return static_cast<int>(linear.cols()); }
  int out_dim() const { return static_cast<int>(linear.rows()); }
  bool is_affine() const {
    return eps == 0.0 || perturbation == PerturbationKind::none;
  }

  Eigen::VectorXd operator()(const Eigen::VectorXd& u) const;
  Eigen::VectorXd affine_part(const Eigen::VectorXd& u) const;

  // Declared linear-growth constant: |field(u)| <= kappa (1 + |u|).
  double growth_kappa() const;
  // Declared Lipschitz constant.
  double lipschitz() const;

  static VectorFieldSpec affine(Eigen::MatrixXd m, Eigen::VectorXd b);
  static VectorFieldSpec affine_plus_bounded(Eigen::MatrixXd m, Eigen::VectorXd b,
                                             double eps, PerturbationKind kind);
};

// The tuple (Psi, h, Sigma, Gamma, mu0). Cholesky factors are computed once
// at construction; construction fails on non-SPD covariances.
struct ModelSpec {
  int dim_u = 0;
  int dim_y = 0;
  VectorFieldSpec dynamics;
  VectorFieldSpec observation;
  Eigen::MatrixXd sigma;
  Eigen::MatrixXd gamma;
  Eigen::VectorXd m0;
  Eigen::MatrixXd c0;

  Eigen::MatrixXd chol_sigma;
  Eigen::MatrixXd chol_gamma;
  Eigen::MatrixXd chol_c0;
  double sigma_min_eig = 0.0;
  double gamma_min_eig = 0.0;

  static ModelSpec create(VectorFieldSpec dynamics, VectorFieldSpec observation,
                          Eigen::MatrixXd sigma, Eigen::MatrixXd gamma,
                          Eigen::VectorXd m0, Eigen::MatrixXd c0);

  bool is_affine() const {
    return dynamics.is_affine() && observation.is_affine();
  }
  measures::GaussianMeasure initial() const {
    return measures::GaussianMeasure(m0, c0);
  }

  std::string to_json() const;
  static ModelSpec from_json(const std::string& text);
};

// Synthetic truth and data drawn from the model.
struct DataRecord {
  int J = 0;
  Eigen::MatrixXd truth;         // (J+1) x d_u, row j holds u_j
  Eigen::MatrixXd observations;  // J x d_y, row j-1 holds y_j
  double kappa_y = 0.0;
  std::uint64_t seed = 0;

  std::string to_json() const;
  static DataRecord from_json(const std::string& text);
};

DataRecord simulate_truth(const ModelSpec& model, int J, std::uint64_t seed);

// Throws ConfigError when any declared covariance lacks a Cholesky factor.
void require_sampleable(const ModelSpec& model);

Eigen::VectorXd eval_field(const VectorFieldSpec& field, const Eigen::VectorXd& u);

// Numerical check of the standing assumptions over a probe set: growth of the
// two vector fields, Lipschitz continuity of the observation map, positive
// definiteness of the covariances and, when a perturbation is declared,
// membership in the L-infinity ball around the affine base.
struct AssumptionReport {
  struct Entry {
    std::string id;
    bool pass = false;
    double measured = 0.0;
    double declared = 0.0;
    std::string detail;
  };
  std::vector<Entry> entries;

  bool all_pass() const;
  std::string to_string() const;
};

AssumptionReport validate_assumptions(const ModelSpec& model,
                                      const std::vector<Eigen::VectorXd>& probes);

// Convenience probe set: tensor lattice covering [-extent, extent]^d.
std::vector<Eigen::VectorXd> default_probes(int dim, double extent, int per_dim);

}  // namespace enkflab::model
