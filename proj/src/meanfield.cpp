#include "enkflab/meanfield.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>
#include <cmath>
#include <ostream>

#include "enkflab/csv.hpp"
#include "enkflab/errors.hpp"

namespace enkflab::meanfield {

namespace {

double condition_number(const Eigen::MatrixXd& spd) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(spd);
  const double lo = es.eigenvalues().minCoeff();
  const double hi = es.eigenvalues().maxCoeff();
  if (lo <= 0.0) return std::numeric_limits<double>::infinity();
  return hi / lo;
}

}  // namespace

KalmanGain kalman_gain(const JointMoments& moments) {
  // Conditioning is judged against the scale of the whole joint covariance;
  // a C_yy tiny relative to C_uu is as degenerate as a singular one.
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(moments.c_yy);
  const double lo = es.eigenvalues().minCoeff();
  const double joint_scale = std::max({es.eigenvalues().maxCoeff(),
                                       moments.c_uu.operatorNorm(), 1e-300});
  if (!(lo > 0.0) || joint_scale / lo >= 1e12)
    throw DegenerateError("kalman_gain: C_yy singular or ill-conditioned");
  const Eigen::MatrixXd a =
      moments.c_yy.ldlt().solve(moments.c_uy.transpose()).transpose();
  const double scale = std::max(1.0, moments.c_uy.norm());
  if ((a * moments.c_yy - moments.c_uy).norm() > 1e-10 * scale)
    throw DegenerateError("kalman_gain: solve residual too large");
  if (!a.allFinite()) throw DegenerateError("kalman_gain: non-finite gain");
  return KalmanGain{a, moments};
}

Eigen::VectorXd transport(const Eigen::VectorXd& u, const Eigen::VectorXd& y,
                          const KalmanGain& gain, const Eigen::VectorXd& y_obs) {
  if (u.size() != gain.A.rows() || y.size() != gain.A.cols() ||
      y_obs.size() != gain.A.cols())
    throw UsageError("transport: dimension mismatch");
  return u + gain.A * (y_obs - y);
}

// ---------------------------------------------------------------------------
// Gaussian path
// ---------------------------------------------------------------------------

GaussianMeasure mf_step_gaussian(const GaussianMeasure& mu, const Eigen::VectorXd& y_obs,
                                 const ModelSpec& model, JointMoments* joint_out,
                                 Eigen::MatrixXd* gain_out) {
  if (!model.is_affine())
    throw UsageError("mf_step_gaussian: model must be affine (V1/V2)");
  const Eigen::MatrixXd& M = model.dynamics.linear;
  const Eigen::VectorXd& b = model.dynamics.offset;
  const Eigen::MatrixXd& H = model.observation.linear;
  const Eigen::VectorXd& w = model.observation.offset;

  JointMoments jm;
  jm.m_u = M * mu.mean + b;
  jm.c_uu = M * mu.cov * M.transpose() + model.sigma;
  jm.m_y = H * jm.m_u + w;
  jm.c_uy = jm.c_uu * H.transpose();
  jm.c_yy = H * jm.c_uu * H.transpose() + model.gamma;

  const KalmanGain gain = kalman_gain(jm);
  const Eigen::MatrixXd& a = gain.A;
  const Eigen::VectorXd mean = jm.m_u + a * (y_obs - jm.m_y);
  // Pushforward covariance of the full joint under (u, y) -> u + A(z - y).
  Eigen::MatrixXd cov = jm.c_uu - a * jm.c_uy.transpose() - jm.c_uy * a.transpose() +
                        a * jm.c_yy * a.transpose();
  cov = 0.5 * (cov + cov.transpose());
  if (joint_out) *joint_out = jm;
  if (gain_out) *gain_out = a;
  return GaussianMeasure(mean, cov);
}

// ---------------------------------------------------------------------------
// Grid path
// ---------------------------------------------------------------------------

GridMeasure transport_pushforward(const GridMeasure& joint, int du,
                                  const Eigen::MatrixXd& gain,
                                  const Eigen::VectorXd& y_obs,
                                  const std::vector<GridAxis>& out_axes,
                                  double truncation_tol, double* lost_mass) {
  const int dy = joint.dim() - du;
  if (dy < 1 || static_cast<int>(out_axes.size()) != du)
    throw UsageError("transport_pushforward: dimension mismatch");

  // Cloud-in-cell deposition of each joint cell's mass at the transported
  // state. Mass falling off the output grid is tracked, not clamped.
  std::int64_t total_out = 1;
  for (const auto& ax : out_axes) total_out *= ax.n;
  Eigen::ArrayXd deposited = Eigen::ArrayXd::Zero(total_out);
  double lost = 0.0;

  std::vector<std::int64_t> out_strides(du, 1);
  for (int k = du - 2; k >= 0; --k)
    out_strides[k] = out_strides[k + 1] * out_axes[k + 1].n;

  const double cellvol_joint = joint.cell_volume();
  std::vector<int> base(du);
  std::vector<double> frac(du);
  for (std::int64_t flat = 0; flat < joint.size(); ++flat) {
    const double mass = joint.density()[flat] * cellvol_joint;
    if (mass == 0.0) continue;
    const Eigen::VectorXd node = joint.node(flat);
    const Eigen::VectorXd t = node.head(du) + gain * (y_obs - node.tail(dy));
    bool off_grid = false;
    for (int k = 0; k < du; ++k) {
      const GridAxis& ax = out_axes[k];
      const double pos = (t[k] - ax.lo) / ax.dx() - 0.5;
      const int i0 = static_cast<int>(std::floor(pos));
      if (i0 < 0 || i0 + 1 >= ax.n) {
        off_grid = true;
        break;
      }
      base[k] = i0;
      frac[k] = pos - i0;
    }
    if (off_grid) {
      lost += mass;
      continue;
    }
    for (int corner = 0; corner < (1 << du); ++corner) {
      double wgt = 1.0;
      std::int64_t idx = 0;
      for (int k = 0; k < du; ++k) {
        const int bit = corner >> k & 1;
        wgt *= bit ? frac[k] : 1.0 - frac[k];
        idx += out_strides[k] * (base[k] + bit);
      }
      deposited[idx] += wgt * mass;
    }
  }

  if (lost_mass) *lost_mass = lost;
  if (lost > truncation_tol)
    throw TruncationError("transport_pushforward: transported mass leaves the grid",
                          lost);
  double cellvol_out = 1.0;
  for (const auto& ax : out_axes) cellvol_out *= ax.dx();
  GridMeasure result(out_axes, deposited / cellvol_out);
  result.normalize();
  return result;
}

GridMeasure mf_step_grid(const GridMeasure& mu, const Eigen::VectorXd& y_obs,
                         const ModelSpec& model, const std::vector<GridAxis>& out_axes,
                         const std::vector<GridAxis>& y_axes, double truncation_tol,
                         MfStepDiag* diag, JointMoments* joint_out,
                         Eigen::MatrixXd* gain_out) {
  truefilter::PredictDiag pd;
  const GridMeasure forecast =
      truefilter::predict_grid(mu, model, out_axes, truncation_tol, &pd);
  const GridMeasure joint =
      truefilter::lift_grid(forecast, model, y_axes, truncation_tol);

  const JointMoments jm = measures::joint_blocks(joint, model.dim_u);
  const KalmanGain gain = kalman_gain(jm);

  double lost = 0.0;
  GridMeasure result = transport_pushforward(joint, model.dim_u, gain.A, y_obs,
                                             out_axes, truncation_tol, &lost);
  if (diag) {
    diag->gain_norm = gain.A.norm();
    diag->cyy_cond = condition_number(jm.c_yy);
    diag->truncated_mass = lost;
    diag->mass_defect = pd.mass_defect;
  }
  if (joint_out) *joint_out = jm;
  if (gain_out) *gain_out = gain.A;
  return result;
}

// ---------------------------------------------------------------------------
// Run
// ---------------------------------------------------------------------------

MfRunResult mf_run(const ModelSpec& model, const DataRecord& data,
                   const GridPolicy& policy) {
  MfRunResult result;
  result.gaussian_path = model.is_affine();
  if (result.gaussian_path) {
    result.gaussians.push_back(model.initial());
    for (int j = 0; j < data.J; ++j) {
      MfStepRecord rec;
      result.gaussians.push_back(
          mf_step_gaussian(result.gaussians.back(), data.observations.row(j).transpose(),
                           model, &rec.joint, &rec.gain));
      rec.diag.gain_norm = rec.gain.norm();
      rec.diag.cyy_cond = condition_number(rec.joint.c_yy);
      result.steps.push_back(std::move(rec));
    }
    return result;
  }

  const std::vector<GridAxis> u_axes = truefilter::derive_u_axes(model, data.J, policy);
  const std::vector<GridAxis> y_axes = truefilter::derive_y_axes(u_axes, model, policy);
  result.grids.push_back(measures::render_gaussian(model.initial(), u_axes));
  for (int j = 0; j < data.J; ++j) {
    MfStepRecord rec;
    try {
      result.grids.push_back(mf_step_grid(
          result.grids.back(), data.observations.row(j).transpose(), model, u_axes,
          y_axes, policy.truncation_tol, &rec.diag, &rec.joint, &rec.gain));
    } catch (const TruncationError& e) {
      throw TruncationError("mf_run step " + std::to_string(j + 1) + ": " + e.what(),
                            e.boundary_mass);
    }
    result.steps.push_back(std::move(rec));
  }
  return result;
}

void write_mf_csv(const MfRunResult& result, std::ostream& os) {
  CsvWriter csv({"step", "gain_norm", "cyy_cond", "truncated_mass", "mass_defect"});
  for (std::size_t j = 0; j < result.steps.size(); ++j) {
    const auto& d = result.steps[j].diag;
    csv.add_row({CsvWriter::num(std::int64_t(j + 1)), CsvWriter::num(d.gain_norm),
                 CsvWriter::num(d.cyy_cond), CsvWriter::num(d.truncated_mass),
                 CsvWriter::num(d.mass_defect)});
  }
  os << csv.body();
}

// ---------------------------------------------------------------------------
// Equivalence of conditioning and transport on Gaussians
// ---------------------------------------------------------------------------

EquivalenceReport gaussian_equivalence_check(const GaussianMeasure& joint, int du,
                                             const Eigen::VectorXd& y_obs) {
  const JointMoments jm = measures::joint_blocks(joint, du);
  const int dy = static_cast<int>(jm.m_y.size());
  if (y_obs.size() != dy)
    throw UsageError("gaussian_equivalence_check: datum dimension mismatch");

  // Route 1: Gaussian conditioning.
  const Eigen::MatrixXd a_cond =
      jm.c_yy.ldlt().solve(jm.c_uy.transpose()).transpose();
  const Eigen::VectorXd m_cond = jm.m_u + a_cond * (y_obs - jm.m_y);
  Eigen::MatrixXd c_cond = jm.c_uu - a_cond * jm.c_uy.transpose();
  c_cond = 0.5 * (c_cond + c_cond.transpose());

  // Route 2: affine pushforward of the whole joint under (u,y) -> u + A(z-y).
  const KalmanGain gain = kalman_gain(jm);
  Eigen::MatrixXd lift(du, du + dy);
  lift << Eigen::MatrixXd::Identity(du, du), -gain.A;
  const Eigen::VectorXd m_push = jm.m_u + gain.A * (y_obs - jm.m_y);
  Eigen::MatrixXd c_push = lift * joint.cov * lift.transpose();
  c_push = 0.5 * (c_push + c_push.transpose());

  EquivalenceReport rep{GaussianMeasure(m_cond, c_cond),
                        GaussianMeasure(m_push, c_push),
                        (m_cond - m_push).cwiseAbs().maxCoeff(),
                        (c_cond - c_push).cwiseAbs().maxCoeff()};
  return rep;
}

}  // namespace enkflab::meanfield
