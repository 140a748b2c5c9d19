#include "enkflab/truefilter.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>
#include <cmath>
#include <ostream>

#include "enkflab/csv.hpp"
#include "enkflab/errors.hpp"
#include "enkflab/parallel.hpp"

namespace enkflab::truefilter {

namespace {

// exp() is exactly zero below this argument; skipping such terms leaves the
// accumulated sums bit-identical.
constexpr double kExpFloor = -760.0;

double log_gauss_norm(const Eigen::MatrixXd& cov) {
  Eigen::LLT<Eigen::MatrixXd> llt(cov);
  if (llt.info() != Eigen::Success)
    throw ConfigError("grid kernel: covariance not positive definite");
  double logdet = 0.0;
  for (int i = 0; i < cov.rows(); ++i) logdet += std::log(llt.matrixL()(i, i));
  return -0.5 * cov.rows() * std::log(2.0 * M_PI) - logdet;
}

std::vector<Eigen::VectorXd> all_nodes(const std::vector<GridAxis>& axes) {
  std::int64_t total = 1;
  for (const auto& a : axes) total *= a.n;
  std::vector<Eigen::VectorXd> nodes;
  nodes.reserve(total);
  const int d = static_cast<int>(axes.size());
  std::vector<int> idx(d, 0);
  Eigen::VectorXd x(d);
  for (int k = 0; k < d; ++k) x[k] = axes[k].node(0);
  for (std::int64_t flat = 0; flat < total; ++flat) {
    nodes.push_back(x);
    for (int k = d - 1; k >= 0; --k) {
      if (++idx[k] < axes[k].n) {
        x[k] = axes[k].node(idx[k]);
        break;
      }
      idx[k] = 0;
      x[k] = axes[k].node(0);
    }
  }
  return nodes;
}

void check_normalized(const GridMeasure& mu, const char* op) {
  if (std::abs(mu.mass() - 1.0) > 1e-6)
    throw UsageError(std::string(op) + ": input measure is not normalized");
}

}  // namespace

// ---------------------------------------------------------------------------
// Axis derivation
// ---------------------------------------------------------------------------

std::vector<GridAxis> derive_u_axes(const ModelSpec& model, int J,
                                    const GridPolicy& policy) {
  if (!policy.u_axes.empty()) return policy.u_axes;
  // Envelope of the unconditioned affine-base state statistics over J steps;
  // the analysis step only contracts covariances.
  Eigen::VectorXd m = model.m0;
  Eigen::MatrixXd c = model.c0;
  double extent = 0.0;
  auto track = [&] {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(c);
    const double radius =
        policy.halfwidth_sigmas * std::sqrt(es.eigenvalues().maxCoeff());
    extent = std::max(extent, m.cwiseAbs().maxCoeff() + radius + model.dynamics.eps);
  };
  track();
  for (int j = 0; j < J; ++j) {
    m = model.dynamics.affine_part(m);
    c = model.dynamics.linear * c * model.dynamics.linear.transpose() + model.sigma;
    track();
  }
  std::vector<GridAxis> axes(model.dim_u);
  for (auto& a : axes) a = GridAxis{-extent, extent, policy.nodes_per_dim};
  return axes;
}

std::vector<GridAxis> derive_y_axes(const std::vector<GridAxis>& u_axes,
                                    const ModelSpec& model,
                                    const GridPolicy& policy) {
  // Range of h over the state grid corners inflated by the noise scale.
  Eigen::VectorXd lo = Eigen::VectorXd::Constant(model.dim_y,
                                                 std::numeric_limits<double>::max());
  Eigen::VectorXd hi = Eigen::VectorXd::Constant(model.dim_y,
                                                 std::numeric_limits<double>::lowest());
  const int d = static_cast<int>(u_axes.size());
  for (int corner = 0; corner < (1 << d); ++corner) {
    Eigen::VectorXd u(d);
    for (int k = 0; k < d; ++k)
      u[k] = (corner >> k & 1) ? u_axes[k].hi : u_axes[k].lo;
    const Eigen::VectorXd y = model.observation(u);
    lo = lo.cwiseMin(y);
    hi = hi.cwiseMax(y);
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(model.gamma);
  const double pad = policy.y_halfwidth_sigmas * std::sqrt(es.eigenvalues().maxCoeff()) +
                     model.observation.eps;
  std::vector<GridAxis> axes(model.dim_y);
  for (int k = 0; k < model.dim_y; ++k)
    axes[k] = GridAxis{lo[k] - pad, hi[k] + pad, policy.y_nodes_per_dim};
  return axes;
}

// ---------------------------------------------------------------------------
// Prediction
// ---------------------------------------------------------------------------

GridMeasure predict_grid(const GridMeasure& mu, const ModelSpec& model,
                         const std::vector<GridAxis>& out_axes,
                         double truncation_tol, PredictDiag* diag) {
  if (mu.dim() != model.dim_u || static_cast<int>(out_axes.size()) != model.dim_u)
    throw UsageError("predict_grid: dimension mismatch");
  check_normalized(mu, "predict_grid");

  const double logc = log_gauss_norm(model.sigma);
  const Eigen::MatrixXd sigma_inv = model.sigma.inverse();
  const std::vector<Eigen::VectorXd> in_nodes = all_nodes(mu.axes());
  const std::int64_t n_in = static_cast<std::int64_t>(in_nodes.size());

  // Push every input node through the dynamics once.
  Eigen::MatrixXd psi(n_in, model.dim_u);
  Eigen::VectorXd w(n_in);
  for (std::int64_t l = 0; l < n_in; ++l) {
    psi.row(l) = model.dynamics(in_nodes[l]).transpose();
    w[l] = mu.density()[l] * mu.cell_volume();
  }

  const std::vector<Eigen::VectorXd> out_nodes = all_nodes(out_axes);
  const std::int64_t n_out = static_cast<std::int64_t>(out_nodes.size());
  Eigen::ArrayXd out(n_out);

  if (model.dim_u == 1) {
    const double inv = sigma_inv(0, 0);
    parallel_for(n_out, [&](std::int64_t k) {
      const double u = out_nodes[k][0];
      double acc = 0.0;
      for (std::int64_t l = 0; l < n_in; ++l) {
        const double dlt = u - psi(l, 0);
        const double arg = -0.5 * dlt * dlt * inv;
        if (arg > kExpFloor) acc += std::exp(arg) * w[l];
      }
      out[k] = std::exp(logc) * acc;
    });
  } else {
    parallel_for(n_out, [&](std::int64_t k) {
      double acc = 0.0;
      for (std::int64_t l = 0; l < n_in; ++l) {
        const Eigen::VectorXd dlt = out_nodes[k] - psi.row(l).transpose();
        const double arg = -0.5 * dlt.dot(sigma_inv * dlt);
        if (arg > kExpFloor) acc += std::exp(arg) * w[l];
      }
      out[k] = std::exp(logc) * acc;
    });
  }

  GridMeasure result(out_axes, std::move(out));
  const double raw_mass = result.mass();
  const double boundary = result.boundary_mass();
  if (diag) {
    diag->mass_defect = std::abs(1.0 - raw_mass);
    diag->boundary_mass = boundary;
  }
  if (boundary > truncation_tol)
    throw TruncationError("predict_grid: output grid truncates the forecast",
                          boundary);
  result.normalize();
  return result;
}

// ---------------------------------------------------------------------------
// Lift
// ---------------------------------------------------------------------------

GridMeasure lift_grid(const GridMeasure& nu, const ModelSpec& model,
                      const std::vector<GridAxis>& y_axes, double truncation_tol,
                      PredictDiag* diag) {
  if (nu.dim() != model.dim_u || static_cast<int>(y_axes.size()) != model.dim_y)
    throw UsageError("lift_grid: dimension mismatch");
  check_normalized(nu, "lift_grid");

  const double logc = log_gauss_norm(model.gamma);
  const Eigen::MatrixXd gamma_inv = model.gamma.inverse();
  const std::vector<Eigen::VectorXd> u_nodes = all_nodes(nu.axes());
  const std::vector<Eigen::VectorXd> y_nodes = all_nodes(y_axes);
  const std::int64_t n_u = static_cast<std::int64_t>(u_nodes.size());
  const std::int64_t n_y = static_cast<std::int64_t>(y_nodes.size());

  std::vector<GridAxis> joint_axes = nu.axes();
  joint_axes.insert(joint_axes.end(), y_axes.begin(), y_axes.end());

  Eigen::ArrayXd out(n_u * n_y);
  parallel_for(n_u, [&](std::int64_t i) {
    const Eigen::VectorXd hu = model.observation(u_nodes[i]);
    const double base = nu.density()[i];
    for (std::int64_t j = 0; j < n_y; ++j) {
      const Eigen::VectorXd dlt = y_nodes[j] - hu;
      const double arg = -0.5 * dlt.dot(gamma_inv * dlt);
      out[i * n_y + j] = (arg > kExpFloor) ? std::exp(logc + arg) * base : 0.0;
    }
  });

  GridMeasure result(std::move(joint_axes), std::move(out));
  // Truncation monitor on the y edges only; the u edges are nu's business.
  double y_edge = 0.0;
  for (std::int64_t i = 0; i < n_u; ++i) {
    std::int64_t rem = 0;
    for (std::int64_t j = 0; j < n_y; ++j) {
      rem = j;
      bool edge = false;
      for (int k = model.dim_y - 1; k >= 0; --k) {
        const int ik = static_cast<int>(rem % y_axes[k].n);
        rem /= y_axes[k].n;
        if (ik == 0 || ik == y_axes[k].n - 1) edge = true;
      }
      if (edge) y_edge += result.density()[i * n_y + j];
    }
  }
  y_edge *= result.cell_volume();
  if (diag) {
    diag->mass_defect = std::abs(1.0 - result.mass());
    diag->boundary_mass = y_edge;
  }
  if (y_edge > truncation_tol)
    throw TruncationError("lift_grid: y-grid truncates the likelihood support",
                          y_edge);
  result.normalize();
  return result;
}

// ---------------------------------------------------------------------------
// Conditioning
// ---------------------------------------------------------------------------

GridMeasure condition(const GridMeasure& joint, int du, const Eigen::VectorXd& y_obs) {
  const int dy = joint.dim() - du;
  if (dy < 1 || du < 1) throw UsageError("condition: bad split dimensions");
  if (y_obs.size() != dy) throw UsageError("condition: datum dimension mismatch");

  const auto& axes = joint.axes();
  // Bracketing plane and interpolation weight per y dimension.
  std::vector<int> base(dy);
  std::vector<double> frac(dy);
  for (int k = 0; k < dy; ++k) {
    const GridAxis& a = axes[du + k];
    const double y = y_obs[k];
    if (y < a.node(0) || y > a.node(a.n - 1))
      throw OutOfRangeError("condition: datum outside the y-grid");
    double pos = (y - a.node(0)) / a.dx();
    int i0 = static_cast<int>(std::floor(pos));
    if (i0 >= a.n - 1) i0 = a.n - 2;
    base[k] = i0;
    frac[k] = pos - i0;
  }

  std::int64_t n_u = 1;
  for (int k = 0; k < du; ++k) n_u *= axes[k].n;
  std::int64_t n_y = 1;
  for (int k = 0; k < dy; ++k) n_y *= axes[du + k].n;

  Eigen::ArrayXd slice = Eigen::ArrayXd::Zero(n_u);
  for (int corner = 0; corner < (1 << dy); ++corner) {
    double wgt = 1.0;
    std::int64_t yflat = 0;
    std::int64_t stride = 1;
    for (int k = dy - 1; k >= 0; --k) {
      const int bit = corner >> k & 1;
      wgt *= bit ? frac[k] : 1.0 - frac[k];
      yflat += stride * (base[k] + bit);
      stride *= axes[du + k].n;
    }
    if (wgt == 0.0) continue;
    for (std::int64_t i = 0; i < n_u; ++i)
      slice[i] += wgt * joint.density()[i * n_y + yflat];
  }

  std::vector<GridAxis> u_axes(axes.begin(), axes.begin() + du);
  GridMeasure result(std::move(u_axes), std::move(slice));
  if (result.mass() < 1e-300)
    throw DegenerateError("condition: vanishing slice integral at the datum");
  result.normalize();
  return result;
}

// ---------------------------------------------------------------------------
// Fused analysis
// ---------------------------------------------------------------------------

GridMeasure analysis_fused(const GridMeasure& nu, const Eigen::VectorXd& y_obs,
                           const ModelSpec& model, double* normalizer) {
  if (nu.dim() != model.dim_u) throw UsageError("analysis_fused: dimension mismatch");
  if (y_obs.size() != model.dim_y)
    throw UsageError("analysis_fused: datum dimension mismatch");
  const Eigen::MatrixXd gamma_inv = model.gamma.inverse();
  const std::vector<Eigen::VectorXd> nodes = all_nodes(nu.axes());
  Eigen::ArrayXd out(nu.size());
  for (std::int64_t i = 0; i < nu.size(); ++i) {
    const Eigen::VectorXd dlt = y_obs - model.observation(nodes[i]);
    const double arg = -0.5 * dlt.dot(gamma_inv * dlt);
    out[i] = (arg > kExpFloor) ? std::exp(arg) * nu.density()[i] : 0.0;
  }
  GridMeasure result(nu.axes(), std::move(out));
  const double z = result.mass();
  if (normalizer) *normalizer = z;
  if (z < 1e-300)
    throw DegenerateError(
        "analysis_fused: all likelihood weights underflow; grid or datum "
        "misconfigured");
  result.normalize();
  return result;
}

// ---------------------------------------------------------------------------
// Filter run
// ---------------------------------------------------------------------------

FilterRunResult filter_run(const ModelSpec& model, const DataRecord& data,
                           const GridPolicy& policy) {
  const std::vector<GridAxis> axes = derive_u_axes(model, data.J, policy);
  FilterRunResult result;
  result.measures.push_back(render_gaussian(model.initial(), axes));

  auto record = [&](int step, const PredictDiag& pd, double normalizer) {
    const GridMeasure& mu = result.measures.back();
    StepDiagnostics d;
    d.step = step;
    d.mass_defect = pd.mass_defect;
    d.boundary_mass = pd.boundary_mass;
    d.normalizer = normalizer;
    auto mc = measures::mean_cov(mu);
    d.mean = mc.first;
    d.cov = mc.second;
    d.m2 = measures::moment_q(mu, 2);
    d.m4 = measures::moment_q(mu, 4);
    result.diagnostics.push_back(std::move(d));
  };
  record(0, PredictDiag{}, 1.0);

  for (int j = 0; j < data.J; ++j) {
    try {
      PredictDiag pd;
      GridMeasure forecast = predict_grid(result.measures.back(), model, axes,
                                          policy.truncation_tol, &pd);
      double normalizer = 0.0;
      GridMeasure posterior = analysis_fused(
          forecast, data.observations.row(j).transpose(), model, &normalizer);
      result.measures.push_back(std::move(posterior));
      record(j + 1, pd, normalizer);
    } catch (const TruncationError& e) {
      throw TruncationError("filter_run step " + std::to_string(j + 1) + ": " +
                                e.what(),
                            e.boundary_mass);
    } catch (const DegenerateError& e) {
      throw DegenerateError("filter_run step " + std::to_string(j + 1) + ": " +
                            e.what());
    }
  }
  return result;
}

void write_filter_csv(const FilterRunResult& result, std::ostream& os) {
  if (result.diagnostics.empty()) return;
  const int d = static_cast<int>(result.diagnostics.front().mean.size());
  std::vector<std::string> header = {"step", "mass_defect", "normalizer"};
  for (int i = 0; i < d; ++i) header.push_back("mean_" + std::to_string(i));
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < d; ++j)
      header.push_back("cov_" + std::to_string(i) + "_" + std::to_string(j));
  header.push_back("m2");
  header.push_back("m4");
  CsvWriter csv(std::move(header));
  for (const auto& s : result.diagnostics) {
    std::vector<std::string> row = {CsvWriter::num(std::int64_t(s.step)),
                                    CsvWriter::num(s.mass_defect),
                                    CsvWriter::num(s.normalizer)};
    for (int i = 0; i < d; ++i) row.push_back(CsvWriter::num(s.mean[i]));
    for (int i = 0; i < d; ++i)
      for (int j = 0; j < d; ++j) row.push_back(CsvWriter::num(s.cov(i, j)));
    row.push_back(CsvWriter::num(s.m2));
    row.push_back(CsvWriter::num(s.m4));
    csv.add_row(row);
  }
  os << csv.body();
}

// ---------------------------------------------------------------------------
// Kalman recursion
// ---------------------------------------------------------------------------

std::vector<GaussianMeasure> kalman_exact(const ModelSpec& model,
                                          const DataRecord& data) {
  if (!model.is_affine())
    throw UsageError("kalman_exact: model must be affine (V1/V2)");
  const Eigen::MatrixXd& M = model.dynamics.linear;
  const Eigen::VectorXd& b = model.dynamics.offset;
  const Eigen::MatrixXd& H = model.observation.linear;
  const Eigen::VectorXd& w = model.observation.offset;

  std::vector<GaussianMeasure> out;
  out.reserve(data.J + 1);
  out.push_back(model.initial());
  Eigen::VectorXd m = model.m0;
  Eigen::MatrixXd c = model.c0;
  const Eigen::MatrixXd identity = Eigen::MatrixXd::Identity(model.dim_u, model.dim_u);
  for (int j = 0; j < data.J; ++j) {
    m = M * m + b;
    c = M * c * M.transpose() + model.sigma;
    const Eigen::MatrixXd s = H * c * H.transpose() + model.gamma;
    const Eigen::MatrixXd k = s.ldlt().solve(H * c).transpose();
    const Eigen::VectorXd innov = data.observations.row(j).transpose() - (H * m + w);
    m += k * innov;
    // Joseph form keeps the covariance symmetric positive definite.
    const Eigen::MatrixXd a = identity - k * H;
    c = a * c * a.transpose() + k * model.gamma * k.transpose();
    c = 0.5 * (c + c.transpose());
    out.emplace_back(m, c);
  }
  return out;
}

}  // namespace enkflab::truefilter
