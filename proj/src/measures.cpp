#include "enkflab/measures.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>
#include <cmath>
#include <limits>

#include "enkflab/errors.hpp"

namespace enkflab::measures {

namespace {

// Odometer iteration over all grid nodes; fn(flat, node coordinates).
template <class Fn>
void for_each_node(const std::vector<GridAxis>& axes, Fn&& fn) {
  const int d = static_cast<int>(axes.size());
  std::int64_t total = 1;
  for (const auto& a : axes) total *= a.n;
  std::vector<int> idx(d, 0);
  Eigen::VectorXd x(d);
  for (int k = 0; k < d; ++k) x[k] = axes[k].node(0);
  for (std::int64_t flat = 0; flat < total; ++flat) {
    fn(flat, x);
    for (int k = d - 1; k >= 0; --k) {
      if (++idx[k] < axes[k].n) {
        x[k] = axes[k].node(idx[k]);
        break;
      }
      idx[k] = 0;
      x[k] = axes[k].node(0);
    }
  }
}

double norm_pow(const Eigen::VectorXd& x, int q) {
  const double r2 = x.squaredNorm();
  switch (q) {
    case 0:
      return 1.0;
    case 1:
      return std::sqrt(r2);
    case 2:
      return r2;
    case 4:
      return r2 * r2;
    default:
      return std::pow(r2, 0.5 * q);
  }
}

double double_factorial(int n) {
  double r = 1.0;
  for (int k = n; k > 1; k -= 2) r *= k;
  return r;
}

}  // namespace

// ---------------------------------------------------------------------------
// GridMeasure
// ---------------------------------------------------------------------------

bool operator==(const GridAxis& a, const GridAxis& b) {
  return a.lo == b.lo && a.hi == b.hi && a.n == b.n;
}

GridMeasure::GridMeasure(std::vector<GridAxis> axes, Eigen::ArrayXd density)
    : axes_(std::move(axes)), density_(std::move(density)) {
  if (axes_.empty()) throw UsageError("GridMeasure: no axes");
  std::int64_t total = 1;
  cell_volume_ = 1.0;
  for (const auto& a : axes_) {
    if (a.n <= 0 || !(a.hi > a.lo))
      throw UsageError("GridMeasure: axis must satisfy hi > lo and n > 0");
    total *= a.n;
    cell_volume_ *= a.dx();
  }
  if (density_.size() != total)
    throw UsageError("GridMeasure: density size does not match axes");
  if ((density_ < 0.0).any())
    throw UsageError("GridMeasure: density must be nonnegative");
  strides_.assign(axes_.size(), 1);
  for (int k = static_cast<int>(axes_.size()) - 2; k >= 0; --k)
    strides_[k] = strides_[k + 1] * axes_[k + 1].n;
}

void GridMeasure::normalize() {
  const double m = mass();
  if (!(m > 0.0)) throw DegenerateError("GridMeasure: zero mass, cannot normalize");
  density_ /= m;
}

double GridMeasure::boundary_mass() const {
  std::vector<int> idx(axes_.size(), 0);
  double acc = 0.0;
  for (std::int64_t flat = 0; flat < density_.size(); ++flat) {
    std::int64_t rem = flat;
    bool edge = false;
    for (std::size_t k = 0; k < axes_.size(); ++k) {
      const int i = static_cast<int>(rem / strides_[k]);
      rem %= strides_[k];
      if (i == 0 || i == axes_[k].n - 1) edge = true;
    }
    if (edge) acc += density_[flat];
  }
  return acc * cell_volume_;
}

std::int64_t GridMeasure::flat_index(const std::vector<int>& idx) const {
  std::int64_t flat = 0;
  for (std::size_t k = 0; k < axes_.size(); ++k) flat += strides_[k] * idx[k];
  return flat;
}

Eigen::VectorXd GridMeasure::node(std::int64_t flat) const {
  Eigen::VectorXd x(dim());
  std::int64_t rem = flat;
  for (std::size_t k = 0; k < axes_.size(); ++k) {
    const int i = static_cast<int>(rem / strides_[k]);
    rem %= strides_[k];
    x[k] = axes_[k].node(i);
  }
  return x;
}

void GridMeasure::unravel(std::int64_t flat, std::vector<int>& idx) const {
  idx.resize(axes_.size());
  for (std::size_t k = 0; k < axes_.size(); ++k) {
    idx[k] = static_cast<int>(flat / strides_[k]);
    flat %= strides_[k];
  }
}

double GridMeasure::integrate(
    const std::function<double(const Eigen::VectorXd&)>& f) const {
  double acc = 0.0;
  for_each_node(axes_, [&](std::int64_t flat, const Eigen::VectorXd& x) {
    acc += f(x) * density_[flat];
  });
  return acc * cell_volume_;
}

// ---------------------------------------------------------------------------
// GaussianMeasure / EmpiricalMeasure
// ---------------------------------------------------------------------------

GaussianMeasure::GaussianMeasure(Eigen::VectorXd m, Eigen::MatrixXd c)
    : mean(std::move(m)), cov(std::move(c)) {
  if (cov.rows() != cov.cols() || cov.rows() != mean.size())
    throw ConfigError("GaussianMeasure: dimension mismatch");
  const double scale = std::max(1.0, cov.cwiseAbs().maxCoeff());
  if ((cov - cov.transpose()).cwiseAbs().maxCoeff() > 1e-12 * scale)
    throw ConfigError("GaussianMeasure: covariance not symmetric");
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(cov);
  if (es.eigenvalues().minCoeff() <= 0.0)
    throw DegenerateError("GaussianMeasure: covariance not positive definite");
}

double GaussianMeasure::density_at(const Eigen::VectorXd& x) const {
  Eigen::LLT<Eigen::MatrixXd> llt(cov);
  const Eigen::VectorXd d = x - mean;
  const Eigen::VectorXd w = llt.matrixL().solve(d);
  double logdet = 0.0;
  for (int i = 0; i < cov.rows(); ++i)
    logdet += std::log(llt.matrixL()(i, i));
  const double logz = -0.5 * dim() * std::log(2.0 * M_PI) - logdet;
  return std::exp(logz - 0.5 * w.squaredNorm());
}

EmpiricalMeasure::EmpiricalMeasure(Eigen::MatrixXd p) : particles(std::move(p)) {
  if (particles.rows() < 1) throw UsageError("EmpiricalMeasure: needs N >= 1");
  if (!particles.allFinite())
    throw UsageError("EmpiricalMeasure: non-finite particle coordinates");
}

Eigen::VectorXd JointMoments::full_mean() const {
  Eigen::VectorXd m(m_u.size() + m_y.size());
  m << m_u, m_y;
  return m;
}

Eigen::MatrixXd JointMoments::full_cov() const {
  const int du = static_cast<int>(m_u.size());
  const int dy = static_cast<int>(m_y.size());
  Eigen::MatrixXd c(du + dy, du + dy);
  c.topLeftCorner(du, du) = c_uu;
  c.topRightCorner(du, dy) = c_uy;
  c.bottomLeftCorner(dy, du) = c_uy.transpose();
  c.bottomRightCorner(dy, dy) = c_yy;
  return c;
}

// ---------------------------------------------------------------------------
// Observables
// ---------------------------------------------------------------------------

Observable Observable::constant() {
  return Observable{Kind::constant, 0, 0, 0.0, 1.0, 0};
}
Observable Observable::coordinate(int k) {
  return Observable{Kind::coordinate, k, 0, 1.0, 1.0, 0};
}
Observable Observable::squared_norm() {
  return Observable{Kind::squared_norm, 0, 0, 1.0, 1.0, 1};
}
Observable Observable::monomial(int k, int l) {
  return Observable{Kind::monomial, k, l, 1.0, 1.0, 1};
}

Observable Observable::parse(const std::string& id) {
  if (id == "constant") return constant();
  if (id == "squared_norm") return squared_norm();
  if (id.rfind("coordinate:", 0) == 0)
    return coordinate(std::stoi(id.substr(11)));
  if (id.rfind("monomial:", 0) == 0) {
    const auto rest = id.substr(9);
    const auto comma = rest.find(',');
    if (comma == std::string::npos)
      throw UsageError("Observable: monomial id needs two indices");
    return monomial(std::stoi(rest.substr(0, comma)),
                    std::stoi(rest.substr(comma + 1)));
  }
  throw UsageError("Observable: unknown id '" + id + "'");
}

double Observable::operator()(const Eigen::VectorXd& u) const {
  switch (kind) {
    case Kind::constant:
      return 1.0;
    case Kind::coordinate:
      return u[i];
    case Kind::squared_norm:
      return u.squaredNorm();
    case Kind::monomial:
      return u[i] * u[j];
  }
  return 0.0;
}

std::string Observable::id() const {
  switch (kind) {
    case Kind::constant:
      return "constant";
    case Kind::coordinate:
      return "coordinate:" + std::to_string(i);
    case Kind::squared_norm:
      return "squared_norm";
    case Kind::monomial:
      return "monomial:" + std::to_string(i) + "," + std::to_string(j);
  }
  return "";
}

double Observable::envelope(const Eigen::VectorXd& u) const {
  return R_phi * (1.0 + std::pow(u.norm(), varsigma + 1));
}

// ---------------------------------------------------------------------------
// Moments
// ---------------------------------------------------------------------------

double moment_q(const GaussianMeasure& mu, int q) {
  if (q < 0) throw UsageError("moment_q: q must be nonnegative");
  const double m2 = mu.mean.squaredNorm();
  const double trc = mu.cov.trace();
  switch (q) {
    case 0:
      return 1.0;
    case 2:
      return m2 + trc;
    case 4: {
      const double tr2 = (mu.cov * mu.cov).trace();
      const double mcm = mu.mean.dot(mu.cov * mu.mean);
      return (m2 + trc) * (m2 + trc) + 2.0 * tr2 + 4.0 * mcm;
    }
    default:
      break;
  }
  if (mu.dim() == 1) {
    const double m = mu.mean[0];
    const double s = std::sqrt(mu.cov(0, 0));
    const double a = m / s;
    if (q % 2 == 0) {
      // E X^{2k} via binomial expansion with central moments s^{2j}(2j-1)!!.
      double acc = 0.0;
      double binom = 1.0;
      for (int j = 0; 2 * j <= q; ++j) {
        acc += binom * std::pow(m, q - 2 * j) * std::pow(s, 2 * j) *
               double_factorial(2 * j - 1);
        binom *= double(q - 2 * j) * double(q - 2 * j - 1) / double(2 * (j + 1)) /
                 double(2 * j + 1);
      }
      return acc;
    }
    const double pdf_term = std::sqrt(2.0 / M_PI) * std::exp(-0.5 * a * a);
    const double erf_term = std::erf(a / std::sqrt(2.0));
    if (q == 1) return s * (pdf_term + a * erf_term);
    if (q == 3) return s * s * s * ((a * a + 2.0) * pdf_term + a * (a * a + 3.0) * erf_term);
  }
  throw UsageError("moment_q: unsupported order for Gaussian of this dimension");
}

double moment_q(const GridMeasure& mu, int q) {
  if (q < 0) throw UsageError("moment_q: q must be nonnegative");
  // Truncation safety: the integrand must have decayed at the grid boundary.
  double acc = 0.0;
  double max_integrand = 0.0;
  double max_boundary_integrand = 0.0;
  const auto& axes = mu.axes();
  std::vector<int> idx;
  for_each_node(axes, [&](std::int64_t flat, const Eigen::VectorXd& x) {
    const double v = norm_pow(x, q) * mu.density()[flat];
    acc += v;
    if (v > max_integrand) max_integrand = v;
  });
  for (std::int64_t flat = 0; flat < mu.size(); ++flat) {
    std::int64_t rem = flat;
    bool edge = false;
    for (int k = 0; k < mu.dim(); ++k) {
      std::int64_t stride = 1;
      for (int l = k + 1; l < mu.dim(); ++l) stride *= axes[l].n;
      const int i = static_cast<int>(rem / stride);
      rem %= stride;
      if (i == 0 || i == axes[k].n - 1) edge = true;
    }
    if (edge) {
      const double v = norm_pow(mu.node(flat), q) * mu.density()[flat];
      if (v > max_boundary_integrand) max_boundary_integrand = v;
    }
  }
  if (max_boundary_integrand > 1e-12 * max_integrand)
    throw TruncationError("moment_q: integrand has not decayed at the boundary",
                          max_boundary_integrand * mu.cell_volume());
  return acc * mu.cell_volume();
}

double moment_q(const EmpiricalMeasure& mu, int q) {
  if (q < 0) throw UsageError("moment_q: q must be nonnegative");
  double acc = 0.0;
  for (int i = 0; i < mu.count(); ++i)
    acc += norm_pow(mu.particles.row(i).transpose(), q);
  return acc / mu.count();
}

// ---------------------------------------------------------------------------
// Mean / covariance
// ---------------------------------------------------------------------------

std::pair<Eigen::VectorXd, Eigen::MatrixXd> mean_cov(const GaussianMeasure& mu) {
  return {mu.mean, mu.cov};
}

std::pair<Eigen::VectorXd, Eigen::MatrixXd> mean_cov(const GridMeasure& mu) {
  const int d = mu.dim();
  Eigen::VectorXd m = Eigen::VectorXd::Zero(d);
  for_each_node(mu.axes(), [&](std::int64_t flat, const Eigen::VectorXd& x) {
    m += mu.density()[flat] * x;
  });
  m *= mu.cell_volume();
  Eigen::MatrixXd c = Eigen::MatrixXd::Zero(d, d);
  for_each_node(mu.axes(), [&](std::int64_t flat, const Eigen::VectorXd& x) {
    const Eigen::VectorXd dlt = x - m;
    c.noalias() += mu.density()[flat] * (dlt * dlt.transpose());
  });
  c *= mu.cell_volume();
  return {m, c};
}

std::pair<Eigen::VectorXd, Eigen::MatrixXd> mean_cov(const EmpiricalMeasure& mu) {
  const Eigen::VectorXd m = mu.particles.colwise().mean();
  const Eigen::MatrixXd centered = mu.particles.rowwise() - m.transpose();
  const Eigen::MatrixXd c =
      (centered.transpose() * centered) / double(mu.count());
  return {m, c};
}

// ---------------------------------------------------------------------------
// Joint blocks
// ---------------------------------------------------------------------------

namespace {
JointMoments split_blocks(const Eigen::VectorXd& m, const Eigen::MatrixXd& c,
                          int du) {
  const int dy = static_cast<int>(m.size()) - du;
  if (du <= 0 || dy <= 0) throw UsageError("joint_blocks: bad state dimension");
  JointMoments jm;
  jm.m_u = m.head(du);
  jm.m_y = m.tail(dy);
  jm.c_uu = c.topLeftCorner(du, du);
  jm.c_uy = c.topRightCorner(du, dy);
  jm.c_yy = c.bottomRightCorner(dy, dy);
  return jm;
}
}  // namespace

JointMoments joint_blocks(const GridMeasure& joint, int du) {
  auto [m, c] = mean_cov(joint);
  return split_blocks(m, c, du);
}

JointMoments joint_blocks(const GaussianMeasure& joint, int du) {
  return split_blocks(joint.mean, joint.cov, du);
}

JointMoments joint_blocks(const Eigen::MatrixXd& u, const Eigen::MatrixXd& y) {
  if (u.rows() != y.rows()) throw UsageError("joint_blocks: particle count mismatch");
  Eigen::MatrixXd joint(u.rows(), u.cols() + y.cols());
  joint << u, y;
  auto [m, c] = mean_cov(EmpiricalMeasure(joint));
  return split_blocks(m, c, static_cast<int>(u.cols()));
}

// ---------------------------------------------------------------------------
// Gaussian projection, weighted TV, expectations
// ---------------------------------------------------------------------------

namespace {
GaussianMeasure project_from(const std::pair<Eigen::VectorXd, Eigen::MatrixXd>& mc) {
  Eigen::MatrixXd c = 0.5 * (mc.second + mc.second.transpose());
  return GaussianMeasure(mc.first, std::move(c));
}
}  // namespace

GaussianMeasure gaussian_projection(const GaussianMeasure& mu) {
  return project_from(mean_cov(mu));
}
GaussianMeasure gaussian_projection(const GridMeasure& mu) {
  return project_from(mean_cov(mu));
}
GaussianMeasure gaussian_projection(const EmpiricalMeasure& mu) {
  return project_from(mean_cov(mu));
}

double weighted_tv(const GridMeasure& mu1, const GridMeasure& mu2) {
  if (mu1.axes().size() != mu2.axes().size())
    throw UsageError("weighted_tv: dimension mismatch");
  for (std::size_t k = 0; k < mu1.axes().size(); ++k)
    if (!(mu1.axes()[k] == mu2.axes()[k]))
      throw UsageError("weighted_tv: grids must share identical axes");
  double acc = 0.0;
  for_each_node(mu1.axes(), [&](std::int64_t flat, const Eigen::VectorXd& x) {
    acc += (1.0 + x.squaredNorm()) * std::abs(mu1.density()[flat] - mu2.density()[flat]);
  });
  return acc * mu1.cell_volume();
}

double expectation(const GaussianMeasure& mu, const Observable& phi) {
  switch (phi.kind) {
    case Observable::Kind::constant:
      return 1.0;
    case Observable::Kind::coordinate:
      return mu.mean[phi.i];
    case Observable::Kind::squared_norm:
      return mu.mean.squaredNorm() + mu.cov.trace();
    case Observable::Kind::monomial:
      return mu.mean[phi.i] * mu.mean[phi.j] + mu.cov(phi.i, phi.j);
  }
  return 0.0;
}

double expectation(const GridMeasure& mu, const Observable& phi) {
  double acc = 0.0;
  for_each_node(mu.axes(), [&](std::int64_t flat, const Eigen::VectorXd& x) {
    acc += phi(x) * mu.density()[flat];
  });
  return acc * mu.cell_volume();
}

double expectation(const EmpiricalMeasure& mu, const Observable& phi) {
  double acc = 0.0;
  for (int i = 0; i < mu.count(); ++i)
    acc += phi(mu.particles.row(i).transpose());
  return acc / mu.count();
}

// ---------------------------------------------------------------------------
// P_R membership
// ---------------------------------------------------------------------------

namespace {
bool in_P_R_impl(const std::pair<Eigen::VectorXd, Eigen::MatrixXd>& mc, double R) {
  if (R < 1.0) throw UsageError("in_P_R: R must be >= 1");
  if (mc.first.norm() > R) return false;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(mc.second);
  return es.eigenvalues().minCoeff() >= 1.0 / (R * R) &&
         es.eigenvalues().maxCoeff() <= R * R;
}

double minimal_P_R_impl(const std::pair<Eigen::VectorXd, Eigen::MatrixXd>& mc) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(mc.second);
  const double lo = es.eigenvalues().minCoeff();
  const double hi = es.eigenvalues().maxCoeff();
  if (lo <= 0.0) throw DegenerateError("minimal_P_R: singular covariance");
  double R = std::max(1.0, mc.first.norm());
  R = std::max(R, std::sqrt(hi));
  R = std::max(R, 1.0 / std::sqrt(lo));
  return R;
}
}  // namespace

template <class M>
bool in_P_R(const M& mu, double R) {
  return in_P_R_impl(mean_cov(mu), R);
}
template bool in_P_R<GaussianMeasure>(const GaussianMeasure&, double);
template bool in_P_R<GridMeasure>(const GridMeasure&, double);
template bool in_P_R<EmpiricalMeasure>(const EmpiricalMeasure&, double);

template <class M>
double minimal_P_R(const M& mu) {
  return minimal_P_R_impl(mean_cov(mu));
}
template double minimal_P_R<GaussianMeasure>(const GaussianMeasure&);
template double minimal_P_R<GridMeasure>(const GridMeasure&);
template double minimal_P_R<EmpiricalMeasure>(const EmpiricalMeasure&);

// ---------------------------------------------------------------------------
// Rendering
// ---------------------------------------------------------------------------

GridMeasure render_gaussian(const GaussianMeasure& mu, std::vector<GridAxis> axes) {
  if (static_cast<int>(axes.size()) != mu.dim())
    throw UsageError("render_gaussian: axes dimension mismatch");
  Eigen::LLT<Eigen::MatrixXd> llt(mu.cov);
  if (llt.info() != Eigen::Success)
    throw DegenerateError("render_gaussian: covariance not positive definite");
  double logdet = 0.0;
  for (int i = 0; i < mu.dim(); ++i) logdet += std::log(llt.matrixL()(i, i));
  const double logz = -0.5 * mu.dim() * std::log(2.0 * M_PI) - logdet;

  std::int64_t total = 1;
  for (const auto& a : axes) total *= a.n;
  Eigen::ArrayXd density(total);
  for_each_node(axes, [&](std::int64_t flat, const Eigen::VectorXd& x) {
    const Eigen::VectorXd w = llt.matrixL().solve(x - mu.mean);
    density[flat] = std::exp(logz - 0.5 * w.squaredNorm());
  });
  GridMeasure out(std::move(axes), std::move(density));
  out.normalize();
  return out;
}

}  // namespace enkflab::measures
