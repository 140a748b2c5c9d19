#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

namespace enkflab::measures {

// ---------------------------------------------------------------------------
// Representations
// ---------------------------------------------------------------------------

// One uniform axis of a tensor-product grid. Nodes are midpoints of n equal
// cells over [lo, hi], so summing density * cell volume is the midpoint rule.
struct GridAxis {
  double lo = 0.0;
  double hi = 0.0;
  int n = 0;

  double dx() const { return (hi - lo) / n; }
  double node(int i) const { return lo + (i + 0.5) * dx(); }
};

bool operator==(const GridAxis& a, const GridAxis& b);

// Probability density on a truncated tensor-product grid.
class GridMeasure {
public:
  GridMeasure() = default;
  GridMeasure(std::vector<GridAxis> axes, Eigen::ArrayXd density);

  int dim() const { return static_cast<int>(axes_.size()); }
  const std::vector<GridAxis>& axes() const { return axes_; }
  const Eigen::ArrayXd& density() const { return density_; }
  Eigen::ArrayXd& density() { return density_; }
  double cell_volume() const { return cell_volume_; }
  std::int64_t size() const { return density_.size(); }

  double mass() const { return density_.sum() * cell_volume_; }
  void normalize();
  // Mass carried by the outermost layer of cells (truncation monitor).
  double boundary_mass() const;

  // Row-major flat indexing, axis 0 slowest.
  std::int64_t flat_index(const std::vector<int>& idx) const;
  Eigen::VectorXd node(std::int64_t flat) const;
  void unravel(std::int64_t flat, std::vector<int>& idx) const;

  // Midpoint-rule integral of f against the density.
  double integrate(const std::function<double(const Eigen::VectorXd&)>& f) const;

private:
  std::vector<GridAxis> axes_;
  Eigen::ArrayXd density_;
  double cell_volume_ = 0.0;
  std::vector<std::int64_t> strides_;
};

struct GaussianMeasure {
  Eigen::VectorXd mean;
  Eigen::MatrixXd cov;

  GaussianMeasure() = default;
  // Validates symmetry (1e-12 relative) and strict positive definiteness.
  GaussianMeasure(Eigen::VectorXd m, Eigen::MatrixXd c);
  int dim() const { return static_cast<int>(mean.size()); }
  double density_at(const Eigen::VectorXd& x) const;
};

struct EmpiricalMeasure {
  Eigen::MatrixXd particles;  // N x d, one particle per row

  EmpiricalMeasure() = default;
  explicit EmpiricalMeasure(Eigen::MatrixXd p);
  int count() const { return static_cast<int>(particles.rows()); }
  int dim() const { return static_cast<int>(particles.cols()); }
};

// Mean and covariance blocks of a joint measure over (u, y).
struct JointMoments {
  Eigen::VectorXd m_u;
  Eigen::VectorXd m_y;
  Eigen::MatrixXd c_uu;
  Eigen::MatrixXd c_uy;
  Eigen::MatrixXd c_yy;

  Eigen::VectorXd full_mean() const;
  Eigen::MatrixXd full_cov() const;
};

// ---------------------------------------------------------------------------
// Observables (the test functions of the error metrics)
// ---------------------------------------------------------------------------

// Catalog of observables with analytically certified growth metadata:
// |phi(u) - phi(v)| <= L_phi |u-v| (1 + |u|^s + |v|^s) and
// |phi(u)| <= R_phi (1 + |u|^{s+1}).
struct Observable {
  enum class Kind { constant, coordinate, squared_norm, monomial };

  Kind kind = Kind::constant;
  int i = 0;  // coordinate / first monomial index
  int j = 0;  // second monomial index
  double L_phi = 0.0;
  double R_phi = 1.0;
  int varsigma = 0;

  static Observable constant();
  static Observable coordinate(int k);
  static Observable squared_norm();
  static Observable monomial(int k, int l);
  static Observable parse(const std::string& id);

  double operator()(const Eigen::VectorXd& u) const;
  std::string id() const;
  // Growth envelope R_phi (1 + |u|^{s+1}); used for runtime spot-checks.
  double envelope(const Eigen::VectorXd& u) const;
};

// ---------------------------------------------------------------------------
// Operations
// ---------------------------------------------------------------------------

// q-th polynomial moment, integral of |x|^q.
double moment_q(const GaussianMeasure& mu, int q);
double moment_q(const GridMeasure& mu, int q);
double moment_q(const EmpiricalMeasure& mu, int q);

std::pair<Eigen::VectorXd, Eigen::MatrixXd> mean_cov(const GaussianMeasure& mu);
std::pair<Eigen::VectorXd, Eigen::MatrixXd> mean_cov(const GridMeasure& mu);
// Population (1/N) normalization, matching the empirical-measure covariance.
std::pair<Eigen::VectorXd, Eigen::MatrixXd> mean_cov(const EmpiricalMeasure& mu);

// Block decomposition of a joint measure with du leading state dimensions.
JointMoments joint_blocks(const GridMeasure& joint, int du);
JointMoments joint_blocks(const GaussianMeasure& joint, int du);
// Paired particle arrays (N x du and N x dy).
JointMoments joint_blocks(const Eigen::MatrixXd& u, const Eigen::MatrixXd& y);

GaussianMeasure gaussian_projection(const GaussianMeasure& mu);
GaussianMeasure gaussian_projection(const GridMeasure& mu);
GaussianMeasure gaussian_projection(const EmpiricalMeasure& mu);

// Weighted total variation: integral of (1+|v|^2) |rho1 - rho2| on the shared
// grid. Requires identical axes.
double weighted_tv(const GridMeasure& mu1, const GridMeasure& mu2);

double expectation(const GaussianMeasure& mu, const Observable& phi);
double expectation(const GridMeasure& mu, const Observable& phi);
double expectation(const EmpiricalMeasure& mu, const Observable& phi);

template <class M1, class M2>
double observable_error(const M1& mu1, const M2& mu2, const Observable& phi) {
  return std::abs(expectation(mu1, phi) - expectation(mu2, phi));
}

// Membership in P_R: |mean| <= R and R^-2 I <= cov <= R^2 I.
template <class M>
bool in_P_R(const M& mu, double R);
// Smallest R >= 1 with mu in P_R.
template <class M>
double minimal_P_R(const M& mu);

// Renders the Gaussian density on the grid and normalizes.
GridMeasure render_gaussian(const GaussianMeasure& mu, std::vector<GridAxis> axes);

// ---------------------------------------------------------------------------
// Serialization
// ---------------------------------------------------------------------------

// Binary layout: "EKGM", u32 version, u32 dim, per axis (f64 lo, f64 hi,
// u64 n), then the density as little-endian f64.
void write_binary(const GridMeasure& mu, std::ostream& os);
GridMeasure read_binary(std::istream& is);
void write_binary_file(const GridMeasure& mu, const std::string& path);
GridMeasure read_binary_file(const std::string& path);

// CSV: one row per node, coordinates then density.
void write_csv(const GridMeasure& mu, std::ostream& os);

}  // namespace enkflab::measures
