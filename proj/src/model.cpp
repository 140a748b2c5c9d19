#include "enkflab/model.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>
#include <Eigen/SVD>
#include <cmath>
#include <cstdio>
#include <sstream>

#include <json.hpp>

#include "enkflab/errors.hpp"
#include "enkflab/rng.hpp"

namespace enkflab::model {

using nlohmann::json;

// ---------------------------------------------------------------------------
// Perturbation catalog
// ---------------------------------------------------------------------------

const char* perturbation_name(PerturbationKind kind) {
  switch (kind) {
    case PerturbationKind::none:
      return "none";
    case PerturbationKind::sine:
      return "sine";
    case PerturbationKind::tanh:
      return "tanh";
    case PerturbationKind::gaussian_bump:
      return "gaussian_bump";
  }
  return "none";
}

PerturbationKind perturbation_from_name(const std::string& name) {
  if (name == "none") return PerturbationKind::none;
  if (name == "sine") return PerturbationKind::sine;
  if (name == "tanh") return PerturbationKind::tanh;
  if (name == "gaussian_bump") return PerturbationKind::gaussian_bump;
  throw ConfigError("unknown perturbation '" + name + "'");
}

double perturbation_lipschitz(PerturbationKind kind) {
  switch (kind) {
    case PerturbationKind::none:
      return 0.0;
    case PerturbationKind::sine:
      return 1.0;
    case PerturbationKind::tanh:
      return 1.0;
    case PerturbationKind::gaussian_bump:
      // max |d/dt exp(-t^2/2)| attained at t = 1.
      return std::exp(-0.5);
  }
  return 0.0;
}

double perturbation_scalar(PerturbationKind kind, double t) {
  switch (kind) {
    case PerturbationKind::none:
      return 0.0;
    case PerturbationKind::sine:
      return std::sin(t);
    case PerturbationKind::tanh:
      return std::tanh(t);
    case PerturbationKind::gaussian_bump:
      return std::exp(-0.5 * t * t);
  }
  return 0.0;
}

// ---------------------------------------------------------------------------
// VectorFieldSpec
// ---------------------------------------------------------------------------

Eigen::VectorXd VectorFieldSpec::affine_part(const Eigen::VectorXd& u) const {
  return linear * u + offset;
}

Eigen::VectorXd VectorFieldSpec::operator()(const Eigen::VectorXd& u) const {
  if (u.size() != in_dim())
    throw UsageError("VectorFieldSpec: input dimension mismatch");
  Eigen::VectorXd out = affine_part(u);
  if (eps != 0.0 && perturbation != PerturbationKind::none) {
    const double scale = eps / std::sqrt(double(out_dim()));
    for (int k = 0; k < out_dim(); ++k)
      out[k] += scale * perturbation_scalar(perturbation, u[k % in_dim()]);
  }
  return out;
}

double VectorFieldSpec::growth_kappa() const {
  const double op_norm = linear.jacobiSvd().singularValues()(0);
  return std::max(op_norm, offset.norm() + eps);
}

double VectorFieldSpec::lipschitz() const {
  const double op_norm = linear.jacobiSvd().singularValues()(0);
  return op_norm + eps * perturbation_lipschitz(perturbation);
}

VectorFieldSpec VectorFieldSpec::affine(Eigen::MatrixXd m, Eigen::VectorXd b) {
  if (m.rows() != b.size())
    throw ConfigError("VectorFieldSpec: offset size must match rows of linear part");
  return VectorFieldSpec{std::move(m), std::move(b), 0.0, PerturbationKind::none};
}

VectorFieldSpec VectorFieldSpec::affine_plus_bounded(Eigen::MatrixXd m,
                                                     Eigen::VectorXd b, double eps,
                                                     PerturbationKind kind) {
  if (m.rows() != b.size())
    throw ConfigError("VectorFieldSpec: offset size must match rows of linear part");
  if (eps < 0.0) throw ConfigError("VectorFieldSpec: eps must be >= 0");
  return VectorFieldSpec{std::move(m), std::move(b), eps, kind};
}

Eigen::VectorXd eval_field(const VectorFieldSpec& field, const Eigen::VectorXd& u) {
  return field(u);
}

// ---------------------------------------------------------------------------
// ModelSpec
// ---------------------------------------------------------------------------

namespace {

// Structural problems (shape, asymmetry) are rejected here; a merely singular
// covariance is tolerated so validate_assumptions can report it, and the
// missing factor trips a ConfigError at the first sampling operation.
Eigen::MatrixXd try_cholesky(const Eigen::MatrixXd& m, const char* name,
                             double* min_eig = nullptr) {
  if (m.rows() != m.cols()) throw ConfigError(std::string(name) + ": not square");
  const double scale = std::max(1.0, m.cwiseAbs().maxCoeff());
  if ((m - m.transpose()).cwiseAbs().maxCoeff() > 1e-12 * scale)
    throw ConfigError(std::string(name) + ": not symmetric");
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(m);
  const double lo = es.eigenvalues().minCoeff();
  if (min_eig) *min_eig = lo;
  if (lo <= 0.0) return Eigen::MatrixXd();
  Eigen::LLT<Eigen::MatrixXd> llt(m);
  if (llt.info() != Eigen::Success) return Eigen::MatrixXd();
  return llt.matrixL();
}

}  // namespace

ModelSpec ModelSpec::create(VectorFieldSpec dynamics, VectorFieldSpec observation,
                            Eigen::MatrixXd sigma, Eigen::MatrixXd gamma,
                            Eigen::VectorXd m0, Eigen::MatrixXd c0) {
  ModelSpec m;
  m.dim_u = dynamics.out_dim();
  m.dim_y = observation.out_dim();
  if (dynamics.in_dim() != m.dim_u)
    throw ConfigError("ModelSpec: dynamics must map state space to itself");
  if (observation.in_dim() != m.dim_u)
    throw ConfigError("ModelSpec: observation must act on the state space");
  if (sigma.rows() != m.dim_u || gamma.rows() != m.dim_y)
    throw ConfigError("ModelSpec: covariance dimensions mismatch");
  if (m0.size() != m.dim_u || c0.rows() != m.dim_u)
    throw ConfigError("ModelSpec: initial measure dimension mismatch");
  if (!m0.allFinite()) throw ConfigError("ModelSpec: m0 must be finite");
  m.dynamics = std::move(dynamics);
  m.observation = std::move(observation);
  m.sigma = std::move(sigma);
  m.gamma = std::move(gamma);
  m.m0 = std::move(m0);
  m.c0 = std::move(c0);
  m.chol_sigma = try_cholesky(m.sigma, "Sigma", &m.sigma_min_eig);
  m.chol_gamma = try_cholesky(m.gamma, "Gamma", &m.gamma_min_eig);
  m.chol_c0 = try_cholesky(m.c0, "C0");
  return m;
}

void require_sampleable(const ModelSpec& model) {
  if (model.chol_sigma.size() == 0)
    throw ConfigError("Sigma: not positive definite (Cholesky failure)");
  if (model.chol_gamma.size() == 0)
    throw ConfigError("Gamma: not positive definite (Cholesky failure)");
  if (model.chol_c0.size() == 0)
    throw ConfigError("C0: not positive definite (Cholesky failure)");
}

// ---------------------------------------------------------------------------
// JSON serialization (matrices row-major, 17 significant digits)
// ---------------------------------------------------------------------------

namespace {

void append_g17(std::string& out, double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  out += buf;
}

void append_vector(std::string& out, const Eigen::VectorXd& v) {
  out += "[";
  for (int i = 0; i < v.size(); ++i) {
    if (i) out += ",";
    append_g17(out, v[i]);
  }
  out += "]";
}

void append_matrix(std::string& out, const Eigen::MatrixXd& m) {
  out += "[";
  for (int r = 0; r < m.rows(); ++r) {
    if (r) out += ",";
    append_vector(out, m.row(r).transpose());
  }
  out += "]";
}

void append_field(std::string& out, const VectorFieldSpec& f) {
  out += "{\"kind\":\"";
  out += f.is_affine() ? "affine" : "affine_plus_bounded";
  out += "\",\"linear\":";
  append_matrix(out, f.linear);
  out += ",\"offset\":";
  append_vector(out, f.offset);
  out += ",\"eps\":";
  append_g17(out, f.eps);
  out += ",\"perturbation\":\"";
  out += perturbation_name(f.perturbation);
  out += "\"}";
}

Eigen::VectorXd vector_from_json(const json& j) {
  Eigen::VectorXd v(j.size());
  for (std::size_t i = 0; i < j.size(); ++i) v[i] = j[i].get<double>();
  return v;
}

Eigen::MatrixXd matrix_from_json(const json& j) {
  const std::size_t rows = j.size();
  if (rows == 0) throw ConfigError("JSON matrix: empty");
  const std::size_t cols = j[0].size();
  Eigen::MatrixXd m(rows, cols);
  for (std::size_t r = 0; r < rows; ++r) {
    if (j[r].size() != cols) throw ConfigError("JSON matrix: ragged rows");
    for (std::size_t c = 0; c < cols; ++c) m(r, c) = j[r][c].get<double>();
  }
  return m;
}

VectorFieldSpec field_from_json(const json& j) {
  const std::string kind = j.at("kind").get<std::string>();
  Eigen::MatrixXd linear = matrix_from_json(j.at("linear"));
  Eigen::VectorXd offset = vector_from_json(j.at("offset"));
  if (kind == "affine")
    return VectorFieldSpec::affine(std::move(linear), std::move(offset));
  if (kind == "affine_plus_bounded")
    return VectorFieldSpec::affine_plus_bounded(
        std::move(linear), std::move(offset), j.at("eps").get<double>(),
        perturbation_from_name(j.at("perturbation").get<std::string>()));
  throw ConfigError("VectorFieldSpec: unknown kind '" + kind + "'");
}

}  // namespace

std::string ModelSpec::to_json() const {
  std::string out = "{\"dim_u\":" + std::to_string(dim_u) +
                    ",\"dim_y\":" + std::to_string(dim_y) + ",\"dynamics\":";
  append_field(out, dynamics);
  out += ",\"observation\":";
  append_field(out, observation);
  out += ",\"sigma\":";
  append_matrix(out, sigma);
  out += ",\"gamma\":";
  append_matrix(out, gamma);
  out += ",\"m0\":";
  append_vector(out, m0);
  out += ",\"c0\":";
  append_matrix(out, c0);
  out += "}";
  return out;
}

ModelSpec ModelSpec::from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("ModelSpec: invalid JSON: ") + e.what());
  }
  try {
    ModelSpec m = ModelSpec::create(
        field_from_json(j.at("dynamics")), field_from_json(j.at("observation")),
        matrix_from_json(j.at("sigma")), matrix_from_json(j.at("gamma")),
        vector_from_json(j.at("m0")), matrix_from_json(j.at("c0")));
    if (j.contains("dim_u") && j.at("dim_u").get<int>() != m.dim_u)
      throw ConfigError("ModelSpec: dim_u inconsistent with dynamics");
    if (j.contains("dim_y") && j.at("dim_y").get<int>() != m.dim_y)
      throw ConfigError("ModelSpec: dim_y inconsistent with observation");
    return m;
  } catch (const json::exception& e) {
    throw ConfigError(std::string("ModelSpec: missing field: ") + e.what());
  }
}

std::string DataRecord::to_json() const {
  std::string out = "{\"J\":" + std::to_string(J) +
                    ",\"seed\":" + std::to_string(seed) + ",\"kappa_y\":";
  append_g17(out, kappa_y);
  out += ",\"truth\":";
  append_matrix(out, truth);
  out += ",\"observations\":";
  append_matrix(out, observations);
  out += "}";
  return out;
}

DataRecord DataRecord::from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("DataRecord: invalid JSON: ") + e.what());
  }
  DataRecord d;
  try {
    d.J = j.at("J").get<int>();
    d.seed = j.at("seed").get<std::uint64_t>();
    d.kappa_y = j.at("kappa_y").get<double>();
    d.truth = matrix_from_json(j.at("truth"));
    d.observations = matrix_from_json(j.at("observations"));
  } catch (const json::exception& e) {
    throw ConfigError(std::string("DataRecord: missing field: ") + e.what());
  }
  if (d.truth.rows() != d.J + 1 || d.observations.rows() != d.J)
    throw ConfigError("DataRecord: lengths inconsistent with J");
  double ky = 0.0;
  for (int r = 0; r < d.observations.rows(); ++r)
    ky = std::max(ky, d.observations.row(r).norm());
  if (std::abs(ky - d.kappa_y) > 1e-12 * std::max(1.0, ky))
    throw ConfigError("DataRecord: kappa_y does not match realized maximum");
  return d;
}

// ---------------------------------------------------------------------------
// Simulation
// ---------------------------------------------------------------------------

DataRecord simulate_truth(const ModelSpec& model, int J, std::uint64_t seed) {
  if (J < 0) throw UsageError("simulate_truth: J must be >= 0");
  require_sampleable(model);
  DataRecord d;
  d.J = J;
  d.seed = seed;
  d.truth.resize(J + 1, model.dim_u);
  d.observations.resize(J, model.dim_y);

  using rng::Role;
  Eigen::VectorXd u =
      model.m0 +
      model.chol_c0 * rng::normal_vector(seed, 0, 0, 0, Role::truth_init, model.dim_u);
  d.truth.row(0) = u.transpose();
  double ky = 0.0;
  for (int j = 0; j < J; ++j) {
    const Eigen::VectorXd xi =
        model.chol_sigma *
        rng::normal_vector(seed, 0, 0, std::uint32_t(j), Role::truth_dynamics,
                           model.dim_u);
    u = model.dynamics(u) + xi;
    d.truth.row(j + 1) = u.transpose();
    const Eigen::VectorXd eta =
        model.chol_gamma *
        rng::normal_vector(seed, 0, 0, std::uint32_t(j + 1), Role::truth_observation,
                           model.dim_y);
    const Eigen::VectorXd y = model.observation(u) + eta;
    d.observations.row(j) = y.transpose();
    ky = std::max(ky, y.norm());
  }
  d.kappa_y = ky;
  return d;
}

// ---------------------------------------------------------------------------
// Assumption validation
// ---------------------------------------------------------------------------

bool AssumptionReport::all_pass() const {
  for (const auto& e : entries)
    if (!e.pass) return false;
  return true;
}

std::string AssumptionReport::to_string() const {
  std::ostringstream os;
  for (const auto& e : entries) {
    os << (e.pass ? "[pass] " : "[FAIL] ") << e.id << ": measured=" << e.measured
       << " declared=" << e.declared;
    if (!e.detail.empty()) os << " (" << e.detail << ")";
    os << "\n";
  }
  return os.str();
}

AssumptionReport validate_assumptions(const ModelSpec& model,
                                      const std::vector<Eigen::VectorXd>& probes) {
  if (probes.empty())
    throw UsageError("validate_assumptions: empty probe set");
  for (const auto& p : probes)
    if (p.size() != model.dim_u)
      throw UsageError("validate_assumptions: probe dimension mismatch");

  AssumptionReport rep;
  const double slack = 1e-12;

  auto growth_entry = [&](const char* id, const VectorFieldSpec& f) {
    double measured = 0.0;
    for (const auto& p : probes)
      measured = std::max(measured, f(p).norm() / (1.0 + p.norm()));
    const double declared = f.growth_kappa();
    rep.entries.push_back({id, measured <= declared + slack, measured, declared,
                           "sup |f(u)| / (1+|u|) over probes"});
  };
  growth_entry("growth_dynamics", model.dynamics);
  growth_entry("growth_observation", model.observation);

  {
    double measured = 0.0;
    for (std::size_t a = 0; a < probes.size(); ++a)
      for (std::size_t b = a + 1; b < probes.size(); ++b) {
        const double du = (probes[a] - probes[b]).norm();
        if (du < 1e-14) continue;
        measured = std::max(
            measured,
            (model.observation(probes[a]) - model.observation(probes[b])).norm() / du);
      }
    const double declared = model.observation.lipschitz();
    rep.entries.push_back({"lipschitz_observation", measured <= declared + slack,
                           measured, declared, "sup difference quotient over probe pairs"});
  }

  rep.entries.push_back({"spd_sigma", model.sigma_min_eig > 0.0, model.sigma_min_eig,
                         0.0, "smallest eigenvalue must be > 0"});
  rep.entries.push_back({"spd_gamma", model.gamma_min_eig > 0.0, model.gamma_min_eig,
                         0.0, "smallest eigenvalue must be > 0"});

  auto ball_entry = [&](const char* id, const VectorFieldSpec& f) {
    if (f.is_affine()) return;
    double measured = 0.0;
    for (const auto& p : probes)
      measured = std::max(measured, (f(p) - f.affine_part(p)).norm());
    rep.entries.push_back({id, measured <= f.eps + slack, measured, f.eps,
                           "sup |field - affine base| over probes"});
  };
  ball_entry("eps_ball_dynamics", model.dynamics);
  ball_entry("eps_ball_observation", model.observation);

  return rep;
}

std::vector<Eigen::VectorXd> default_probes(int dim, double extent, int per_dim) {
  if (dim < 1 || per_dim < 2) throw UsageError("default_probes: bad arguments");
  std::vector<Eigen::VectorXd> probes;
  std::vector<int> idx(dim, 0);
  const std::int64_t total = static_cast<std::int64_t>(std::pow(per_dim, dim));
  probes.reserve(total);
  for (std::int64_t flat = 0; flat < total; ++flat) {
    Eigen::VectorXd p(dim);
    std::int64_t rem = flat;
    for (int k = 0; k < dim; ++k) {
      const int i = static_cast<int>(rem % per_dim);
      rem /= per_dim;
      p[k] = -extent + 2.0 * extent * i / (per_dim - 1);
    }
    probes.push_back(std::move(p));
  }
  return probes;
}

}  // namespace enkflab::model
