#include "core/synthgen.hpp"

#include "core/error.hpp"
#include "core/rng.hpp"

#include <cmath>

namespace cosub {

const char* to_string(DgpVariant v) {
  switch (v) {
    case DgpVariant::Continuous: return "continuous";
    case DgpVariant::BinarySubgroup: return "binary_subgroup";
    case DgpVariant::Null: return "null";
  }
  return "continuous";
}

DgpVariant parse_variant(const std::string& tag) {
  if (tag == "continuous") return DgpVariant::Continuous;
  if (tag == "binary_subgroup") return DgpVariant::BinarySubgroup;
  if (tag == "null") return DgpVariant::Null;
  fail(ErrorKind::Parameter, "unknown DGP variant '" + tag + "'");
}

DgpConfig DgpConfig::defaults() { return DgpConfig{}.resolved(); }

DgpConfig DgpConfig::resolved() const {
  DgpConfig c = *this;
  require(c.p >= 1, ErrorKind::Parameter, "p must be >= 1");
  require(c.n >= 1, ErrorKind::Parameter, "n must be >= 1");
  require(c.sigma_x > 0.0, ErrorKind::Parameter, "sigma_x must be > 0");
  require(c.sigma_y >= 0.0, ErrorKind::Parameter, "sigma_y must be >= 0");
  require(c.rho >= 0.0 && c.rho < 1.0, ErrorKind::Parameter,
          "rho must lie in [0,1) for a positive-definite covariance");
  require(c.omega_tilde >= 0.0, ErrorKind::Parameter, "omega_tilde must be >= 0");
  if (c.beta1.size() == 0) {
    c.beta1 = Vector::Zero(c.p);
    if (c.p >= 5) c.beta1[4] = 2.0;
  }
  if (c.beta_tau.size() == 0) {
    c.beta_tau = Vector::Zero(c.p);
    c.beta_tau.head(std::min(4, c.p)).setConstant(0.5);
  }
  if (c.omega_base.size() == 0) {
    c.omega_base = Vector::Zero(c.p);
    const double w[] = {0, -1, -1, 1, 1, -2};
    for (int j = 0; j < std::min(6, c.p); ++j) c.omega_base[j] = w[j];
  }
  require(c.beta1.size() == c.p && c.beta_tau.size() == c.p && c.omega_base.size() == c.p,
          ErrorKind::Parameter, "beta1, beta_tau and omega_base must have length p");
  if (c.variant == DgpVariant::Null) c.beta_tau.setZero();
  if (c.aux_scale == 0.0) c.aux_scale = c.sigma_x;
  require(c.aux_scale > 0.0, ErrorKind::Parameter, "aux_scale must be > 0");
  if (c.constraint_aux) {
    require(c.p >= 10, ErrorKind::Parameter, "constraint aux columns need p >= 10");
  }
  return c;
}

Matrix sample_covariates(const DgpConfig& cfg_in, std::uint64_t seed) {
  const DgpConfig cfg = cfg_in.resolved();
  const int p = cfg.p;
  const double var = cfg.sigma_x * cfg.sigma_x;
  Matrix cov = Matrix::Constant(p, p, var * cfg.rho);
  cov.diagonal().setConstant(var);
  Eigen::LLT<Matrix> llt(cov);
  if (llt.info() != Eigen::Success) fail(ErrorKind::Parameter, "covariance is not positive definite");
  const Matrix lower = llt.matrixL();

  Rng rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  Matrix z(cfg.n, p);
  for (Index i = 0; i < cfg.n; ++i)
    for (int j = 0; j < p; ++j) z(i, j) = normal(rng);
  return z * lower.transpose();
}

TreatmentDraw assign_treatment(const Matrix& x, const Vector& omega, std::uint64_t seed) {
  require(x.cols() == omega.size(), ErrorKind::Parameter, "omega length must equal the covariate dimension");
  TreatmentDraw out;
  out.propensity = (-(x * omega).array()).exp().unaryExpr([](double e) { return 1.0 / (1.0 + e); });
  out.treatment.resize(x.rows());
  Rng rng(seed);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  for (Index i = 0; i < x.rows(); ++i) out.treatment[i] = unif(rng) < out.propensity[i] ? 1 : 0;
  return out;
}

OutcomeDraw gen_outcomes(const Matrix& x, const Eigen::VectorXi& treatment, const DgpConfig& cfg_in,
                         std::uint64_t seed) {
  const DgpConfig cfg = cfg_in.resolved();
  require(x.cols() == cfg.p, ErrorKind::Parameter, "covariate dimension must equal p");
  require(treatment.size() == x.rows(), ErrorKind::Parameter, "treatment length must equal n");
  const Index n = x.rows();

  const Matrix basis = (10.0 * x.array()).sin().matrix() + 5.0 * x.array().square().matrix();
  const Vector base = basis * cfg.beta1;

  OutcomeDraw out;
  if (cfg.variant == DgpVariant::BinarySubgroup) {
    const Matrix indicator = (x.array() > 0.05).cast<double>().matrix();
    out.true_ite = indicator * cfg.beta_tau;
    out.true_label = (out.true_ite.array() > 0.0).cast<double>().matrix();
  } else {
    out.true_ite = x * cfg.beta_tau;
  }

  Rng rng(seed);
  std::normal_distribution<double> normal(0.0, cfg.sigma_y);
  Vector eps(n);
  for (Index i = 0; i < n; ++i) eps[i] = cfg.sigma_y > 0.0 ? normal(rng) : 0.0;

  // A single noise draw per sample is shared by both potential outcomes.
  out.y0 = base + eps;
  out.y1 = out.y0 + out.true_ite;
  out.outcome.resize(n);
  for (Index i = 0; i < n; ++i) out.outcome[i] = treatment[i] == 1 ? out.y1[i] : out.y0[i];
  return out;
}

ConstraintAux attach_constraint_aux(const Matrix& x, RiskForm form) {
  require(x.cols() >= 10, ErrorKind::Parameter, "constraint aux columns need at least 10 covariates");
  ConstraintAux out;
  const auto x3 = x.col(2).array();
  const auto x10 = x.col(9).array();
  const double shift = form == RiskForm::InnerOffset ? 10.0 : 1.0;
  out.risk = (1.0 / (1.0 + (10.0 * x10 + shift).exp())).matrix();
  out.cost = ((x3 + 5.0) / 5.0).matrix();
  out.sensitive = (x3 > 0.5).cast<double>().matrix();
  return out;
}

Dataset generate_dataset(const DgpConfig& cfg_in, std::uint64_t seed) {
  const DgpConfig cfg = cfg_in.resolved();
  Matrix x = sample_covariates(cfg, derive_seed(seed, Stream::Covariates));
  auto draw = assign_treatment(x, cfg.omega(), derive_seed(seed, Stream::Treatment));
  auto y = gen_outcomes(x, draw.treatment, cfg, derive_seed(seed, Stream::Noise));

  Dataset ds(x, draw.treatment, y.outcome);
  ds = ds.with_aux(aux::kTrueIte, y.true_ite);
  ds = ds.with_aux("true_propensity", draw.propensity);
  if (cfg.variant == DgpVariant::BinarySubgroup) ds = ds.with_aux(aux::kTrueLabel, y.true_label);
  if (cfg.constraint_aux) {
    const auto extra = attach_constraint_aux(x / cfg.aux_scale, cfg.risk_form);
    ds = ds.with_aux(aux::kRisk, extra.risk);
    ds = ds.with_aux(aux::kCost, extra.cost);
    ds = ds.with_aux(aux::kSensitive, extra.sensitive);
  }
  return ds;
}

}  // namespace cosub
