#include "core/nuisance.hpp"

#include "core/error.hpp"
#include "core/rng.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace cosub {

namespace {

double logistic(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

// log(1 + exp(z)) without overflow
double softplus(double z) { return z > 0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z)); }

}  // namespace

Standardizer Standardizer::fit(const Matrix& x) {
  Standardizer s;
  s.mean = x.colwise().mean().transpose();
  s.scale.resize(x.cols());
  for (Index j = 0; j < x.cols(); ++j) {
    const double var = (x.col(j).array() - s.mean[j]).square().mean();
    s.scale[j] = var > 0.0 ? std::sqrt(var) : 1.0;
  }
  return s;
}

Standardizer Standardizer::identity(Index d) { return {Vector::Zero(d), Vector::Ones(d)}; }

Matrix Standardizer::apply(const Matrix& x) const {
  require(x.cols() == mean.size(), ErrorKind::Parameter,
          "input has " + std::to_string(x.cols()) + " features, model expects " + std::to_string(mean.size()));
  return ((x.rowwise() - mean.transpose()).array().rowwise() / scale.transpose().array()).matrix();
}

json Standardizer::to_json() const { return {{"mean", to_json_array(mean)}, {"scale", to_json_array(scale)}}; }

Standardizer Standardizer::from_json(const json& j) {
  return {vector_from_json(j.at("mean")), vector_from_json(j.at("scale"))};
}

Vector PropensityModel::predict_raw(const Matrix& x) const {
  const Vector eta = (scaler.apply(x) * weights).array() + bias;
  return eta.unaryExpr([](double z) { return logistic(z); });
}

json PropensityModel::to_json() const {
  return {{"kind", "logistic_regression"},
          {"weights", to_json_array(weights)},
          {"bias", bias},
          {"standardization", scaler.to_json()},
          {"converged", converged},
          {"iterations", iterations},
          {"final_grad_norm", final_grad_norm}};
}

PropensityModel PropensityModel::from_json(const json& j) {
  PropensityModel m;
  m.weights = vector_from_json(j.at("weights"));
  m.bias = j.at("bias").get<double>();
  m.scaler = Standardizer::from_json(j.at("standardization"));
  m.converged = j.value("converged", false);
  m.iterations = j.value("iterations", 0);
  m.final_grad_norm = j.value("final_grad_norm", 0.0);
  return m;
}

double propensity_loss(const Vector& weights, double bias, const Matrix& z, const Eigen::VectorXi& a,
                       double l2, Vector* grad) {
  const Index n = z.rows();
  const Vector eta = (z * weights).array() + bias;
  double loss = 0.0;
  Vector resid(n);
  for (Index i = 0; i < n; ++i) {
    loss += softplus(eta[i]) - a[i] * eta[i];
    resid[i] = logistic(eta[i]) - a[i];
  }
  loss = loss / static_cast<double>(n) + 0.5 * l2 * weights.squaredNorm();
  if (grad) {
    grad->resize(weights.size() + 1);
    grad->head(weights.size()) = z.transpose() * resid / static_cast<double>(n) + l2 * weights;
    (*grad)[weights.size()] = resid.mean();
  }
  return loss;
}

PropensityModel fit_propensity(const Dataset& ds, double l2, int max_iters, double tol) {
  ds.require_both_arms("fit_propensity");
  require(l2 >= 0.0, ErrorKind::Parameter, "l2 must be >= 0");
  require(max_iters >= 1 && tol > 0.0, ErrorKind::Parameter, "max_iters must be >= 1 and tol > 0");

  PropensityModel model;
  model.scaler = Standardizer::fit(ds.features());
  const Matrix z = model.scaler.apply(ds.features());
  const Index n = z.rows();
  const Index d = z.cols();

  // Smoothness constant of the mean logistic loss: 0.25 * lambda_max(Z1^T Z1 / n) + l2.
  Matrix z1(n, d + 1);
  z1 << z, Vector::Ones(n);
  const Matrix gram = z1.transpose() * z1 / static_cast<double>(n);
  Eigen::SelfAdjointEigenSolver<Matrix> eig(gram, Eigen::EigenvaluesOnly);
  const double smooth = 0.25 * eig.eigenvalues().maxCoeff() + l2;
  const double step = 1.0 / smooth;

  model.weights = Vector::Zero(d);
  Vector grad;
  for (int it = 1; it <= max_iters; ++it) {
    const double loss = propensity_loss(model.weights, model.bias, z, ds.treatment(), l2, &grad);
    if (!std::isfinite(loss) || !grad.allFinite()) {
      fail(ErrorKind::Numerical, "propensity fit produced a non-finite loss at iteration " + std::to_string(it));
    }
    model.iterations = it;
    model.final_grad_norm = grad.cwiseAbs().maxCoeff();
    if (model.final_grad_norm < tol) {
      model.converged = true;
      break;
    }
    model.weights -= step * grad.head(d);
    model.bias -= step * grad[d];
  }
  return model;
}

Vector OutcomeModel::predict(int arm, const Matrix& x) const {
  require(arm == 0 || arm == 1, ErrorKind::Parameter, "arm must be 0 or 1");
  const ArmNet& a = arms[arm];
  const Vector logit = a.net.forward(scaler.apply(x));
  if (link == OutcomeLink::Logistic) return logit.unaryExpr([](double z) { return logistic(z); });
  return (logit.array() * a.y_scale + a.y_mean).matrix();
}

json OutcomeModel::to_json() const {
  json arms_json = json::array();
  for (const auto& a : arms) {
    arms_json.push_back({{"inputs", a.net.inputs()},
                         {"hidden_size", a.net.hidden()},
                         {"activation", "relu"},
                         {"params", to_json_array(a.net.params())},
                         {"y_mean", a.y_mean},
                         {"y_scale", a.y_scale}});
  }
  return {{"kind", "per_arm_mlp"},
          {"link", link == OutcomeLink::Logistic ? "logistic" : "identity"},
          {"standardization", scaler.to_json()},
          {"arms", arms_json}};
}

OutcomeModel OutcomeModel::from_json(const json& j) {
  OutcomeModel m;
  m.link = j.at("link").get<std::string>() == "logistic" ? OutcomeLink::Logistic : OutcomeLink::Identity;
  m.scaler = Standardizer::from_json(j.at("standardization"));
  const auto& arms = j.at("arms");
  require(arms.size() == 2, ErrorKind::Schema, "outcome model needs exactly two arms");
  for (int k = 0; k < 2; ++k) {
    const auto& a = arms[static_cast<std::size_t>(k)];
    m.arms[k].net = DenseNet(a.at("inputs").get<Index>(), a.at("hidden_size").get<Index>());
    const Vector p = vector_from_json(a.at("params"));
    require(p.size() == m.arms[k].net.num_params(), ErrorKind::Schema, "outcome arm parameter count mismatch");
    m.arms[k].net.params() = p;
    m.arms[k].y_mean = a.at("y_mean").get<double>();
    m.arms[k].y_scale = a.at("y_scale").get<double>();
  }
  return m;
}

double outcome_loss(const DenseNet& net, const Matrix& z, const Vector& target, OutcomeLink link,
                    Vector* grad) {
  DenseNet::Cache cache;
  const Vector logit = net.forward(z, grad ? &cache : nullptr);
  const double n = static_cast<double>(z.rows());
  double loss = 0.0;
  Vector dlogit(z.rows());
  for (Index i = 0; i < z.rows(); ++i) {
    if (link == OutcomeLink::Identity) {
      const double r = logit[i] - target[i];
      loss += 0.5 * r * r;
      dlogit[i] = r / n;
    } else {
      loss += softplus(logit[i]) - target[i] * logit[i];
      dlogit[i] = (logistic(logit[i]) - target[i]) / n;
    }
  }
  if (grad) *grad = net.backward(z, cache, dlogit);
  return loss / n;
}

namespace {

// Adam over mini-batches; deterministic given the seed.
void train_arm(ArmNet& arm, const Matrix& z, const Vector& target, OutcomeLink link,
               const OutcomeFitOptions& opt, Rng& rng) {
  const Index n = z.rows();
  const Index batch = std::min<Index>(std::max(1, opt.batch_size), n);
  const double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
  Vector m = Vector::Zero(arm.net.num_params());
  Vector v = Vector::Zero(arm.net.num_params());
  std::vector<Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Index{0});
  long step = 0;
  Matrix zb;
  Vector tb;
  Vector grad;
  for (int epoch = 0; epoch < opt.epochs; ++epoch) {
    for (Index i = n - 1; i > 0; --i) {
      const auto j = static_cast<Index>(rng() % static_cast<std::uint64_t>(i + 1));
      std::swap(order[i], order[j]);
    }
    for (Index start = 0; start < n; start += batch) {
      const Index size = std::min(batch, n - start);
      zb.resize(size, z.cols());
      tb.resize(size);
      for (Index r = 0; r < size; ++r) {
        zb.row(r) = z.row(order[start + r]);
        tb[r] = target[order[start + r]];
      }
      const double loss = outcome_loss(arm.net, zb, tb, link, &grad);
      if (!std::isfinite(loss)) {
        fail(ErrorKind::Numerical, "outcome fit produced a non-finite loss in epoch " + std::to_string(epoch));
      }
      ++step;
      m = beta1 * m + (1 - beta1) * grad;
      v = beta2 * v + (1 - beta2) * grad.cwiseAbs2();
      const double c1 = 1.0 - std::pow(beta1, static_cast<double>(step));
      const double c2 = 1.0 - std::pow(beta2, static_cast<double>(step));
      arm.net.params().array() -= opt.lr * (m.array() / c1) / ((v.array() / c2).sqrt() + eps);
    }
  }
}

}  // namespace

OutcomeModel fit_outcome(const Dataset& ds, const OutcomeFitOptions& opt) {
  require(opt.hidden_size >= 1 && opt.epochs >= 1 && opt.lr > 0.0, ErrorKind::Parameter,
          "outcome fit needs hidden_size >= 1, epochs >= 1, lr > 0");
  for (int arm = 0; arm < 2; ++arm) {
    const Index count = arm == 1 ? ds.treated_count() : ds.control_count();
    if (count < 2) {
      fail(ErrorKind::Fit, std::string("fit_outcome: ") + (arm == 1 ? "treated" : "control") +
                               " arm has " + std::to_string(count) + " sample(s), need at least 2");
    }
  }

  OutcomeModel model;
  model.scaler = Standardizer::fit(ds.features());
  const Matrix z = model.scaler.apply(ds.features());
  const Vector& y = ds.outcome();
  if (opt.auto_link) {
    const bool binary = (y.array() == 0.0 || y.array() == 1.0).all();
    model.link = binary ? OutcomeLink::Logistic : OutcomeLink::Identity;
  } else {
    model.link = opt.link;
  }

  Rng rng(opt.seed);
  for (int arm = 0; arm < 2; ++arm) {
    std::vector<Index> rows;
    for (Index i = 0; i < ds.rows(); ++i)
      if (ds.treatment()[i] == arm) rows.push_back(i);
    const Index m = static_cast<Index>(rows.size());
    Matrix za(m, z.cols());
    Vector ya(m);
    for (Index r = 0; r < m; ++r) {
      za.row(r) = z.row(rows[r]);
      ya[r] = y[rows[r]];
    }
    ArmNet& a = model.arms[arm];
    a.net = DenseNet(z.cols(), opt.hidden_size);
    a.net.init_uniform(rng);
    Vector target = ya;
    if (model.link == OutcomeLink::Identity) {
      a.y_mean = ya.mean();
      const double sd = std::sqrt((ya.array() - a.y_mean).square().mean());
      a.y_scale = sd > 0.0 ? sd : 1.0;
      target = (ya.array() - a.y_mean) / a.y_scale;
    }
    train_arm(a, za, target, model.link, opt, rng);
  }
  return model;
}

NuisanceEstimates NuisanceEstimates::subset(const std::vector<Index>& rows) const {
  NuisanceEstimates out;
  out.clip = clip;
  const Index m = static_cast<Index>(rows.size());
  out.e_hat.resize(m);
  out.mu0_hat.resize(m);
  out.mu1_hat.resize(m);
  for (Index r = 0; r < m; ++r) {
    out.e_hat[r] = e_hat[rows[r]];
    out.mu0_hat[r] = mu0_hat[rows[r]];
    out.mu1_hat[r] = mu1_hat[rows[r]];
  }
  return out;
}

Vector clip_propensity(const Vector& e, double clip) {
  require(clip > 0.0 && clip < 0.5, ErrorKind::Parameter, "propensity clip must lie in (0, 0.5)");
  return e.cwiseMax(clip).cwiseMin(1.0 - clip);
}

NuisanceEstimates predict_nuisance(const PropensityModel& pm, const OutcomeModel& om, const Matrix& x,
                                   double clip) {
  require(x.cols() == pm.weights.size() && x.cols() == om.scaler.dims(), ErrorKind::Parameter,
          "covariate dimension does not match the fitted nuisance models");
  NuisanceEstimates est;
  est.clip = clip;
  est.e_hat = clip_propensity(pm.predict_raw(x), clip);
  est.mu0_hat = om.predict(0, x);
  est.mu1_hat = om.predict(1, x);
  return est;
}

BalanceResult count_unbalanced(const Dataset& ds, const Vector& e_hat, const RowMask& selection) {
  require(static_cast<Index>(selection.size()) == ds.rows() && e_hat.size() == ds.rows(),
          ErrorKind::Parameter, "selection and e_hat must have one entry per row");
  const Index d = ds.cols();
  const Matrix& x = ds.features();
  Vector weight = Vector::Zero(ds.rows());
  Vector mean[2] = {Vector::Zero(d), Vector::Zero(d)};
  double wsum[2] = {0.0, 0.0};
  for (Index i = 0; i < ds.rows(); ++i) {
    if (!selection[static_cast<std::size_t>(i)]) continue;
    const int a = ds.treatment()[i];
    weight[i] = a == 1 ? 1.0 / e_hat[i] : 1.0 / (1.0 - e_hat[i]);
    wsum[a] += weight[i];
    mean[a] += weight[i] * x.row(i).transpose();
  }
  if (wsum[0] == 0.0 || wsum[1] == 0.0) {
    fail(ErrorKind::Diagnostic, "covariate balance undefined: selection is empty in one treatment arm");
  }
  for (int a = 0; a < 2; ++a) mean[a] /= wsum[a];

  // frequency-weight normalization: divide by the arm's total weight
  Vector var[2] = {Vector::Zero(d), Vector::Zero(d)};
  for (Index i = 0; i < ds.rows(); ++i) {
    if (weight[i] == 0.0) continue;
    const int a = ds.treatment()[i];
    var[a] += weight[i] * (x.row(i).transpose() - mean[a]).cwiseAbs2();
  }
  for (int a = 0; a < 2; ++a) var[a] /= wsum[a];

  BalanceResult out;
  out.smd.resize(d);
  for (Index j = 0; j < d; ++j) {
    const double pooled = std::sqrt((var[0][j] + var[1][j]) / 2.0);
    out.smd[j] = pooled > 0.0 ? std::abs(mean[1][j] - mean[0][j]) / pooled : 0.0;
    if (out.smd[j] > kSmdThreshold) ++out.count;
  }
  return out;
}

}  // namespace cosub
