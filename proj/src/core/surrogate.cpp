#include "core/surrogate.hpp"

#include "core/error.hpp"
#include "core/rng.hpp"

#include <algorithm>
#include <cmath>

namespace cosub {

const char* to_string(SurrogateFamily f) {
  switch (f) {
    case SurrogateFamily::Mlp: return "mlp";
    case SurrogateFamily::SoftTree: return "tree";
    case SurrogateFamily::Forest: return "forest";
  }
  return "mlp";
}

SurrogateFamily parse_family(const std::string& tag) {
  if (tag == "mlp") return SurrogateFamily::Mlp;
  if (tag == "tree" || tag == "soft_tree") return SurrogateFamily::SoftTree;
  if (tag == "forest") return SurrogateFamily::Forest;
  fail(ErrorKind::Parameter, "unknown surrogate family '" + tag + "'");
}

namespace {

double logistic(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

struct MlpPass : SurrogatePass {
  DenseNet::Cache cache;
  Vector raw;
};

struct TreePass : SurrogatePass {
  SoftTree::Pass tree;
  Vector raw;
};

struct ForestPass : SurrogatePass {
  std::vector<SoftTree::Pass> trees;
  Vector raw;
};

const Vector& raw_output(const SurrogatePass& pass) {
  if (auto* p = dynamic_cast<const MlpPass*>(&pass)) return p->raw;
  if (auto* p = dynamic_cast<const TreePass*>(&pass)) return p->raw;
  if (auto* p = dynamic_cast<const ForestPass*>(&pass)) return p->raw;
  fail(ErrorKind::Parameter, "surrogate pass of unknown type");
}

}  // namespace

Vector Surrogate::forward(const Matrix& x, Routing routing, std::unique_ptr<SurrogatePass>* pass) const {
  const Matrix z = scaler_.apply(x);
  const Vector raw = forward_std(z, routing, pass);
  return raw.cwiseMax(kOutputFloor).cwiseMin(1.0 - kOutputFloor);
}

Vector Surrogate::backward_weighted(const Matrix& x, const Vector& w, const SurrogatePass* pass) const {
  require(w.size() == x.rows(), ErrorKind::Parameter, "weight vector must have one entry per row");
  for (Index i = 0; i < w.size(); ++i) {
    if (!std::isfinite(w[i])) fail(ErrorKind::Numerical, "non-finite weight at row " + std::to_string(i + 1));
  }
  std::unique_ptr<SurrogatePass> local;
  if (!pass) {
    forward(x, Routing::Soft, &local);
    pass = local.get();
  }
  const Matrix z = scaler_.apply(x);
  // The clamp is flat outside [floor, 1 - floor].
  const Vector& raw = raw_output(*pass);
  Vector w_eff = w;
  for (Index i = 0; i < raw.size(); ++i) {
    if (raw[i] < kOutputFloor || raw[i] > 1.0 - kOutputFloor) w_eff[i] = 0.0;
  }
  return backward_std(z, w_eff, *pass);
}

json Surrogate::to_json() const {
  const SurrogateSpec s = spec();
  return {{"family", cosub::to_string(s.family)},
          {"inputs", inputs()},
          {"hidden_size", s.hidden_size},
          {"depth", s.depth},
          {"trees", s.trees},
          {"temperature", s.temperature},
          {"standardization", scaler_.to_json()},
          {"params", to_json_array(params())}};
}

// ---------------------------------------------------------------- MLP

MlpSurrogate::MlpSurrogate(Standardizer scaler, int hidden_size)
    : Surrogate(std::move(scaler)), net_(scaler_.dims(), hidden_size) {}

void MlpSurrogate::set_params(const Vector& theta) {
  require(theta.size() == net_.num_params(), ErrorKind::Parameter, "parameter vector has the wrong length");
  net_.params() = theta;
}

void MlpSurrogate::reinitialize(std::uint64_t seed, const Matrix&) {
  Rng rng(seed);
  net_.init_uniform(rng);
}

SurrogateSpec MlpSurrogate::spec() const {
  SurrogateSpec s;
  s.family = SurrogateFamily::Mlp;
  s.hidden_size = static_cast<int>(net_.hidden());
  return s;
}

Vector MlpSurrogate::forward_std(const Matrix& z, Routing, std::unique_ptr<SurrogatePass>* pass) const {
  auto p = std::make_unique<MlpPass>();
  const Vector logit = net_.forward(z, &p->cache);
  p->raw = logit.unaryExpr([](double v) { return logistic(v); });
  Vector raw = p->raw;
  if (pass) *pass = std::move(p);
  return raw;
}

Vector MlpSurrogate::backward_std(const Matrix& z, const Vector& w, const SurrogatePass& pass) const {
  const auto& p = dynamic_cast<const MlpPass&>(pass);
  const Vector dlogit = (w.array() * p.raw.array() * (1.0 - p.raw.array())).matrix();
  return net_.backward(z, p.cache, dlogit);
}

// ---------------------------------------------------------------- soft tree

SoftTree::SoftTree(Index inputs, int depth, double temperature)
    : inputs_(inputs), depth_(depth), temperature_(temperature) {
  require(inputs >= 1, ErrorKind::Parameter, "tree needs at least one input");
  require(depth >= 1 && depth <= 12, ErrorKind::Parameter, "tree depth must lie in [1, 12]");
  require(temperature > 0.0, ErrorKind::Parameter, "routing temperature must be > 0");
  params_ = Vector::Zero(internal_nodes() * (inputs_ + 1) + leaves());
}

void SoftTree::init(std::uint64_t seed, const Matrix& z) {
  Rng rng(seed);
  std::normal_distribution<double> noise(0.0, 0.1);
  std::uniform_int_distribution<Index> pick(0, inputs_ - 1);
  std::uniform_real_distribution<double> level(0.25, 0.75);
  params_.setZero();
  for (Index k = 0; k < internal_nodes(); ++k) {
    const Index off = node_offset(k);
    for (Index j = 0; j < inputs_; ++j) params_[off + j] = noise(rng);
    params_[off + pick(rng)] += 3.0;
    // threshold at a random quantile of the projected training feature
    Eigen::Map<const Vector> logits(params_.data() + off, inputs_);
    const Vector p = (logits.array() - logits.maxCoeff()).exp().matrix();
    Vector proj = z * (p / p.sum());
    std::vector<double> sorted(proj.data(), proj.data() + proj.size());
    std::sort(sorted.begin(), sorted.end());
    const double q = level(rng);
    const auto pos = static_cast<std::size_t>(q * static_cast<double>(sorted.size() - 1));
    params_[off + inputs_] = sorted.empty() ? 0.0 : sorted[pos];
  }
}

Vector SoftTree::forward(const Matrix& z, Routing routing, Pass* pass) const {
  require(z.cols() == inputs_, ErrorKind::Parameter, "tree input dimension mismatch");
  const Index n = z.rows();
  const Index n_int = internal_nodes();
  const Index n_all = n_int + leaves();

  Pass local;
  Pass& p = pass ? *pass : local;
  p.feature_weights.resize(inputs_, n_int);
  Vector thresholds(n_int);
  for (Index k = 0; k < n_int; ++k) {
    Eigen::Map<const Vector> logits(params_.data() + node_offset(k), inputs_);
    if (routing == Routing::Hard) {
      Index best = 0;
      logits.maxCoeff(&best);
      p.feature_weights.col(k).setZero();
      p.feature_weights(best, k) = 1.0;
    } else {
      const Vector e = (logits.array() - logits.maxCoeff()).exp().matrix();
      p.feature_weights.col(k) = e / e.sum();
    }
    thresholds[k] = params_[node_offset(k) + inputs_];
  }
  p.proj.noalias() = p.feature_weights.transpose() * z.transpose();
  p.route.resize(n_int, n);
  const double inv_tau = 1.0 / temperature_;
  for (Index i = 0; i < n; ++i) {
    for (Index k = 0; k < n_int; ++k) {
      const double margin = p.proj(k, i) - thresholds[k];
      p.route(k, i) = routing == Routing::Hard ? (margin > 0.0 ? 1.0 : 0.0) : logistic(margin * inv_tau);
    }
  }

  p.reach.resize(n_all, n);
  p.reach.row(0).setOnes();
  for (Index k = 0; k < n_int; ++k) {
    p.reach.row(2 * k + 1) = p.reach.row(k).cwiseProduct((1.0 - p.route.row(k).array()).matrix());
    p.reach.row(2 * k + 2) = p.reach.row(k).cwiseProduct(p.route.row(k));
  }
  p.value.resize(n_all, n);
  for (Index l = 0; l < leaves(); ++l) p.value.row(n_int + l).setConstant(logistic(params_[leaf_offset() + l]));
  for (Index k = n_int - 1; k >= 0; --k) {
    p.value.row(k) = p.route.row(k).cwiseProduct(p.value.row(2 * k + 2)) +
                     (1.0 - p.route.row(k).array()).matrix().cwiseProduct(p.value.row(2 * k + 1));
  }
  return p.value.row(0).transpose();
}

Vector SoftTree::backward(const Matrix& z, const Vector& w, const Pass& p) const {
  const Index n_int = internal_nodes();
  Vector grad = Vector::Zero(num_params());
  for (Index l = 0; l < leaves(); ++l) {
    const double v = logistic(params_[leaf_offset() + l]);
    grad[leaf_offset() + l] = v * (1.0 - v) * p.reach.row(n_int + l).dot(w);
  }
  const double inv_tau = 1.0 / temperature_;
  Matrix delta(n_int, z.rows());
  for (Index k = 0; k < n_int; ++k) {
    const auto r = p.route.row(k).array();
    delta.row(k) = (w.transpose().array() * p.reach.row(k).array() *
                    (p.value.row(2 * k + 2).array() - p.value.row(2 * k + 1).array()) * r * (1.0 - r) * inv_tau)
                       .matrix();
  }
  const Matrix dz = delta * z;  // n_int x d
  for (Index k = 0; k < n_int; ++k) {
    const Index off = node_offset(k);
    const double shift = delta.row(k).dot(p.proj.row(k));
    for (Index j = 0; j < inputs_; ++j) grad[off + j] = p.feature_weights(j, k) * (dz(k, j) - shift);
    grad[off + inputs_] = -delta.row(k).sum();
  }
  return grad;
}

std::vector<bool> SoftTree::weight_mask() const {
  std::vector<bool> mask(static_cast<std::size_t>(num_params()), true);
  for (Index k = 0; k < internal_nodes(); ++k) mask[static_cast<std::size_t>(node_offset(k) + inputs_)] = false;
  return mask;
}

SoftTreeSurrogate::SoftTreeSurrogate(Standardizer scaler, int depth, double temperature)
    : Surrogate(std::move(scaler)), tree_(scaler_.dims(), depth, temperature) {}

void SoftTreeSurrogate::set_params(const Vector& theta) {
  require(theta.size() == tree_.num_params(), ErrorKind::Parameter, "parameter vector has the wrong length");
  tree_.params() = theta;
}

void SoftTreeSurrogate::reinitialize(std::uint64_t seed, const Matrix& x) { tree_.init(seed, scaler_.apply(x)); }

SurrogateSpec SoftTreeSurrogate::spec() const {
  SurrogateSpec s;
  s.family = SurrogateFamily::SoftTree;
  s.depth = tree_.depth();
  s.trees = 1;
  s.temperature = tree_.temperature();
  return s;
}

Vector SoftTreeSurrogate::forward_std(const Matrix& z, Routing routing, std::unique_ptr<SurrogatePass>* pass) const {
  auto p = std::make_unique<TreePass>();
  p->raw = tree_.forward(z, routing, &p->tree);
  Vector raw = p->raw;
  if (pass) *pass = std::move(p);
  return raw;
}

Vector SoftTreeSurrogate::backward_std(const Matrix& z, const Vector& w, const SurrogatePass& pass) const {
  return tree_.backward(z, w, dynamic_cast<const TreePass&>(pass).tree);
}

// ---------------------------------------------------------------- forest

ForestSurrogate::ForestSurrogate(Standardizer scaler, int trees, int depth, double temperature)
    : Surrogate(std::move(scaler)) {
  require(trees >= 1, ErrorKind::Parameter, "forest needs at least one tree");
  for (int t = 0; t < trees; ++t) trees_.emplace_back(scaler_.dims(), depth, temperature);
}

Index ForestSurrogate::num_params() const {
  Index total = 0;
  for (const auto& t : trees_) total += t.num_params();
  return total;
}

Vector ForestSurrogate::params() const {
  Vector out(num_params());
  Index off = 0;
  for (const auto& t : trees_) {
    out.segment(off, t.num_params()) = t.params();
    off += t.num_params();
  }
  return out;
}

void ForestSurrogate::set_params(const Vector& theta) {
  require(theta.size() == num_params(), ErrorKind::Parameter, "parameter vector has the wrong length");
  Index off = 0;
  for (auto& t : trees_) {
    t.params() = theta.segment(off, t.num_params());
    off += t.num_params();
  }
}

std::vector<bool> ForestSurrogate::weight_mask() const {
  std::vector<bool> mask;
  for (const auto& t : trees_) {
    const auto m = t.weight_mask();
    mask.insert(mask.end(), m.begin(), m.end());
  }
  return mask;
}

void ForestSurrogate::reinitialize(std::uint64_t seed, const Matrix& x) {
  const Matrix z = scaler_.apply(x);
  for (std::size_t t = 0; t < trees_.size(); ++t) trees_[t].init(derive_seed(seed, t), z);
}

SurrogateSpec ForestSurrogate::spec() const {
  SurrogateSpec s;
  s.family = SurrogateFamily::Forest;
  s.trees = static_cast<int>(trees_.size());
  s.depth = trees_.front().depth();
  s.temperature = trees_.front().temperature();
  return s;
}

Vector ForestSurrogate::forward_std(const Matrix& z, Routing routing, std::unique_ptr<SurrogatePass>* pass) const {
  auto p = std::make_unique<ForestPass>();
  p->trees.resize(trees_.size());
  p->raw = Vector::Zero(z.rows());
  for (std::size_t t = 0; t < trees_.size(); ++t) p->raw += trees_[t].forward(z, routing, &p->trees[t]);
  p->raw /= static_cast<double>(trees_.size());
  Vector raw = p->raw;
  if (pass) *pass = std::move(p);
  return raw;
}

Vector ForestSurrogate::backward_std(const Matrix& z, const Vector& w, const SurrogatePass& pass) const {
  const auto& p = dynamic_cast<const ForestPass&>(pass);
  const Vector scaled = w / static_cast<double>(trees_.size());
  Vector grad(num_params());
  Index off = 0;
  for (std::size_t t = 0; t < trees_.size(); ++t) {
    grad.segment(off, trees_[t].num_params()) = trees_[t].backward(z, scaled, p.trees[t]);
    off += trees_[t].num_params();
  }
  return grad;
}

// ---------------------------------------------------------------- helpers

std::unique_ptr<Surrogate> make_surrogate(const SurrogateSpec& spec, const Matrix& x, std::uint64_t seed) {
  Standardizer scaler = Standardizer::fit(x);
  std::unique_ptr<Surrogate> model;
  switch (spec.family) {
    case SurrogateFamily::Mlp:
      require(spec.hidden_size >= 1, ErrorKind::Parameter, "hidden_size must be >= 1");
      model = std::make_unique<MlpSurrogate>(std::move(scaler), spec.hidden_size);
      break;
    case SurrogateFamily::SoftTree:
      model = std::make_unique<SoftTreeSurrogate>(std::move(scaler), spec.depth, spec.temperature);
      break;
    case SurrogateFamily::Forest:
      model = std::make_unique<ForestSurrogate>(std::move(scaler), spec.trees, spec.depth, spec.temperature);
      break;
  }
  model->reinitialize(seed, x);
  return model;
}

std::unique_ptr<Surrogate> surrogate_from_json(const json& j) {
  const auto family = parse_family(j.at("family").get<std::string>());
  Standardizer scaler = Standardizer::from_json(j.at("standardization"));
  std::unique_ptr<Surrogate> model;
  switch (family) {
    case SurrogateFamily::Mlp:
      model = std::make_unique<MlpSurrogate>(std::move(scaler), j.at("hidden_size").get<int>());
      break;
    case SurrogateFamily::SoftTree:
      model = std::make_unique<SoftTreeSurrogate>(std::move(scaler), j.at("depth").get<int>(),
                                                  j.at("temperature").get<double>());
      break;
    case SurrogateFamily::Forest:
      model = std::make_unique<ForestSurrogate>(std::move(scaler), j.at("trees").get<int>(), j.at("depth").get<int>(),
                                                j.at("temperature").get<double>());
      break;
  }
  model->set_params(vector_from_json(j.at("params")));
  return model;
}

Index SelectionMask::count() const {
  return static_cast<Index>(std::count(selected.begin(), selected.end(), true));
}

SelectionMask harden(const Vector& s, double threshold) {
  require(threshold > 0.0 && threshold < 1.0, ErrorKind::Parameter, "threshold must lie in (0,1)");
  SelectionMask mask;
  mask.threshold = threshold;
  mask.selected.resize(static_cast<std::size_t>(s.size()));
  for (Index i = 0; i < s.size(); ++i) mask.selected[static_cast<std::size_t>(i)] = s[i] > threshold;
  return mask;
}

L1Penalty l1_penalty(const Surrogate& model, double coef) {
  require(coef >= 0.0, ErrorKind::Parameter, "L1 coefficient must be >= 0");
  const Vector theta = model.params();
  const auto mask = model.weight_mask();
  L1Penalty out;
  out.gradient = Vector::Zero(theta.size());
  if (coef == 0.0) return out;
  for (Index k = 0; k < theta.size(); ++k) {
    if (!mask[static_cast<std::size_t>(k)]) continue;
    out.value += std::abs(theta[k]);
    out.gradient[k] = theta[k] > 0.0 ? coef : (theta[k] < 0.0 ? -coef : 0.0);
  }
  out.value *= coef;
  return out;
}

}  // namespace cosub
