#include "core/dense_net.hpp"

#include "core/error.hpp"

#include <cmath>

namespace cosub {

namespace {

struct Offsets {
  Index w1, b1, w2, b2, w3, b3, total;
};

Offsets offsets(Index d, Index h) {
  Offsets o{};
  o.w1 = 0;
  o.b1 = o.w1 + h * d;
  o.w2 = o.b1 + h;
  o.b2 = o.w2 + h * h;
  o.w3 = o.b2 + h;
  o.b3 = o.w3 + h;
  o.total = o.b3 + 1;
  return o;
}

}  // namespace

DenseNet::DenseNet(Index inputs, Index hidden) : inputs_(inputs), hidden_(hidden) {
  require(inputs >= 1 && hidden >= 1, ErrorKind::Parameter, "network sizes must be >= 1");
  params_ = Vector::Zero(offsets(inputs, hidden).total);
}

void DenseNet::init_uniform(Rng& rng) {
  const auto o = offsets(inputs_, hidden_);
  params_.setZero();
  auto fill = [&](Index start, Index count, Index fan_in) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    std::uniform_real_distribution<double> unif(-bound, bound);
    for (Index k = 0; k < count; ++k) params_[start + k] = unif(rng);
  };
  fill(o.w1, hidden_ * inputs_, inputs_);
  fill(o.b1, hidden_, inputs_);
  fill(o.w2, hidden_ * hidden_, hidden_);
  fill(o.b2, hidden_, hidden_);
  fill(o.w3, hidden_, hidden_);
}

Vector DenseNet::forward(const Matrix& x, Cache* cache) const {
  require(x.cols() == inputs_, ErrorKind::Parameter,
          "input has " + std::to_string(x.cols()) + " columns, network expects " + std::to_string(inputs_));
  const auto o = offsets(inputs_, hidden_);
  const double* p = params_.data();
  Eigen::Map<const Matrix> w1(p + o.w1, hidden_, inputs_);
  Eigen::Map<const Vector> b1(p + o.b1, hidden_);
  Eigen::Map<const Matrix> w2(p + o.w2, hidden_, hidden_);
  Eigen::Map<const Vector> b2(p + o.b2, hidden_);
  Eigen::Map<const Vector> w3(p + o.w3, hidden_);
  const double b3 = p[o.b3];

  Cache local;
  Cache& c = cache ? *cache : local;
  c.z1.noalias() = w1 * x.transpose();
  c.z1.colwise() += b1;
  c.a1 = c.z1.cwiseMax(0.0);
  c.z2.noalias() = w2 * c.a1;
  c.z2.colwise() += b2;
  c.a2 = c.z2.cwiseMax(0.0);
  Vector logit = c.a2.transpose() * w3;
  logit.array() += b3;
  return logit;
}

Vector DenseNet::backward(const Matrix& x, const Cache& c, const Vector& grad_logit) const {
  const auto o = offsets(inputs_, hidden_);
  const double* p = params_.data();
  Eigen::Map<const Matrix> w2(p + o.w2, hidden_, hidden_);
  Eigen::Map<const Vector> w3(p + o.w3, hidden_);

  Vector grad = Vector::Zero(o.total);
  double* g = grad.data();
  Eigen::Map<Matrix> gw1(g + o.w1, hidden_, inputs_);
  Eigen::Map<Vector> gb1(g + o.b1, hidden_);
  Eigen::Map<Matrix> gw2(g + o.w2, hidden_, hidden_);
  Eigen::Map<Vector> gb2(g + o.b2, hidden_);
  Eigen::Map<Vector> gw3(g + o.w3, hidden_);

  gw3.noalias() = c.a2 * grad_logit;
  g[o.b3] = grad_logit.sum();

  // dz2 = (w3 g^T) masked by z2 > 0
  Matrix dz2 = (w3 * grad_logit.transpose()).cwiseProduct((c.z2.array() > 0.0).cast<double>().matrix());
  gw2.noalias() = dz2 * c.a1.transpose();
  gb2 = dz2.rowwise().sum();

  Matrix dz1 = (w2.transpose() * dz2).cwiseProduct((c.z1.array() > 0.0).cast<double>().matrix());
  gw1.noalias() = dz1 * x;
  gb1 = dz1.rowwise().sum();
  return grad;
}

std::vector<bool> DenseNet::weight_mask() const {
  const auto o = offsets(inputs_, hidden_);
  std::vector<bool> mask(static_cast<std::size_t>(o.total), false);
  auto mark = [&](Index start, Index count) {
    for (Index k = 0; k < count; ++k) mask[static_cast<std::size_t>(start + k)] = true;
  };
  mark(o.w1, hidden_ * inputs_);
  mark(o.w2, hidden_ * hidden_);
  mark(o.w3, hidden_);
  return mask;
}

}  // namespace cosub
