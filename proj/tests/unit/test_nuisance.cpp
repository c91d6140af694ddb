#include "doctest.h"

#include "core/error.hpp"
#include "core/nuisance.hpp"
#include "core/synthgen.hpp"
#include "helpers.hpp"

#include <cmath>

using namespace cosub;
using namespace cosub::testing;

namespace {

Dataset make_dataset(const Matrix& x, const Eigen::VectorXi& a, const Vector& y) { return Dataset(x, a, y); }

Eigen::VectorXi alternating(Index n) {
  Eigen::VectorXi a(n);
  for (Index i = 0; i < n; ++i) a[i] = static_cast<int>(i % 2);
  return a;
}

double max_rel_error(const Vector& analytic, const Vector& numeric) {
  double worst = 0.0;
  for (Index k = 0; k < analytic.size(); ++k) {
    const double scale = std::max(1e-6, std::abs(analytic[k]) + std::abs(numeric[k]));
    worst = std::max(worst, std::abs(analytic[k] - numeric[k]) / scale);
  }
  return worst;
}

}  // namespace

TEST_CASE("propensity loss gradient matches central differences") {
  Matrix z = random_matrix(200, 4, 1);
  Eigen::VectorXi a = (random_vector(200, 2).array() > 0.0).cast<int>();
  Vector w = random_vector(4, 3, 0.5);
  double b = 0.2;
  Vector grad;
  propensity_loss(w, b, z, a, 1e-2, &grad);
  Vector numeric(5);
  const double h = 1e-6;
  for (Index k = 0; k < 5; ++k) {
    Vector wp = w, wm = w;
    double bp = b, bm = b;
    if (k < 4) {
      wp[k] += h;
      wm[k] -= h;
    } else {
      bp += h;
      bm -= h;
    }
    numeric[k] = (propensity_loss(wp, bp, z, a, 1e-2, nullptr) - propensity_loss(wm, bm, z, a, 1e-2, nullptr)) / (2 * h);
  }
  CHECK(max_rel_error(grad, numeric) < 1e-6);
}

TEST_CASE("propensity fit recovers a well-specified logistic model") {
  DgpConfig cfg = DgpConfig::defaults();
  cfg.n = 20000;
  cfg.omega_tilde = 3.0;
  auto ds = generate_dataset(cfg, 8);
  auto pm = fit_propensity(ds, 1e-6, 20000, 1e-8);
  CHECK(pm.converged);
  Vector e = pm.predict_raw(ds.features());
  const Vector& truth = ds.aux("true_propensity");
  CHECK((e - truth).cwiseAbs().mean() < 0.02);
  CHECK(((e.array() > 0.0) && (e.array() < 1.0)).all());
  CHECK((pm.scaler.scale.array() > 0.0).all());
}

TEST_CASE("propensity fit needs both arms") {
  Matrix x = random_matrix(20, 2, 1);
  Eigen::VectorXi a = Eigen::VectorXi::Ones(20);
  auto ds = make_dataset(x, a, random_vector(20, 2));
  try {
    fit_propensity(ds);
    FAIL("expected a fit error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::Fit);
  }
}

TEST_CASE("clipping and zero-weight propensity") {
  Vector raw(3);
  raw << 1e-6, 0.5, 1.0 - 1e-9;
  Vector clipped = clip_propensity(raw);
  CHECK(clipped[0] == 1e-3);
  CHECK(clipped[1] == 0.5);
  CHECK(clipped[2] == 1.0 - 1e-3);
  CHECK_THROWS_AS(clip_propensity(raw, 0.5), Error);

  PropensityModel pm;
  pm.weights = Vector::Zero(3);
  pm.scaler = Standardizer::identity(3);
  CHECK((pm.predict_raw(random_matrix(5, 3, 1)).array() == 0.5).all());
}

TEST_CASE("outcome loss gradient matches central differences") {
  Matrix z = random_matrix(30, 3, 11);
  DenseNet net(3, 6);
  Rng rng(5);
  net.init_uniform(rng);
  for (OutcomeLink link : {OutcomeLink::Identity, OutcomeLink::Logistic}) {
    Vector target = link == OutcomeLink::Identity ? random_vector(30, 12)
                                                  : Vector((random_vector(30, 12).array() > 0).cast<double>());
    Vector grad;
    outcome_loss(net, z, target, link, &grad);
    Vector numeric(net.num_params());
    const double h = 1e-6;
    for (Index k = 0; k < net.num_params(); ++k) {
      DenseNet p = net, m = net;
      p.params()[k] += h;
      m.params()[k] -= h;
      numeric[k] = (outcome_loss(p, z, target, link, nullptr) - outcome_loss(m, z, target, link, nullptr)) / (2 * h);
    }
    CHECK(max_rel_error(grad, numeric) < 1e-4);
  }
}

TEST_CASE("outcome fit: constant target") {
  Matrix x = random_matrix(400, 3, 21);
  auto ds = make_dataset(x, alternating(400), Vector::Constant(400, 3.0));
  OutcomeFitOptions opt;
  opt.hidden_size = 10;
  opt.epochs = 30;
  auto om = fit_outcome(ds, opt);
  Matrix probe = random_matrix(50, 3, 22);
  CHECK((om.predict(0, probe).array() - 3.0).abs().maxCoeff() < 0.05);
  CHECK((om.predict(1, probe).array() - 3.0).abs().maxCoeff() < 0.05);
}

TEST_CASE("outcome fit: noiseless linear target") {
  Matrix x = random_matrix(1000, 2, 31);
  Vector y = 2.0 * x.col(0);
  auto ds = make_dataset(x, alternating(1000), y);
  OutcomeFitOptions opt;
  opt.hidden_size = 50;
  opt.seed = 4;
  auto om = fit_outcome(ds.subset([] {
    std::vector<Index> r(500);
    for (Index i = 0; i < 500; ++i) r[static_cast<std::size_t>(i)] = i;
    return r;
  }()), opt);
  Matrix probe = random_matrix(500, 2, 32);
  Vector truth = 2.0 * probe.col(0);
  for (int arm : {0, 1}) CHECK((om.predict(arm, probe) - truth).squaredNorm() / 500.0 < 0.01);
}

TEST_CASE("outcome fit: degenerate arm and determinism") {
  Matrix x = random_matrix(40, 2, 41);
  Eigen::VectorXi a = Eigen::VectorXi::Zero(40);
  a[0] = 1;
  OutcomeFitOptions opt;
  opt.epochs = 2;
  CHECK_THROWS_AS(fit_outcome(make_dataset(x, a, random_vector(40, 42)), opt), Error);

  auto ds = make_dataset(x, alternating(40), random_vector(40, 43));
  opt.seed = 7;
  auto m1 = fit_outcome(ds, opt);
  auto m2 = fit_outcome(ds, opt);
  CHECK(m1.predict(1, x) == m2.predict(1, x));
  CHECK(m1.to_json() == OutcomeModel::from_json(m1.to_json()).to_json());
}

TEST_CASE("covariate balance") {
  SUBCASE("identical distributions") {
    Matrix x = random_matrix(10000, 3, 51);
    auto ds = make_dataset(x, alternating(10000), Vector::Zero(10000));
    auto bal = count_unbalanced(ds, Vector::Constant(10000, 0.5), RowMask(10000, true));
    CHECK(bal.count == 0);
    CHECK(bal.smd.maxCoeff() < 0.1);
  }
  SUBCASE("arms one pooled sd apart") {
    // control {-1, 1}, treated {0, 2}: both variances 1, mean gap 1
    Matrix x(8, 2);
    x.col(0) << -1, 1, -1, 1, 0, 2, 0, 2;
    x.col(1).setConstant(4.0);
    Eigen::VectorXi a(8);
    a << 0, 0, 0, 0, 1, 1, 1, 1;
    auto ds = make_dataset(x, a, Vector::Zero(8));
    auto bal = count_unbalanced(ds, Vector::Constant(8, 0.5), RowMask(8, true));
    CHECK(bal.smd[0] == doctest::Approx(1.0));
    CHECK(bal.smd[1] == 0.0);
    CHECK(bal.count == 1);
  }
  SUBCASE("empty arm in selection") {
    Matrix x = random_matrix(6, 1, 1);
    auto ds = make_dataset(x, alternating(6), Vector::Zero(6));
    RowMask sel = {true, false, true, false, true, false};
    try {
      count_unbalanced(ds, Vector::Constant(6, 0.5), sel);
      FAIL("expected a diagnostic error");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::Diagnostic);
    }
  }
}

TEST_CASE("SMD is invariant to affine rescaling of a feature") {
  Matrix x = random_matrix(500, 2, 61);
  Eigen::VectorXi a = (random_vector(500, 62).array() > 0.3).cast<int>();
  Vector e = (random_vector(500, 63, 0.1).array() + 0.5).matrix().cwiseMax(0.05).cwiseMin(0.95);
  RowMask sel(500);
  for (std::size_t i = 0; i < 500; ++i) sel[i] = i % 3 != 0;
  for (int trial = 0; trial < 20; ++trial) {
    const double scale = 0.1 + trial * 0.7;
    const double shift = -5.0 + trial;
    Matrix y = x;
    y.col(0) = (scale * x.col(0).array() + shift).matrix();
    auto base = count_unbalanced(make_dataset(x, a, Vector::Zero(500)), e, sel);
    auto moved = count_unbalanced(make_dataset(y, a, Vector::Zero(500)), e, sel);
    CHECK(moved.smd[0] == doctest::Approx(base.smd[0]).epsilon(1e-9));
  }
}
