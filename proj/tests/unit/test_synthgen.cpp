#include "doctest.h"

#include "core/error.hpp"
#include "core/rng.hpp"
#include "core/synthgen.hpp"
#include "helpers.hpp"

#include <cmath>

using namespace cosub;

TEST_CASE("covariate covariance matches sigma_x and rho") {
  DgpConfig cfg;
  cfg.n = 40000;
  Matrix x = sample_covariates(cfg, 17);
  Matrix centered = x.rowwise() - x.colwise().mean();
  Matrix cov = centered.transpose() * centered / static_cast<double>(cfg.n - 1);
  // sampling sd of a variance estimate ~ sigma^2 sqrt(2/n)
  CHECK(cov(0, 0) == doctest::Approx(0.01).epsilon(0.03));
  CHECK(cov(3, 7) == doctest::Approx(0.003).epsilon(0.1));
}

TEST_CASE("degenerate covariance is rejected") {
  DgpConfig cfg;
  cfg.rho = 1.0;
  CHECK_THROWS_AS(sample_covariates(cfg, 1), Error);
  cfg.rho = 0.3;
  cfg.p = 8;
  CHECK_THROWS_AS(cfg.resolved(), Error);  // aux columns need p >= 10
  CHECK_THROWS_AS(parse_variant("weird"), Error);
}

TEST_CASE("treatment assignment") {
  DgpConfig cfg;
  cfg.n = 10000;
  Matrix x = sample_covariates(cfg, 3);

  auto flat = assign_treatment(x, Vector::Zero(10), 4);
  CHECK((flat.propensity.array() == 0.5).all());
  CHECK(flat.treatment.cast<double>().mean() == doctest::Approx(0.5).epsilon(0.04));

  // x2 carries weight -omega_tilde, so the propensity falls as x2 grows.
  Matrix probe = Matrix::Zero(3, 10);
  probe(1, 1) = 1.0;
  probe(2, 1) = 50.0;
  auto draw = assign_treatment(probe, DgpConfig::defaults().omega(), 1);
  CHECK(draw.propensity[0] == 0.5);
  CHECK(draw.propensity[1] < draw.propensity[0]);
  CHECK(draw.propensity[2] < 1e-100);

  // Regression pin for the confounded scenario (n = 5000, seed 1).
  auto ds = generate_dataset(DgpConfig::defaults(), 1);
  CHECK(ds.treatment().cast<double>().mean() == doctest::Approx(0.506).epsilon(1e-12));
}

TEST_CASE("outcome formulas") {
  DgpConfig cfg = DgpConfig::defaults();
  cfg.sigma_y = 0.0;
  Matrix x = Matrix::Zero(2, 10);
  x.row(0) << 0.1, 0.2, -0.05, 0.3, 0.0, 1, 1, 1, 1, 1;
  x.row(1) << -0.2, 0.0, 0.4, 0.1, 0.0, 0, 0, 0, 0, 0;
  Eigen::VectorXi a(2);
  a << 0, 1;
  auto y = gen_outcomes(x, a, cfg, 9);
  CHECK(y.y0[0] == 0.0);
  CHECK(y.outcome[0] == 0.0);
  CHECK(y.true_ite[0] == doctest::Approx(0.5 * 0.55));
  CHECK(y.true_ite[1] == doctest::Approx(0.5 * 0.3));
  CHECK(y.outcome[1] == doctest::Approx(0.15));

  cfg.variant = DgpVariant::Null;
  auto null = generate_dataset(cfg, 2);
  CHECK(null.aux("true_ite").cwiseAbs().maxCoeff() == 0.0);

  cfg.variant = DgpVariant::BinarySubgroup;
  auto bin = generate_dataset(cfg, 2);
  const Vector& ite = bin.aux("true_ite");
  const Vector& label = bin.aux("true_label");
  for (Index i = 0; i < bin.rows(); ++i) CHECK((label[i] == 1.0) == (ite[i] > 0.0));
}

TEST_CASE("constraint aux columns") {
  Matrix x = Matrix::Zero(2, 10);
  x(1, 2) = 0.6;
  auto aux = attach_constraint_aux(x);
  CHECK(aux.risk[0] == doctest::Approx(1.0 / (1.0 + std::exp(1.0))));
  CHECK(aux.risk[0] == doctest::Approx(0.26894).epsilon(1e-5));
  CHECK(aux.cost[0] == doctest::Approx(1.0));
  CHECK(aux.sensitive[0] == 0.0);
  CHECK(aux.cost[1] == doctest::Approx(1.12));
  CHECK(aux.sensitive[1] == 1.0);

  auto inner = attach_constraint_aux(x, RiskForm::InnerOffset);
  CHECK(inner.risk[0] == doctest::Approx(1.0 / (1.0 + std::exp(10.0))));
  x(0, 9) = -1.0;
  CHECK(attach_constraint_aux(x, RiskForm::InnerOffset).risk[0] == doctest::Approx(0.5));

  CHECK_THROWS_AS(attach_constraint_aux(Matrix::Zero(2, 9)), Error);
}

TEST_CASE("generation is deterministic per seed") {
  auto a = generate_dataset(DgpConfig::defaults(), 5);
  auto b = generate_dataset(DgpConfig::defaults(), 5);
  auto c = generate_dataset(DgpConfig::defaults(), 6);
  CHECK(a.features() == b.features());
  CHECK(a.outcome() == b.outcome());
  CHECK(a.features() != c.features());
  CHECK(a.has_aux("risk"));
  CHECK(a.has_aux("true_propensity"));
  CHECK_FALSE(a.has_aux("true_label"));
}
