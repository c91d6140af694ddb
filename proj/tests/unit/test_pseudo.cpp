#include "doctest.h"

#include "core/error.hpp"
#include "core/pseudo.hpp"
#include "helpers.hpp"

#include <limits>

using namespace cosub;

namespace {

struct Row {
  int a;
  double y, mu1, mu0, e;
};

std::pair<NuisanceEstimates, Dataset> single(const Row& r) {
  NuisanceEstimates est;
  est.e_hat = Vector::Constant(1, r.e);
  est.mu0_hat = Vector::Constant(1, r.mu0);
  est.mu1_hat = Vector::Constant(1, r.mu1);
  Eigen::VectorXi a = Eigen::VectorXi::Constant(1, r.a);
  return {est, Dataset(Matrix::Zero(1, 1), a, Vector::Constant(1, r.y))};
}

double aiptw(const Row& r) {
  auto [est, ds] = single(r);
  return aiptw_phi(est, ds).phi[0];
}

double iptw(const Row& r) {
  auto [est, ds] = single(r);
  return iptw_phi(est, ds).phi[0];
}

}  // namespace

TEST_CASE("doubly robust pseudo-outcome by hand") {
  CHECK(aiptw({1, 1.0, 0.5, 0.3, 0.5}) == doctest::Approx(1.2));
  CHECK(aiptw({0, 0.3, 0.5, 0.3, 0.25}) == doctest::Approx(0.2));
  CHECK(aiptw({1, 0.5, 0.5, 0.3, 0.1}) == doctest::Approx(0.2));
  CHECK(aiptw({0, 0.3, 0.5, 0.3, 0.9}) == doctest::Approx(0.2));
}

TEST_CASE("inverse-propensity pseudo-outcome by hand") {
  CHECK(iptw({1, 1.0, 0, 0, 0.5}) == doctest::Approx(2.0));
  CHECK(iptw({0, 1.0, 0, 0, 0.5}) == doctest::Approx(-2.0));
  CHECK(iptw({0, 0.0, 0, 0, 0.3}) == 0.0);
  CHECK(iptw({1, 0.0, 0, 0, 0.3}) == 0.0);
}

TEST_CASE("pseudo-outcome bookkeeping") {
  NuisanceEstimates est;
  est.e_hat = Vector::Constant(3, 0.5);
  est.mu0_hat = Vector::Zero(3);
  est.mu1_hat = Vector::Zero(3);
  Eigen::VectorXi a(3);
  a << 1, 0, 1;
  Vector y(3);
  y << 1.0, 3.0, -0.5;
  Dataset ds(Matrix::Zero(3, 1), a, y);
  auto phi = compute_phi(Estimator::Aiptw, est, ds);
  CHECK(phi.phi_max == doctest::Approx(6.0));
  CHECK(parse_estimator("iptw") == Estimator::Iptw);
  CHECK_THROWS_AS(parse_estimator("dml"), Error);

  est.mu1_hat[1] = std::numeric_limits<double>::infinity();
  try {
    aiptw_phi(est, ds);
    FAIL("expected a numerical error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::Numerical);
    CHECK(std::string(e.what()).find("row 2") != std::string::npos);
  }
}

TEST_CASE("overlap score values") {
  CHECK(overlap_h(0.02, 0.02) == 0.0);
  CHECK(overlap_h(0.98, 0.02) == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(overlap_h(0.5, 0.02) == doctest::Approx(1.0 - 0.25 / 0.0196));
  CHECK(overlap_h(0.5, 0.02) == doctest::Approx(-11.7551).epsilon(1e-5));
  CHECK(overlap_h(0.01, 0.02) == doctest::Approx(1.0 - 0.0099 / 0.0196));
  CHECK(overlap_h(0.01, 0.02) == doctest::Approx(0.4949).epsilon(1e-4));
  CHECK_THROWS_AS(overlap_h(0.5, 0.5), Error);

  Vector e(2);
  e << 0.001, 0.5;
  auto disabled = overlap_h(e, 0.0);
  CHECK(disabled.disabled());
  CHECK(std::isinf(disabled.h[0]));
  CHECK(disabled.h[0] < 0.0);
}

TEST_CASE("overlap score sign matches the propensity band") {
  cosub::Rng rng(99);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::uniform_real_distribution<double> alpha_draw(1e-4, 0.49);
  for (int i = 0; i < 20000; ++i) {
    const double e = unif(rng);
    const double alpha = alpha_draw(rng);
    const double h = overlap_h(e, alpha);
    CHECK(h <= 1.0);
    const bool inside = alpha <= e && e <= 1.0 - alpha;
    if (inside != (h <= 0.0)) FAIL("sign mismatch at e=" << e << " alpha=" << alpha);
  }
}
