#include "doctest.h"

#include "core/error.hpp"
#include "core/eval.hpp"
#include "core/synthgen.hpp"
#include "helpers.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

using namespace cosub;
using namespace cosub::testing;

namespace {

NuisanceEstimates flat_estimates(Index n) {
  NuisanceEstimates est;
  est.e_hat = Vector::Constant(n, 0.5);
  est.mu0_hat = Vector::Zero(n);
  est.mu1_hat = Vector::Zero(n);
  return est;
}

SelectionMask mask_from(const RowMask& rows) {
  SelectionMask m;
  m.selected = rows;
  return m;
}

}  // namespace

TEST_CASE("full selection reproduces the sample average") {
  DgpConfig cfg = DgpConfig::defaults();
  cfg.n = 2000;
  auto ds = generate_dataset(cfg, 3);
  Vector phi = random_vector(2000, 4);
  auto m = subgroup_metrics(ds, flat_estimates(2000), phi, mask_from(RowMask(2000, true)));
  CHECK(m.defined);
  CHECK(m.group_size_fraction == 1.0);
  CHECK(m.est_ate == doctest::Approx(phi.mean()).epsilon(1e-12));
  CHECK(m.aux_metrics.at("ate_improvement") == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(m.true_ate.has_value());
  CHECK(*m.ate_error == doctest::Approx(std::abs(m.est_ate - *m.true_ate)));
  CHECK(m.aux_metrics.count("mean_risk") == 1);
  CHECK(m.unbalanced_count >= 0);
}

TEST_CASE("oracle top half by true effect") {
  // x1..x4 share variance 0.01 and correlation 0.3, so the effect sd is
  // 0.5 * 0.1 * sqrt(4 + 12 * 0.3); the top half of a centered normal has mean sd * sqrt(2/pi).
  const double sd = 0.5 * 0.1 * std::sqrt(4.0 + 12.0 * 0.3);
  const double expected = sd * std::sqrt(2.0 / M_PI);
  CHECK(expected == doctest::Approx(0.110).epsilon(0.01));

  DgpConfig cfg = DgpConfig::defaults();
  cfg.n = 100000;
  auto ds = generate_dataset(cfg, 5);
  const Vector& ite = ds.aux("true_ite");
  std::vector<double> sorted(ite.data(), ite.data() + ite.size());
  std::nth_element(sorted.begin(), sorted.begin() + 50000, sorted.end());
  const double median = sorted[50000];
  RowMask top(100000);
  for (Index i = 0; i < 100000; ++i) top[static_cast<std::size_t>(i)] = ite[i] >= median;
  auto m = subgroup_metrics(ds, flat_estimates(100000), Vector::Zero(100000), mask_from(top));
  CHECK(*m.true_ate == doctest::Approx(expected).epsilon(0.03));
}

TEST_CASE("empty selection yields an undefined record") {
  Dataset ds(random_matrix(10, 2, 1), Eigen::VectorXi::Zero(10), Vector::Zero(10));
  auto m = subgroup_metrics(ds, flat_estimates(10), Vector::Ones(10), mask_from(RowMask(10, false)));
  CHECK_FALSE(m.defined);
  CHECK(m.reason == "empty selection");
  CHECK(m.unbalanced_count == -1);
  CHECK(m.to_json()["est_ate"].is_null());
  CHECK_FALSE(m.true_ate.has_value());
}

TEST_CASE("overlap violation counts selected rows outside the band") {
  Dataset ds(random_matrix(4, 1, 1), Eigen::VectorXi::Zero(4), Vector::Zero(4));
  auto est = flat_estimates(4);
  est.e_hat << 0.01, 0.5, 0.995, 0.3;
  auto m = subgroup_metrics(ds, est, Vector::Zero(4), mask_from({true, true, true, false}), 0.02);
  CHECK(m.overlap_violation == doctest::Approx(2.0 / 3.0));
}

TEST_CASE("precision and recall") {
  Vector label(6);
  label << 1, 1, 0, 0, 1, 0;
  RowMask exact = {true, true, false, false, true, false};
  auto pr = precision_recall(exact, label);
  CHECK(*pr.precision == 1.0);
  CHECK(*pr.recall == 1.0);

  RowMask inverse = {false, false, true, true, false, true};
  auto worst = precision_recall(inverse, label);
  CHECK(*worst.precision == 0.0);
  CHECK(*worst.recall == 0.0);

  auto none = precision_recall(RowMask(6, false), label);
  CHECK_FALSE(none.precision.has_value());
  CHECK(*none.recall == 0.0);
  CHECK_FALSE(precision_recall(exact, Vector::Zero(6)).recall.has_value());
}

TEST_CASE("bootstrap null test") {
  Vector phi = random_vector(1000, 7);
  auto low = bootstrap_null_test(phi, phi.mean() - 1.0, 300, 500, 0.05, 1);
  CHECK(low.p_value > 0.5);
  CHECK_FALSE(low.reject);

  auto high = bootstrap_null_test(phi, phi.mean() + 1.0, 300, 500, 0.05, 1);
  CHECK(high.p_value == 0.0);
  CHECK(high.reject);

  auto always = bootstrap_null_test(phi, phi.mean() + 0.05, 300, 500, 1.0, 1);
  CHECK(always.p_value < 1.0);
  CHECK(always.reject);

  // drawing every row gives the sample mean each time
  auto whole = bootstrap_null_test(phi, phi.mean() - 1e-9, 1000, 20, 0.05, 2);
  CHECK(whole.p_value == 1.0);
  CHECK(whole.null_mean == doctest::Approx(phi.mean()).epsilon(1e-12));

  auto again = bootstrap_null_test(phi, 0.0, 300, 500, 0.05, 9);
  CHECK(again.p_value == bootstrap_null_test(phi, 0.0, 300, 500, 0.05, 9).p_value);
  CHECK_THROWS_AS(bootstrap_null_test(phi, 0.0, 1001, 10, 0.05, 1), Error);
}

TEST_CASE("p-value is monotone in the statistic") {
  Vector phi = random_vector(500, 8);
  double previous = 1.0;
  for (double stat = -0.3; stat <= 0.3; stat += 0.02) {
    const double p = bootstrap_null_test(phi, stat, 100, 400, 0.05, 3).p_value;
    CHECK(p <= previous);
    previous = p;
  }
}

TEST_CASE("resampling schemes differ by the finite-population factor") {
  Vector phi = random_vector(1000, 11);
  const double n = 1000.0, m = 800.0;
  const double sd = std::sqrt((phi.array() - phi.mean()).square().sum() / n);
  const double sd_without = sd / std::sqrt(m) * std::sqrt((n - m) / (n - 1.0));
  // two standard errors of the subsampling null: about 0.023 without replacement,
  // about 0.19 with replacement (z = 2 * 0.447)
  const double stat = phi.mean() + 2.0 * sd_without;
  const auto without = bootstrap_null_test(phi, stat, 800, 4000, 0.05, 5, Resampling::WithoutReplacement);
  const auto with = bootstrap_null_test(phi, stat, 800, 4000, 0.05, 5, Resampling::WithReplacement);
  CHECK(without.p_value == doctest::Approx(0.023).epsilon(0.5));
  CHECK(with.p_value == doctest::Approx(0.186).epsilon(0.2));
  CHECK(with.null_mean == doctest::Approx(phi.mean()).epsilon(0.01));

  CHECK(parse_resampling("with_replacement") == Resampling::WithReplacement);
  CHECK(parse_resampling(to_string(Resampling::WithoutReplacement)) == Resampling::WithoutReplacement);
  CHECK_THROWS_AS(parse_resampling("jackknife"), Error);
}
