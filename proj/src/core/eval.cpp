#include "core/eval.hpp"

#include "core/error.hpp"
#include "core/rng.hpp"

#include <cmath>
#include <numeric>

namespace cosub {

json SubgroupMetrics::to_json() const {
  json j = {{"defined", defined},
            {"selected", selected},
            {"group_size_fraction", group_size_fraction},
            {"unbalanced_count", unbalanced_count},
            {"overlap_violation", overlap_violation}};
  if (!defined) j["reason"] = reason;
  j["est_ate"] = defined ? json(est_ate) : json(nullptr);
  j["true_ate"] = true_ate ? json(*true_ate) : json(nullptr);
  j["ate_error"] = ate_error ? json(*ate_error) : json(nullptr);
  j["aux_metrics"] = aux_metrics;
  return j;
}

SubgroupMetrics subgroup_metrics(const Dataset& ds, const NuisanceEstimates& est, const Vector& phi,
                                 const SelectionMask& mask, double overlap_alpha) {
  const Index n = ds.rows();
  require(phi.size() == n && est.size() == n && mask.size() == n, ErrorKind::Parameter,
          "metrics inputs differ in length");
  SubgroupMetrics m;
  m.selected = mask.count();
  m.group_size_fraction = static_cast<double>(m.selected) / static_cast<double>(n);
  if (m.selected == 0) {
    m.reason = "empty selection";
    return m;
  }
  m.defined = true;
  const auto true_ite = ds.find_aux(aux::kTrueIte);
  const auto risk = ds.find_aux(aux::kRisk);
  const auto cost = ds.find_aux(aux::kCost);
  const auto sens = ds.find_aux(aux::kSensitive);
  double phi_sum = 0.0, ite_sum = 0.0, risk_sum = 0.0, cost_sum = 0.0, sens_sum = 0.0;
  Index outside = 0;
  for (Index i = 0; i < n; ++i) {
    if (!mask.selected[static_cast<std::size_t>(i)]) continue;
    phi_sum += phi[i];
    if (true_ite) ite_sum += (*true_ite)[i];
    if (risk) risk_sum += (*risk)[i];
    if (cost) cost_sum += (*cost)[i];
    if (sens) sens_sum += (*sens)[i];
    if (est.e_hat[i] < overlap_alpha || est.e_hat[i] > 1.0 - overlap_alpha) ++outside;
  }
  const double k = static_cast<double>(m.selected);
  m.est_ate = phi_sum / k;
  m.overlap_violation = static_cast<double>(outside) / k;
  if (true_ite) {
    m.true_ate = ite_sum / k;
    m.ate_error = std::abs(m.est_ate - *m.true_ate);
  }
  if (risk) m.aux_metrics["mean_risk"] = risk_sum / k;
  if (cost) m.aux_metrics["total_cost"] = cost_sum;
  if (sens) m.aux_metrics["sensitive_ratio"] = sens_sum / k;
  m.aux_metrics["ate_improvement"] = m.est_ate - phi.mean();
  try {
    m.unbalanced_count = count_unbalanced(ds, est.e_hat, mask.selected).count;
  } catch (const Error& e) {
    if (e.kind() != ErrorKind::Diagnostic) throw;
    m.unbalanced_count = -1;
  }
  return m;
}

PrecisionRecall precision_recall(const RowMask& mask, const Vector& true_label) {
  require(static_cast<Index>(mask.size()) == true_label.size(), ErrorKind::Parameter,
          "mask and labels differ in length");
  Index tp = 0, selected = 0, positives = 0;
  for (Index i = 0; i < true_label.size(); ++i) {
    const bool sel = mask[static_cast<std::size_t>(i)];
    const bool pos = true_label[i] > 0.5;
    selected += sel;
    positives += pos;
    tp += sel && pos;
  }
  PrecisionRecall pr;
  pr.true_positives = tp;
  if (selected > 0) pr.precision = static_cast<double>(tp) / static_cast<double>(selected);
  if (positives > 0) pr.recall = static_cast<double>(tp) / static_cast<double>(positives);
  return pr;
}

const char* to_string(Resampling r) {
  return r == Resampling::WithReplacement ? "with_replacement" : "without_replacement";
}

Resampling parse_resampling(const std::string& tag) {
  if (tag == "with_replacement") return Resampling::WithReplacement;
  if (tag == "without_replacement") return Resampling::WithoutReplacement;
  fail(ErrorKind::Schema, "unknown resampling '" + tag + "'");
}

BootstrapTest bootstrap_null_test(const Vector& phi, double statistic, Index subsample, int iterations,
                                  double significance, std::uint64_t seed, Resampling resampling) {
  const Index n = phi.size();
  require(subsample >= 1 && subsample <= n, ErrorKind::Parameter, "subsample size must lie in [1, n]");
  require(iterations >= 1, ErrorKind::Parameter, "bootstrap iterations must be >= 1");
  std::vector<Index> idx(static_cast<std::size_t>(n));
  std::iota(idx.begin(), idx.end(), Index{0});
  Rng rng(seed);
  Index at_least = 0;
  double total = 0.0;
  for (int b = 0; b < iterations; ++b) {
    double sum = 0.0;
    if (resampling == Resampling::WithReplacement) {
      for (Index i = 0; i < subsample; ++i) sum += phi[static_cast<Index>(rng() % static_cast<std::uint64_t>(n))];
    }
    // partial Fisher-Yates: first `subsample` slots form the draw
    for (Index i = 0; resampling == Resampling::WithoutReplacement && i < subsample; ++i) {
      const Index j = i + static_cast<Index>(rng() % static_cast<std::uint64_t>(n - i));
      std::swap(idx[static_cast<std::size_t>(i)], idx[static_cast<std::size_t>(j)]);
      sum += phi[idx[static_cast<std::size_t>(i)]];
    }
    const double mean = sum / static_cast<double>(subsample);
    total += mean;
    if (mean >= statistic) ++at_least;
  }
  BootstrapTest t;
  t.statistic = statistic;
  t.p_value = static_cast<double>(at_least) / iterations;
  t.null_mean = total / iterations;
  t.reject = t.p_value < significance;
  return t;
}

}  // namespace cosub
