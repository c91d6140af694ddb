#pragma once

#include "core/data.hpp"
#include "core/json_eigen.hpp"
#include "core/nuisance.hpp"
#include "core/surrogate.hpp"

#include <cstdint>
#include <map>
#include <optional>
#include <string>

namespace cosub {

struct SubgroupMetrics {
  bool defined = false;
  std::string reason;  // set when undefined
  Index selected = 0;
  double group_size_fraction = 0.0;
  double est_ate = 0.0;
  std::optional<double> true_ate;
  std::optional<double> ate_error;
  int unbalanced_count = -1;  // -1 when the balance statistic is undefined
  // Fraction of selected rows with e_hat outside [alpha, 1 - alpha].
  double overlap_violation = 0.0;
  std::map<std::string, double> aux_metrics;

  json to_json() const;
};

// `overlap_alpha` is the bound used for the overlap_violation statistic.
SubgroupMetrics subgroup_metrics(const Dataset& ds, const NuisanceEstimates& est, const Vector& phi,
                                 const SelectionMask& mask, double overlap_alpha = 0.02);

struct PrecisionRecall {
  std::optional<double> precision;  // empty on 0/0
  std::optional<double> recall;
  Index true_positives = 0;
};

PrecisionRecall precision_recall(const RowMask& mask, const Vector& true_label);

struct BootstrapTest {
  double statistic = 0.0;
  double p_value = 1.0;
  double null_mean = 0.0;
  bool reject = false;
};

enum class Resampling { WithReplacement, WithoutReplacement };

const char* to_string(Resampling r);
Resampling parse_resampling(const std::string& tag);

// One-sided test of `statistic` against means of `iterations` draws of
// `subsample` rows from phi.
BootstrapTest bootstrap_null_test(const Vector& phi, double statistic, Index subsample, int iterations,
                                  double significance, std::uint64_t seed,
                                  Resampling resampling = Resampling::WithoutReplacement);

}  // namespace cosub
