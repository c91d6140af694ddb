#pragma once

#include "core/error.hpp"
#include "core/pipeline.hpp"

#include <string>
#include <vector>

namespace cosub {

struct CvCell {
  double beta = 0.0;
  int size = 0;
  int folds_ok = 0;
  double mean_group_size = 0.0;
  double mean_est_ate = 0.0;
  double mean_unbalanced = 0.0;
};

struct CvResult {
  std::vector<CvCell> cells;
  std::size_t chosen = 0;
  bool in_band = false;
  bool trained = false;  // false for single-cell grids

  const CvCell& best() const { return cells[chosen]; }
  json to_json() const;
};

inline constexpr double kCvSizeBand = 0.05;

// Among cells whose mean validation group size is within kCvSizeBand of c,
// the largest mean est_ate wins (ties: fewer unbalanced features, then smaller
// beta); otherwise the cell closest to c. Throws Collapse when every fold of
// every cell collapsed.
CvResult cross_validate(const Dataset& train, const RunConfig& cfg, const TrainSettings& base, std::uint64_t seed);

// Picks a cell from precomputed cells using the rule above.
std::size_t choose_cell(const std::vector<CvCell>& cells, double c, bool* in_band = nullptr);

struct SplitRecord {
  int split = 0;
  double c = 0.0;
  bool ok = false;
  std::string error;
  ErrorKind error_kind = ErrorKind::Numerical;
  double beta = 0.0;
  int size = 0;
  json cv;
  json train_report;
  json train_metrics;
  json test_metrics;

  json to_json() const;
};

struct ExperimentResult {
  std::vector<SplitRecord> records;
  json aggregates;  // array of {c, metric, mean, se, count}

  bool all_failed() const;
  json to_json(const RunConfig& cfg) const;
};

// Metrics aggregated per c; keys are "<part>.<name>".
json aggregate_records(const json& records);

// Recomputes aggregates from records and compares within 1e-12.
bool aggregates_consistent(const json& report);

ExperimentResult run_experiment(const RunConfig& cfg);

struct TypeIRecord {
  int instance = 0;
  double c = 0.0;
  bool ok = false;
  bool collapsed = false;
  bool empty_selection = false;
  std::string error;
  double ate_holdout = 0.0;
  double group_size = 0.0;
  double p_value = 1.0;
  bool reject = false;

  json to_json() const;
};

struct TypeIResult {
  std::vector<TypeIRecord> records;
  std::vector<double> c_values;
  std::vector<double> rejection_rate;  // per c value

  json to_json(const RunConfig& cfg) const;
};

TypeIResult type_i_error_study(const RunConfig& cfg);

}  // namespace cosub
