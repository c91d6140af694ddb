#pragma once

#include "core/constraints.hpp"
#include "core/data.hpp"
#include "core/eval.hpp"
#include "core/gda.hpp"
#include "core/json_eigen.hpp"
#include "core/nuisance.hpp"
#include "core/pseudo.hpp"
#include "core/surrogate.hpp"
#include "core/synthgen.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace cosub {

inline constexpr int kSchemaVersion = 1;

struct DataSource {
  enum class Kind { Generate, Csv };
  Kind kind = Kind::Generate;
  DgpConfig dgp;
  std::string csv_path;
  CsvSchema schema;
};

struct NuisanceConfig {
  double propensity_l2 = 1e-3;
  int propensity_max_iters = 5000;
  double propensity_tol = 1e-6;
  OutcomeFitOptions outcome;
  double clip = kPropensityClip;
  Estimator estimator = Estimator::Aiptw;
};

// One declarative extra constraint. `direction` is "le", "ge" or "band".
// Linear limits are given either absolutely (`limit`) or per row
// (`limit_per_row`, multiplied by the number of training rows).
struct ExtraConstraintConfig {
  std::string name;
  ConstraintKind type = ConstraintKind::Ratio;
  std::string column;
  std::string direction = "le";
  double limit = 0.0;
  bool per_row = false;
  double center = 0.0;
  double tol = 0.0;
};

struct ConstraintConfig {
  double c = 0.5;
  double alpha = 0.02;
  std::vector<ExtraConstraintConfig> extra;
};

struct SurrogateConfig {
  SurrogateSpec spec;
  double threshold = 0.5;
};

// Empty axes mean "keep the configured value".
struct CvConfig {
  int folds = 5;
  std::vector<double> betas;
  std::vector<int> sizes;  // hidden_size for mlp, depth for trees

  std::size_t cells() const { return std::max<std::size_t>(1, betas.size()) * std::max<std::size_t>(1, sizes.size()); }
};

struct ExperimentConfig {
  int splits = 1;
  double test_fraction = 0.5;
  std::vector<double> c_values;  // empty: constraints.c only
  CvConfig cv;
  int parallelism = 0;  // 0: hardware concurrency
  // Generated sources draw a fresh dataset per split.
  bool regenerate_data = true;
  double overlap_metric_alpha = 0.02;
};

struct TypeIConfig {
  int instances = 30;
  int bootstrap_iters = 2000;
  double significance = 0.05;
  std::vector<double> c_values{0.8};
  double test_fraction = 0.5;
  Resampling resampling = Resampling::WithReplacement;
};

struct RunConfig {
  int schema_version = kSchemaVersion;
  std::string preset;
  std::uint64_t seed = 0;
  std::string output_dir = "out";
  DataSource data;
  NuisanceConfig nuisance;
  SurrogateConfig surrogate;
  ConstraintConfig constraints;
  GdaConfig gda;
  ExperimentConfig experiment;
  TypeIConfig typei;

  // Every field, defaults included.
  json to_json() const;
};

json dgp_to_json(const DgpConfig& cfg);
DgpConfig dgp_from_json(const json& j);

std::vector<std::string> preset_names();
// Throws Schema for unknown names.
json preset_json(const std::string& name);

// Strict parse: unknown keys, wrong types and out-of-range values raise
// Schema or Parameter errors. A "preset" key (or `preset_override`) is applied
// first and the document is merged over it.
RunConfig parse_run_config(const json& j, const std::string& preset_override = "");
RunConfig load_run_config(const std::string& path, const std::string& preset_override = "");

// Resolves the extra constraints against the rows of `ds`.
std::vector<ExtraConstraint> materialize_extras(const ConstraintConfig& cfg, const Dataset& ds);

}  // namespace cosub
