#pragma once

#include "core/config.hpp"
#include "core/eval.hpp"
#include "core/gda.hpp"

#include <cstdint>
#include <functional>
#include <optional>

namespace cosub {

// Per-unit seeds (unit = split or instance index).
struct UnitSeeds {
  std::uint64_t data, split, nuisance, surrogate, gda, folds, bootstrap;
  static UnitSeeds derive(std::uint64_t master, std::uint64_t unit);
};

// Generated sources draw a dataset from `data_seed`; CSV sources ignore it.
Dataset acquire_dataset(const RunConfig& cfg, std::uint64_t data_seed);

struct FittedNuisance {
  PropensityModel propensity;
  OutcomeModel outcome;

  NuisanceEstimates predict(const Matrix& x, double clip) const;
};

FittedNuisance fit_nuisance(const Dataset& train, const NuisanceConfig& cfg, std::uint64_t seed);

struct Stage {
  NuisanceEstimates est;
  PseudoOutcomes phi;
};

Stage make_stage(const FittedNuisance& nuisance, const Dataset& ds, const NuisanceConfig& cfg);

// Hyperparameters that cross-validation may change.
struct TrainSettings {
  double c = 0.5;
  GdaConfig gda;
  SurrogateSpec spec;

  static TrainSettings from(const RunConfig& cfg, double c);
  void set_size(int size);
};

struct SurrogateFit {
  ConstraintSet set;
  TrainReport report;
};

// Constraints, surrogate initialization and the min-max solve on a fitted stage.
SurrogateFit train_surrogate(const Dataset& train, const Stage& stage, const RunConfig& cfg,
                             const TrainSettings& settings, std::uint64_t init_seed, std::uint64_t gda_seed);

struct Evaluation {
  Vector s;
  SelectionMask mask;
  SubgroupMetrics metrics;
  std::optional<PrecisionRecall> pr;

  json to_json() const;
};

Evaluation evaluate(const Surrogate& model, const Dataset& ds, const Stage& stage, const RunConfig& cfg);

// Runs fn(i) for i in [0, count) on up to `workers` threads (0 = hardware
// concurrency). The first exception is rethrown after all units finish.
void parallel_for(std::size_t count, int workers, const std::function<void(std::size_t)>& fn);

}  // namespace cosub
