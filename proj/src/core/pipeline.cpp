#include "core/pipeline.hpp"

#include "core/error.hpp"
#include "core/rng.hpp"

#include <atomic>
#include <exception>
#include <mutex>
#include <thread>

namespace cosub {

UnitSeeds UnitSeeds::derive(std::uint64_t master, std::uint64_t unit) {
  return {derive_seed(master, Stream::Instance, unit), derive_seed(master, Stream::Split, unit),
          derive_seed(master, Stream::Nuisance, unit), derive_seed(master, Stream::Surrogate, unit),
          derive_seed(master, Stream::Restart, unit),  derive_seed(master, Stream::Folds, unit),
          derive_seed(master, Stream::Bootstrap, unit)};
}

Dataset acquire_dataset(const RunConfig& cfg, std::uint64_t data_seed) {
  if (cfg.data.kind == DataSource::Kind::Csv) return load_csv(cfg.data.csv_path, cfg.data.schema);
  return generate_dataset(cfg.data.dgp, data_seed);
}

NuisanceEstimates FittedNuisance::predict(const Matrix& x, double clip) const {
  return predict_nuisance(propensity, outcome, x, clip);
}

FittedNuisance fit_nuisance(const Dataset& train, const NuisanceConfig& cfg, std::uint64_t seed) {
  train.require_both_arms("nuisance fitting");
  FittedNuisance out;
  out.propensity = fit_propensity(train, cfg.propensity_l2, cfg.propensity_max_iters, cfg.propensity_tol);
  OutcomeFitOptions opt = cfg.outcome;
  opt.seed = seed;
  out.outcome = fit_outcome(train, opt);
  return out;
}

Stage make_stage(const FittedNuisance& nuisance, const Dataset& ds, const NuisanceConfig& cfg) {
  Stage st;
  st.est = nuisance.predict(ds.features(), cfg.clip);
  st.phi = compute_phi(cfg.estimator, st.est, ds);
  return st;
}

TrainSettings TrainSettings::from(const RunConfig& cfg, double c) {
  TrainSettings t;
  t.c = c;
  t.gda = cfg.gda;
  t.spec = cfg.surrogate.spec;
  return t;
}

void TrainSettings::set_size(int size) {
  if (spec.family == SurrogateFamily::Mlp) {
    spec.hidden_size = size;
  } else {
    spec.depth = size;
  }
}

SurrogateFit train_surrogate(const Dataset& train, const Stage& stage, const RunConfig& cfg,
                             const TrainSettings& settings, std::uint64_t init_seed, std::uint64_t gda_seed) {
  SurrogateFit out;
  const OverlapScores h = overlap_h(stage.est.e_hat, cfg.constraints.alpha);
  out.set = build_constraint_set(settings.c, h, materialize_extras(cfg.constraints, train));
  const auto model = make_surrogate(settings.spec, train.features(), init_seed);
  GdaConfig gda = settings.gda;
  gda.seed = gda_seed;
  out.report = run(train.features(), stage.phi.phi, out.set, *model, gda);
  return out;
}

json Evaluation::to_json() const {
  json j = metrics.to_json();
  if (pr) {
    j["precision"] = pr->precision ? json(*pr->precision) : json(nullptr);
    j["recall"] = pr->recall ? json(*pr->recall) : json(nullptr);
  }
  return j;
}

Evaluation evaluate(const Surrogate& model, const Dataset& ds, const Stage& stage, const RunConfig& cfg) {
  Evaluation ev;
  ev.s = model.forward(ds.features(), Routing::Hard);
  ev.mask = harden(ev.s, cfg.surrogate.threshold);
  ev.metrics = subgroup_metrics(ds, stage.est, stage.phi.phi, ev.mask, cfg.experiment.overlap_metric_alpha);
  if (const auto label = ds.find_aux(aux::kTrueLabel)) ev.pr = precision_recall(ev.mask.selected, *label);
  return ev;
}

void parallel_for(std::size_t count, int workers, const std::function<void(std::size_t)>& fn) {
  std::size_t threads = workers > 0 ? static_cast<std::size_t>(workers) : std::thread::hardware_concurrency();
  threads = std::max<std::size_t>(1, std::min(threads, count));
  if (threads <= 1) {
    for (std::size_t i = 0; i < count; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr first;
  std::mutex mu;
  std::vector<std::thread> pool;
  for (std::size_t t = 0; t < threads; ++t) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < count; i = next++) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard<std::mutex> lock(mu);
          if (!first) first = std::current_exception();
        }
      }
    });
  }
  for (auto& th : pool) th.join();
  if (first) std::rethrow_exception(first);
}

}  // namespace cosub
