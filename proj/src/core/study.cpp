#include "core/study.hpp"

#include "core/error.hpp"
#include "core/rng.hpp"

#include <cmath>
#include <map>

namespace cosub {

json CvResult::to_json() const {
  json cells_j = json::array();
  for (const auto& c : cells) {
    cells_j.push_back({{"beta", c.beta},
                       {"size", c.size},
                       {"folds_ok", c.folds_ok},
                       {"mean_group_size", c.mean_group_size},
                       {"mean_est_ate", c.mean_est_ate},
                       {"mean_unbalanced", c.mean_unbalanced}});
  }
  return {{"cells", cells_j}, {"chosen", chosen}, {"in_band", in_band}, {"trained", trained}};
}

std::size_t choose_cell(const std::vector<CvCell>& cells, double c, bool* in_band) {
  std::size_t best = cells.size();
  auto better_in_band = [](const CvCell& a, const CvCell& b) {
    if (a.mean_est_ate != b.mean_est_ate) return a.mean_est_ate > b.mean_est_ate;
    if (a.mean_unbalanced != b.mean_unbalanced) return a.mean_unbalanced < b.mean_unbalanced;
    return a.beta < b.beta;
  };
  for (std::size_t i = 0; i < cells.size(); ++i) {
    const auto& cell = cells[i];
    if (cell.folds_ok == 0 || std::abs(cell.mean_group_size - c) > kCvSizeBand) continue;
    if (best == cells.size() || better_in_band(cell, cells[best])) best = i;
  }
  if (in_band) *in_band = best != cells.size();
  if (best != cells.size()) return best;
  for (std::size_t i = 0; i < cells.size(); ++i) {
    const auto& cell = cells[i];
    if (cell.folds_ok == 0) continue;
    if (best == cells.size()) {
      best = i;
      continue;
    }
    const double da = std::abs(cell.mean_group_size - c), db = std::abs(cells[best].mean_group_size - c);
    if (da < db || (da == db && cell.beta < cells[best].beta)) best = i;
  }
  if (best == cells.size()) fail(ErrorKind::Collapse, "every cross-validation cell collapsed");
  return best;
}

CvResult cross_validate(const Dataset& train, const RunConfig& cfg, const TrainSettings& base, std::uint64_t seed) {
  const auto& cv = cfg.experiment.cv;
  const int current_size = base.spec.family == SurrogateFamily::Mlp ? base.spec.hidden_size : base.spec.depth;
  const std::vector<double> betas = cv.betas.empty() ? std::vector<double>{base.gda.beta} : cv.betas;
  const std::vector<int> sizes = cv.sizes.empty() ? std::vector<int>{current_size} : cv.sizes;
  CvResult res;
  for (double b : betas) {
    for (int s : sizes) {
      CvCell cell;
      cell.beta = b;
      cell.size = s;
      res.cells.push_back(cell);
    }
  }
  if (res.cells.size() == 1) return res;
  res.trained = true;

  std::vector<int> balanced_folds(res.cells.size(), 0);
  const auto folds = kfold_indices(train.rows(), cv.folds, seed);
  for (std::size_t f = 0; f < folds.size(); ++f) {
    const Dataset fit_part = train.subset(folds[f].train);
    const Dataset val_part = train.subset(folds[f].test);
    const FittedNuisance nuis = fit_nuisance(fit_part, cfg.nuisance, derive_seed(seed, 3 * f));
    const Stage st_fit = make_stage(nuis, fit_part, cfg.nuisance);
    const Stage st_val = make_stage(nuis, val_part, cfg.nuisance);
    for (std::size_t k = 0; k < res.cells.size(); ++k) {
      auto& cell = res.cells[k];
      TrainSettings settings = base;
      settings.gda.beta = cell.beta;
      settings.set_size(cell.size);
      const SurrogateFit fit =
          train_surrogate(fit_part, st_fit, cfg, settings, derive_seed(seed, 3 * f + 1), derive_seed(seed, 3 * f + 2));
      if (fit.report.collapsed) continue;
      const Evaluation ev = evaluate(*fit.report.model, val_part, st_val, cfg);
      if (!ev.metrics.defined) continue;
      ++cell.folds_ok;
      cell.mean_group_size += ev.metrics.group_size_fraction;
      cell.mean_est_ate += ev.metrics.est_ate;
      if (ev.metrics.unbalanced_count >= 0) {
        cell.mean_unbalanced += ev.metrics.unbalanced_count;
        ++balanced_folds[k];
      }
    }
  }
  for (std::size_t k = 0; k < res.cells.size(); ++k) {
    auto& cell = res.cells[k];
    if (cell.folds_ok > 0) {
      cell.mean_group_size /= cell.folds_ok;
      cell.mean_est_ate /= cell.folds_ok;
    }
    if (balanced_folds[k] > 0) cell.mean_unbalanced /= balanced_folds[k];
  }
  res.chosen = choose_cell(res.cells, base.c, &res.in_band);
  return res;
}

json SplitRecord::to_json() const {
  json j = {{"split", split}, {"c", c}, {"ok", ok}};
  if (!ok) {
    j["error"] = error;
    j["error_kind"] = cosub::to_string(error_kind);
    return j;
  }
  j["beta"] = beta;
  j["size"] = size;
  j["cv"] = cv;
  j["train_report"] = train_report;
  j["train"] = train_metrics;
  j["test"] = test_metrics;
  return j;
}

bool ExperimentResult::all_failed() const {
  for (const auto& r : records) {
    if (r.ok) return false;
  }
  return true;
}

namespace {

void collect_numbers(const json& obj, const std::string& prefix, std::map<std::string, std::vector<double>>& out) {
  for (const auto& [key, value] : obj.items()) {
    if (key == "unbalanced_count" && value.is_number() && value.get<double>() < 0) continue;
    if (value.is_number()) {
      out[prefix + key].push_back(value.get<double>());
    } else if (value.is_boolean()) {
      out[prefix + key].push_back(value.get<bool>() ? 1.0 : 0.0);
    } else if (value.is_object() && key == "aux_metrics") {
      collect_numbers(value, prefix, out);
    }
  }
}

}  // namespace

json aggregate_records(const json& records) {
  std::map<double, std::map<std::string, std::vector<double>>> by_c;
  for (const auto& r : records) {
    if (!r.at("ok").get<bool>()) continue;
    auto& bucket = by_c[r.at("c").get<double>()];
    for (const char* part : {"train", "test"}) {
      const json& m = r.at(part);
      if (!m.value("defined", false)) continue;
      collect_numbers(m, std::string(part) + ".", bucket);
    }
    const json& rep = r.at("train_report");
    for (const char* key : {"final_group_size", "iterations", "restarts", "feasible", "collapsed"}) {
      const json& v = rep.at(key);
      bucket[std::string("report.") + key].push_back(v.is_boolean() ? (v.get<bool>() ? 1.0 : 0.0) : v.get<double>());
    }
  }
  json out = json::array();
  for (const auto& [c, metrics] : by_c) {
    for (const auto& [name, values] : metrics) {
      const double k = static_cast<double>(values.size());
      double mean = 0.0;
      for (double v : values) mean += v;
      mean /= k;
      double ss = 0.0;
      for (double v : values) ss += (v - mean) * (v - mean);
      const double se = values.size() > 1 ? std::sqrt(ss / (k - 1.0)) / std::sqrt(k) : 0.0;
      out.push_back({{"c", c}, {"metric", name}, {"mean", mean}, {"se", se}, {"count", values.size()}});
    }
  }
  return out;
}

bool aggregates_consistent(const json& report) {
  const json fresh = aggregate_records(report.at("records"));
  const json& stored = report.at("aggregates");
  if (fresh.size() != stored.size()) return false;
  for (std::size_t i = 0; i < fresh.size(); ++i) {
    if (fresh[i].at("metric") != stored[i].at("metric") || fresh[i].at("count") != stored[i].at("count")) return false;
    for (const char* key : {"c", "mean", "se"}) {
      const double a = fresh[i].at(key).get<double>(), b = stored[i].at(key).get<double>();
      if (std::abs(a - b) > 1e-12 * std::max(1.0, std::abs(b))) return false;
    }
  }
  return true;
}

json ExperimentResult::to_json(const RunConfig& cfg) const {
  json recs = json::array();
  for (const auto& r : records) recs.push_back(r.to_json());
  return {{"version", COSUB_VERSION}, {"resolved_config", cfg.to_json()}, {"records", recs}, {"aggregates", aggregates}};
}

ExperimentResult run_experiment(const RunConfig& cfg) {
  std::vector<double> c_values = cfg.experiment.c_values;
  if (c_values.empty()) c_values.push_back(cfg.constraints.c);
  const std::size_t nc = c_values.size();
  const auto splits = static_cast<std::size_t>(cfg.experiment.splits);
  ExperimentResult res;
  res.records.resize(splits * nc);
  for (std::size_t i = 0; i < splits; ++i) {
    for (std::size_t k = 0; k < nc; ++k) {
      res.records[i * nc + k].split = static_cast<int>(i);
      res.records[i * nc + k].c = c_values[k];
    }
  }

  parallel_for(splits, cfg.experiment.parallelism, [&](std::size_t i) {
    const UnitSeeds seeds = UnitSeeds::derive(cfg.seed, i);
    auto mark_failed = [&](std::size_t k, const std::string& msg, ErrorKind kind) {
      auto& r = res.records[i * nc + k];
      r.ok = false;
      r.error = msg;
      r.error_kind = kind;
    };
    try {
      const std::uint64_t data_seed =
          cfg.experiment.regenerate_data ? seeds.data : derive_seed(cfg.seed, Stream::Instance, 0);
      const Dataset ds = acquire_dataset(cfg, data_seed);
      const auto [train, test] = train_test_split(ds, cfg.experiment.test_fraction, seeds.split);
      const FittedNuisance nuis = fit_nuisance(train, cfg.nuisance, seeds.nuisance);
      const Stage st_train = make_stage(nuis, train, cfg.nuisance);
      const Stage st_test = make_stage(nuis, test, cfg.nuisance);
      for (std::size_t k = 0; k < nc; ++k) {
        auto& r = res.records[i * nc + k];
        try {
          TrainSettings settings = TrainSettings::from(cfg, c_values[k]);
          const CvResult cv = cross_validate(train, cfg, settings, derive_seed(seeds.folds, k));
          settings.gda.beta = cv.best().beta;
          settings.set_size(cv.best().size);
          const SurrogateFit fit = train_surrogate(train, st_train, cfg, settings, seeds.surrogate, seeds.gda);
          r.beta = settings.gda.beta;
          r.size = cv.best().size;
          r.cv = cv.to_json();
          r.train_report = fit.report.summary_json();
          r.train_metrics = evaluate(*fit.report.model, train, st_train, cfg).to_json();
          r.test_metrics = evaluate(*fit.report.model, test, st_test, cfg).to_json();
          r.ok = true;
        } catch (const Error& e) {
          mark_failed(k, e.what(), e.kind());
        }
      }
    } catch (const Error& e) {
      for (std::size_t k = 0; k < nc; ++k) mark_failed(k, e.what(), e.kind());
    } catch (const std::exception& e) {
      for (std::size_t k = 0; k < nc; ++k) mark_failed(k, e.what(), ErrorKind::Numerical);
    }
  });

  json recs = json::array();
  for (const auto& r : res.records) recs.push_back(r.to_json());
  res.aggregates = aggregate_records(recs);
  return res;
}

json TypeIRecord::to_json() const {
  json j = {{"instance", instance}, {"c", c}, {"ok", ok}, {"collapsed", collapsed}, {"empty_selection", empty_selection},
            {"reject", reject}};
  if (!error.empty()) j["error"] = error;
  if (ok && !collapsed && !empty_selection) {
    j["ate_holdout"] = ate_holdout;
    j["group_size"] = group_size;
    j["p_value"] = p_value;
  }
  return j;
}

json TypeIResult::to_json(const RunConfig& cfg) const {
  json recs = json::array();
  for (const auto& r : records) recs.push_back(r.to_json());
  json rates = json::array();
  for (std::size_t k = 0; k < c_values.size(); ++k) {
    rates.push_back({{"c", c_values[k]}, {"rejection_rate", rejection_rate[k]}});
  }
  return {{"version", COSUB_VERSION}, {"resolved_config", cfg.to_json()}, {"records", recs}, {"rejection_rates", rates}};
}

TypeIResult type_i_error_study(const RunConfig& cfg) {
  require(cfg.data.kind == DataSource::Kind::Generate && cfg.data.dgp.variant == DgpVariant::Null, ErrorKind::Parameter,
          "the Type I error study needs the null DGP variant");
  const auto& tc = cfg.typei;
  TypeIResult res;
  res.c_values = tc.c_values;
  const std::size_t nc = tc.c_values.size();
  const auto instances = static_cast<std::size_t>(tc.instances);
  res.records.resize(instances * nc);
  for (std::size_t i = 0; i < instances; ++i) {
    for (std::size_t k = 0; k < nc; ++k) {
      res.records[i * nc + k].instance = static_cast<int>(i);
      res.records[i * nc + k].c = tc.c_values[k];
    }
  }

  parallel_for(instances, cfg.experiment.parallelism, [&](std::size_t i) {
    const UnitSeeds seeds = UnitSeeds::derive(cfg.seed, i);
    try {
      const Dataset ds = acquire_dataset(cfg, seeds.data);
      const auto [train, hold] = train_test_split(ds, tc.test_fraction, seeds.split);
      const FittedNuisance nuis = fit_nuisance(train, cfg.nuisance, seeds.nuisance);
      const Stage st_train = make_stage(nuis, train, cfg.nuisance);
      const Stage st_hold = make_stage(nuis, hold, cfg.nuisance);
      for (std::size_t k = 0; k < nc; ++k) {
        auto& r = res.records[i * nc + k];
        try {
          const TrainSettings settings = TrainSettings::from(cfg, tc.c_values[k]);
          const SurrogateFit fit = train_surrogate(train, st_train, cfg, settings, seeds.surrogate, seeds.gda);
          r.ok = true;
          if (fit.report.collapsed) {
            r.collapsed = true;
            continue;
          }
          const Vector s = fit.report.model->forward(hold.features(), Routing::Hard);
          const SelectionMask mask = harden(s, cfg.surrogate.threshold);
          if (mask.count() == 0) {
            r.empty_selection = true;
            continue;
          }
          double sum = 0.0;
          for (Index j = 0; j < hold.rows(); ++j) {
            if (mask.selected[static_cast<std::size_t>(j)]) sum += st_hold.phi.phi[j];
          }
          r.ate_holdout = sum / static_cast<double>(mask.count());
          r.group_size = mask.fraction();
          const Index sub = std::max<Index>(1, std::llround(tc.c_values[k] * static_cast<double>(hold.rows())));
          const BootstrapTest t = bootstrap_null_test(st_hold.phi.phi, r.ate_holdout, sub, tc.bootstrap_iters,
                                                      tc.significance, derive_seed(seeds.bootstrap, k), tc.resampling);
          r.p_value = t.p_value;
          r.reject = t.reject;
        } catch (const Error& e) {
          r.ok = false;
          r.error = e.what();
        }
      }
    } catch (const std::exception& e) {
      for (std::size_t k = 0; k < nc; ++k) {
        res.records[i * nc + k].ok = false;
        res.records[i * nc + k].error = e.what();
      }
    }
  });

  res.rejection_rate.assign(nc, 0.0);
  for (std::size_t i = 0; i < res.records.size(); ++i) {
    if (res.records[i].reject) res.rejection_rate[i % nc] += 1.0;
  }
  for (auto& rate : res.rejection_rate) rate /= static_cast<double>(instances);
  return res;
}

}  // namespace cosub
