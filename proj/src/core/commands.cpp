#include "core/commands.hpp"

#include "core/pipeline.hpp"
#include "core/study.hpp"

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>

namespace cosub {

namespace fs = std::filesystem;

Status status_for(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::Parameter:
    case ErrorKind::Schema:
    case ErrorKind::Parse:
    case ErrorKind::Domain:
    case ErrorKind::Fit:
      return Status::Config;
    case ErrorKind::Io: return Status::Io;
    case ErrorKind::Collapse: return Status::Infeasible;
    case ErrorKind::Numerical:
    case ErrorKind::Diagnostic:
      return Status::Numerical;
  }
  return Status::Internal;
}

const char* to_string(Status s) {
  switch (s) {
    case Status::Ok: return "ok";
    case Status::Internal: return "internal error";
    case Status::Config: return "configuration error";
    case Status::Io: return "I/O error";
    case Status::Infeasible: return "infeasible or collapsed";
    case Status::Numerical: return "numerical error";
  }
  return "internal error";
}

RunConfig apply_overrides(RunConfig cfg, const CommandOptions& opt) {
  if (!opt.out_dir.empty()) cfg.output_dir = opt.out_dir;
  if (opt.seed) cfg.seed = *opt.seed;
  return cfg;
}

void write_json(const json& j, const std::string& path) {
  std::ofstream out(path);
  if (!out) fail(ErrorKind::Io, "cannot open '" + path + "' for writing");
  out << j.dump(2) << '\n';
  if (!out) fail(ErrorKind::Io, "failed writing '" + path + "'");
}

namespace {

using Clock = std::chrono::steady_clock;

std::string prepare_dir(const RunConfig& cfg) {
  std::error_code ec;
  fs::create_directories(cfg.output_dir, ec);
  if (ec || !fs::is_directory(cfg.output_dir)) {
    fail(ErrorKind::Io, "cannot create output directory '" + cfg.output_dir + "'");
  }
  return cfg.output_dir;
}

std::string join(const std::string& dir, const std::string& name) { return (fs::path(dir) / name).string(); }

template <typename Fn>
CommandResult guarded(Fn&& fn) {
  CommandResult res;
  try {
    fn(res);
  } catch (const Error& e) {
    res.status = status_for(e.kind());
    res.message = e.what();
  } catch (const json::exception& e) {
    res.status = Status::Config;
    res.message = e.what();
  } catch (const std::exception& e) {
    res.status = Status::Internal;
    res.message = e.what();
  }
  return res;
}

void write_timing(const std::string& dir, Clock::time_point start, CommandResult& res) {
  const double secs = std::chrono::duration<double>(Clock::now() - start).count();
  const std::string path = join(dir, "timing.json");
  write_json({{"wall_clock_seconds", secs}, {"version", COSUB_VERSION}}, path);
  res.outputs.push_back(path);
}

void write_phi_csv(const std::string& path, const std::vector<std::pair<std::string, const Stage*>>& parts) {
  std::ofstream out(path);
  if (!out) fail(ErrorKind::Io, "cannot open '" + path + "' for writing");
  out << "part,row,phi,e_hat,mu0_hat,mu1_hat\n";
  for (const auto& [name, st] : parts) {
    for (Index i = 0; i < st->phi.phi.size(); ++i) {
      out << name << ',' << i << ',' << format_real(st->phi.phi[i]) << ',' << format_real(st->est.e_hat[i]) << ','
          << format_real(st->est.mu0_hat[i]) << ',' << format_real(st->est.mu1_hat[i]) << '\n';
    }
  }
  if (!out) fail(ErrorKind::Io, "failed writing '" + path + "'");
}

std::string csv_value(const json& v) {
  if (v.is_null()) return "";
  if (v.is_boolean()) return v.get<bool>() ? "1" : "0";
  if (v.is_number_integer()) return std::to_string(v.get<long long>());
  if (v.is_number()) return format_real(v.get<double>());
  return v.get<std::string>();
}

void flatten(const json& obj, const std::string& prefix, std::map<std::string, json>& out) {
  for (const auto& [key, value] : obj.items()) {
    if (value.is_object()) {
      flatten(value, key == "aux_metrics" ? prefix : prefix + key + ".", out);
    } else if (value.is_primitive()) {
      out[prefix + key] = value;
    }
  }
}

void write_metrics_csv(const json& records, const std::string& path) {
  std::vector<std::map<std::string, json>> rows;
  std::set<std::string> columns;
  for (const auto& r : records) {
    std::map<std::string, json> row;
    row["split"] = r.at("split");
    row["c"] = r.at("c");
    row["ok"] = r.at("ok");
    if (r.at("ok").get<bool>()) {
      row["beta"] = r.at("beta");
      row["size"] = r.at("size");
      flatten(r.at("train"), "train.", row);
      flatten(r.at("test"), "test.", row);
      const json& rep = r.at("train_report");
      for (const char* key : {"termination", "feasible", "collapsed", "iterations", "restarts", "final_group_size"}) {
        row[std::string("report.") + key] = rep.at(key);
      }
    }
    for (const auto& [k, _] : row) columns.insert(k);
    rows.push_back(std::move(row));
  }
  std::vector<std::string> order = {"split", "c", "ok", "beta", "size"};
  for (const auto& c : columns) {
    if (std::find(order.begin(), order.end(), c) == order.end()) order.push_back(c);
  }
  std::ofstream out(path);
  if (!out) fail(ErrorKind::Io, "cannot open '" + path + "' for writing");
  for (std::size_t i = 0; i < order.size(); ++i) out << (i ? "," : "") << order[i];
  out << '\n';
  for (const auto& row : rows) {
    for (std::size_t i = 0; i < order.size(); ++i) {
      const auto it = row.find(order[i]);
      out << (i ? "," : "") << (it == row.end() ? "" : csv_value(it->second));
    }
    out << '\n';
  }
  if (!out) fail(ErrorKind::Io, "failed writing '" + path + "'");
}

void write_aggregate_csv(const json& aggregates, const std::string& path) {
  std::ofstream out(path);
  if (!out) fail(ErrorKind::Io, "cannot open '" + path + "' for writing");
  out << "c,metric,mean,se,count\n";
  for (const auto& a : aggregates) {
    out << format_real(a.at("c").get<double>()) << ',' << a.at("metric").get<std::string>() << ','
        << format_real(a.at("mean").get<double>()) << ',' << format_real(a.at("se").get<double>()) << ','
        << a.at("count").get<std::size_t>() << '\n';
  }
  if (!out) fail(ErrorKind::Io, "failed writing '" + path + "'");
}

}  // namespace

CommandResult cmd_generate(const RunConfig& cfg_in, const CommandOptions& opt) {
  return guarded([&](CommandResult& res) {
    const RunConfig cfg = apply_overrides(cfg_in, opt);
    require(cfg.data.kind == DataSource::Kind::Generate, ErrorKind::Schema, "generate needs data.source = generate");
    const std::string dir = prepare_dir(cfg);
    const UnitSeeds seeds = UnitSeeds::derive(cfg.seed, 0);
    const Dataset ds = generate_dataset(cfg.data.dgp, seeds.data);
    const std::string csv = join(dir, "dataset.csv");
    write_csv(ds, csv);
    const json side = {{"dgp", dgp_to_json(cfg.data.dgp)},
                       {"seed", cfg.seed},
                       {"data_seed", seeds.data},
                       {"rows", ds.rows()},
                       {"treated_fraction", static_cast<double>(ds.treated_count()) / static_cast<double>(ds.rows())},
                       {"version", COSUB_VERSION}};
    const std::string side_path = join(dir, "dataset.json");
    write_json(side, side_path);
    const std::string resolved = join(dir, "resolved_config.json");
    write_json(cfg.to_json(), resolved);
    res.outputs = {csv, side_path, resolved};
    res.summary = side;
    res.message = "wrote " + std::to_string(ds.rows()) + " rows";
  });
}

CommandResult cmd_fit(const RunConfig& cfg_in, const CommandOptions& opt) {
  const auto start = Clock::now();
  return guarded([&](CommandResult& res) {
    RunConfig cfg = apply_overrides(cfg_in, opt);
    cfg.gda.full_trace = opt.trace;
    const std::string dir = prepare_dir(cfg);
    const std::string resolved = join(dir, "resolved_config.json");
    write_json(cfg.to_json(), resolved);
    res.outputs.push_back(resolved);

    const UnitSeeds seeds = UnitSeeds::derive(cfg.seed, 0);
    const Dataset ds = acquire_dataset(cfg, seeds.data);
    const auto [train, test] = train_test_split(ds, cfg.experiment.test_fraction, seeds.split);
    const FittedNuisance nuis = fit_nuisance(train, cfg.nuisance, seeds.nuisance);
    const Stage st_train = make_stage(nuis, train, cfg.nuisance);
    const Stage st_test = make_stage(nuis, test, cfg.nuisance);
    const SurrogateFit fit =
        train_surrogate(train, st_train, cfg, TrainSettings::from(cfg, cfg.constraints.c), seeds.surrogate, seeds.gda);

    auto emit = [&](const json& j, const char* name) {
      const std::string path = join(dir, name);
      write_json(j, path);
      res.outputs.push_back(path);
    };
    emit(nuis.propensity.to_json(), "propensity.json");
    emit(nuis.outcome.to_json(), "outcome.json");
    emit(fit.report.model->to_json(), "surrogate.json");
    emit(fit.set.to_json(), "constraints.json");
    json report = fit.report.to_json();
    report["version"] = COSUB_VERSION;
    emit(report, "train_report.json");
    const json metrics = {{"train", evaluate(*fit.report.model, train, st_train, cfg).to_json()},
                          {"test", evaluate(*fit.report.model, test, st_test, cfg).to_json()},
                          {"phi_max", st_train.phi.phi_max},
                          {"estimator", to_string(cfg.nuisance.estimator)}};
    emit(metrics, "metrics.json");
    if (opt.trace) {
      const std::string path = join(dir, "trace.csv");
      write_trace_csv(fit.report, fit.set, path);
      res.outputs.push_back(path);
    }
    if (opt.dump_phi) {
      const std::string path = join(dir, "phi.csv");
      write_phi_csv(path, {{"train", &st_train}, {"test", &st_test}});
      res.outputs.push_back(path);
    }
    write_timing(dir, start, res);

    res.summary = fit.report.summary_json();
    res.summary["metrics"] = metrics;
    if (fit.report.collapsed) {
      res.status = Status::Infeasible;
      res.message = "training collapsed after " + std::to_string(fit.report.restarts) + " restarts";
    } else if (!fit.report.feasible()) {
      res.status = Status::Infeasible;
      res.message = std::to_string(fit.report.violated_count()) + " constraint(s) outside tolerance";
    } else {
      res.message = "feasible";
    }
  });
}

CommandResult cmd_experiment(const RunConfig& cfg_in, const CommandOptions& opt) {
  const auto start = Clock::now();
  return guarded([&](CommandResult& res) {
    const RunConfig cfg = apply_overrides(cfg_in, opt);
    const std::string dir = prepare_dir(cfg);
    const std::string resolved = join(dir, "resolved_config.json");
    write_json(cfg.to_json(), resolved);
    res.outputs.push_back(resolved);

    const ExperimentResult result = run_experiment(cfg);
    const json report = result.to_json(cfg);
    const std::string report_path = join(dir, "report.json");
    write_json(report, report_path);
    res.outputs.push_back(report_path);

    // reload and check aggregates against the records
    std::ifstream in(report_path);
    const json reloaded = json::parse(in);
    if (!aggregates_consistent(reloaded)) fail(ErrorKind::Numerical, "stored aggregates disagree with the records");

    const std::string metrics_path = join(dir, "metrics.csv");
    write_metrics_csv(report.at("records"), metrics_path);
    const std::string agg_path = join(dir, "aggregate.csv");
    write_aggregate_csv(report.at("aggregates"), agg_path);
    res.outputs.push_back(metrics_path);
    res.outputs.push_back(agg_path);
    write_timing(dir, start, res);

    int failed = 0;
    for (const auto& r : result.records) failed += r.ok ? 0 : 1;
    res.summary = {{"records", result.records.size()}, {"failed", failed}, {"aggregates", report.at("aggregates")}};
    if (result.all_failed()) {
      res.status = status_for(result.records.front().error_kind);
      res.message = "every split failed: " + result.records.front().error;
    } else {
      res.message = std::to_string(result.records.size() - failed) + " of " + std::to_string(result.records.size()) +
                    " runs succeeded";
    }
  });
}

CommandResult cmd_typei(const RunConfig& cfg_in, const CommandOptions& opt) {
  const auto start = Clock::now();
  return guarded([&](CommandResult& res) {
    const RunConfig cfg = apply_overrides(cfg_in, opt);
    const std::string dir = prepare_dir(cfg);
    const std::string resolved = join(dir, "resolved_config.json");
    write_json(cfg.to_json(), resolved);
    res.outputs.push_back(resolved);

    const TypeIResult result = type_i_error_study(cfg);
    const json report = result.to_json(cfg);
    const std::string path = join(dir, "typei.json");
    write_json(report, path);
    res.outputs.push_back(path);

    const std::string csv = join(dir, "typei.csv");
    std::ofstream out(csv);
    if (!out) fail(ErrorKind::Io, "cannot open '" + csv + "' for writing");
    out << "instance,c,ok,collapsed,empty_selection,ate_holdout,group_size,p_value,reject\n";
    for (const auto& r : result.records) {
      const bool has = r.ok && !r.collapsed && !r.empty_selection;
      out << r.instance << ',' << format_real(r.c) << ',' << r.ok << ',' << r.collapsed << ',' << r.empty_selection
          << ',' << (has ? format_real(r.ate_holdout) : "") << ',' << (has ? format_real(r.group_size) : "") << ','
          << (has ? format_real(r.p_value) : "") << ',' << r.reject << '\n';
    }
    if (!out) fail(ErrorKind::Io, "failed writing '" + csv + "'");
    res.outputs.push_back(csv);
    write_timing(dir, start, res);

    res.summary = {{"rejection_rates", report.at("rejection_rates")}};
    bool any_ok = false;
    for (const auto& r : result.records) any_ok = any_ok || r.ok;
    if (!any_ok) {
      res.status = Status::Numerical;
      res.message = "every instance failed: " + result.records.front().error;
    } else {
      res.message = "study complete";
    }
  });
}

}  // namespace cosub
