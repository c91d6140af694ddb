#include "core/config.hpp"

#include "core/error.hpp"

#include <cmath>
#include <fstream>
#include <set>

namespace cosub {

namespace {

void check_keys(const json& j, const std::set<std::string>& allowed, const std::string& where) {
  if (!j.is_object()) fail(ErrorKind::Schema, where + " must be an object");
  for (const auto& [key, _] : j.items()) {
    if (!allowed.count(key)) fail(ErrorKind::Schema, "unknown key '" + key + "' in " + where);
  }
}

template <typename T>
void read(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

json vec_or_null(const Vector& v) { return v.size() ? to_json_array(v) : json(nullptr); }

Vector vec_from(const json& j) { return j.is_null() ? Vector() : vector_from_json(j); }

const char* link_tag(const OutcomeFitOptions& o) {
  if (o.auto_link) return "auto";
  return o.link == OutcomeLink::Logistic ? "logistic" : "identity";
}

void parse_link(const std::string& tag, OutcomeFitOptions& o) {
  if (tag == "auto") {
    o.auto_link = true;
  } else if (tag == "identity" || tag == "logistic") {
    o.auto_link = false;
    o.link = tag == "logistic" ? OutcomeLink::Logistic : OutcomeLink::Identity;
  } else {
    fail(ErrorKind::Parameter, "outcome link must be auto, identity or logistic");
  }
}

json extra_to_json(const ExtraConstraintConfig& e) {
  json j = {{"name", e.name}, {"type", to_string(e.type)}, {"column", e.column}, {"direction", e.direction}};
  if (e.direction == "band") {
    j["center"] = e.center;
    j["tol"] = e.tol;
  } else if (e.per_row) {
    j["limit_per_row"] = e.limit;
  } else {
    j["limit"] = e.limit;
  }
  return j;
}

ExtraConstraintConfig extra_from_json(const json& j) {
  check_keys(j, {"name", "type", "column", "direction", "limit", "limit_per_row", "center", "tol"},
             "constraints.extra[]");
  ExtraConstraintConfig e;
  const std::string type = j.at("type").get<std::string>();
  if (type == "linear") {
    e.type = ConstraintKind::Linear;
  } else if (type == "ratio") {
    e.type = ConstraintKind::Ratio;
  } else {
    fail(ErrorKind::Schema, "extra constraint type must be linear or ratio");
  }
  e.column = j.at("column").get<std::string>();
  e.name = j.value("name", e.column);
  e.direction = j.value("direction", std::string("le"));
  if (e.direction == "band") {
    require(e.type == ConstraintKind::Ratio, ErrorKind::Parameter, "band direction applies to ratio constraints");
    e.center = j.at("center").get<double>();
    e.tol = j.at("tol").get<double>();
    require(e.tol >= 0.0, ErrorKind::Parameter, "band tolerance must be >= 0");
  } else if (e.direction == "le" || e.direction == "ge") {
    const bool abs = j.contains("limit"), per = j.contains("limit_per_row");
    require(abs != per, ErrorKind::Schema, "constraint '" + e.name + "' needs exactly one of limit or limit_per_row");
    e.per_row = per;
    e.limit = j.at(per ? "limit_per_row" : "limit").get<double>();
    require(!per || e.type == ConstraintKind::Linear, ErrorKind::Parameter, "limit_per_row applies to linear constraints");
  } else {
    fail(ErrorKind::Schema, "constraint direction must be le, ge or band");
  }
  return e;
}

std::vector<int> int_list(const json& j) { return j.get<std::vector<int>>(); }

}  // namespace

json dgp_to_json(const DgpConfig& c) {
  return {{"p", c.p},
          {"n", c.n},
          {"sigma_x", c.sigma_x},
          {"sigma_y", c.sigma_y},
          {"rho", c.rho},
          {"beta1", vec_or_null(c.beta1)},
          {"beta_tau", vec_or_null(c.beta_tau)},
          {"omega_tilde", c.omega_tilde},
          {"omega_base", vec_or_null(c.omega_base)},
          {"variant", to_string(c.variant)},
          {"constraint_aux", c.constraint_aux},
          {"aux_scale", c.aux_scale},
          {"risk_form", c.risk_form == RiskForm::InnerOffset ? "inner_offset" : "outer_offset"}};
}

DgpConfig dgp_from_json(const json& j) {
  check_keys(j, {"p", "n", "sigma_x", "sigma_y", "rho", "beta1", "beta_tau", "omega_tilde", "omega_base", "variant",
                 "constraint_aux", "aux_scale", "risk_form"},
             "data.generate");
  DgpConfig c;
  read(j, "p", c.p);
  read(j, "n", c.n);
  read(j, "sigma_x", c.sigma_x);
  read(j, "sigma_y", c.sigma_y);
  read(j, "rho", c.rho);
  if (j.contains("beta1")) c.beta1 = vec_from(j.at("beta1"));
  if (j.contains("beta_tau")) c.beta_tau = vec_from(j.at("beta_tau"));
  read(j, "omega_tilde", c.omega_tilde);
  if (j.contains("omega_base")) c.omega_base = vec_from(j.at("omega_base"));
  if (j.contains("variant")) c.variant = parse_variant(j.at("variant").get<std::string>());
  read(j, "constraint_aux", c.constraint_aux);
  read(j, "aux_scale", c.aux_scale);
  if (j.contains("risk_form")) {
    const auto f = j.at("risk_form").get<std::string>();
    require(f == "inner_offset" || f == "outer_offset", ErrorKind::Schema, "unknown risk_form: " + f);
    c.risk_form = f == "inner_offset" ? RiskForm::InnerOffset : RiskForm::OuterOffset;
  }
  return c;
}

json RunConfig::to_json() const {
  json data_j;
  if (data.kind == DataSource::Kind::Generate) {
    data_j = {{"source", "generate"}, {"generate", dgp_to_json(data.dgp)}};
  } else {
    std::string delim(1, data.schema.delimiter);
    data_j = {{"source", "csv"},
              {"csv",
               {{"path", data.csv_path},
                {"features", data.schema.features},
                {"treatment", data.schema.treatment},
                {"outcome", data.schema.outcome},
                {"aux", data.schema.aux},
                {"delimiter", delim}}}};
  }
  json extras = json::array();
  for (const auto& e : constraints.extra) extras.push_back(extra_to_json(e));
  const auto& o = nuisance.outcome;
  return {
      {"schema_version", schema_version},
      {"preset", preset},
      {"seed", seed},
      {"output_dir", output_dir},
      {"data", data_j},
      {"nuisance",
       {{"propensity_l2", nuisance.propensity_l2},
        {"propensity_max_iters", nuisance.propensity_max_iters},
        {"propensity_tol", nuisance.propensity_tol},
        {"clip", nuisance.clip},
        {"estimator", to_string(nuisance.estimator)},
        {"outcome",
         {{"hidden_size", o.hidden_size},
          {"epochs", o.epochs},
          {"lr", o.lr},
          {"batch_size", o.batch_size},
          {"link", link_tag(o)}}}}},
      {"surrogate",
       {{"family", to_string(surrogate.spec.family)},
        {"hidden_size", surrogate.spec.hidden_size},
        {"depth", surrogate.spec.depth},
        {"trees", surrogate.spec.trees},
        {"temperature", surrogate.spec.temperature},
        {"threshold", surrogate.threshold}}},
      {"constraints", {{"c", constraints.c}, {"alpha", constraints.alpha}, {"extra", extras}}},
      {"gda", gda.to_json()},
      {"experiment",
       {{"splits", experiment.splits},
        {"test_fraction", experiment.test_fraction},
        {"c_values", experiment.c_values},
        {"cv", {{"folds", experiment.cv.folds}, {"betas", experiment.cv.betas}, {"sizes", experiment.cv.sizes}}},
        {"parallelism", experiment.parallelism},
        {"regenerate_data", experiment.regenerate_data},
        {"overlap_metric_alpha", experiment.overlap_metric_alpha}}},
      {"typei",
       {{"instances", typei.instances},
        {"bootstrap_iters", typei.bootstrap_iters},
        {"significance", typei.significance},
        {"c_values", typei.c_values},
        {"test_fraction", typei.test_fraction},
        {"resampling", to_string(typei.resampling)}}},
  };
}

std::vector<std::string> preset_names() {
  return {"paper-synthetic-confounded", "appendix-E4", "appendix-F", "appendix-G"};
}

json preset_json(const std::string& name) {
  json base = {
      {"data", {{"source", "generate"}, {"generate", {{"variant", "continuous"}, {"n", 5000}, {"omega_tilde", 5.0}}}}},
      {"constraints", {{"c", 0.5}, {"alpha", 0.02}}},
      {"gda", {{"beta", 1e-4}}},
      {"surrogate", {{"family", "mlp"}, {"hidden_size", 50}}},
      {"experiment",
       {{"splits", 100},
        {"test_fraction", 0.5},
        {"cv", {{"folds", 5}, {"betas", {1e-2, 1e-3, 1e-4, 1e-5}}, {"sizes", {50, 100, 200}}}}}}};
  if (name == "paper-synthetic-confounded") {
    base["experiment"]["c_values"] = {0.4, 0.5, 0.6, 0.7, 0.8};
    return base;
  }
  if (name == "appendix-E4") {
    base["experiment"]["c_values"] = {0.5};
    base["data"]["generate"]["risk_form"] = "inner_offset";
    base["constraints"]["extra"] = {
        {{"name", "safety"}, {"type", "ratio"}, {"column", "risk"}, {"direction", "le"}, {"limit", 0.05}},
        {{"name", "budget"}, {"type", "linear"}, {"column", "cost"}, {"direction", "le"}, {"limit_per_row", 0.5}},
        {{"name", "fairness"},
         {"type", "ratio"},
         {"column", "sensitive"},
         {"direction", "band"},
         {"center", 0.5},
         {"tol", 0.01}}};
    return base;
  }
  if (name == "appendix-F") {
    base["data"]["generate"]["variant"] = "binary_subgroup";
    base["experiment"]["c_values"] = {0.6, 0.8};
    return base;
  }
  if (name == "appendix-G") {
    base["data"]["generate"]["variant"] = "null";
    base["typei"] = {{"instances", 100}, {"bootstrap_iters", 10000}, {"significance", 0.05},
                     {"c_values", {0.4, 0.6, 0.8}}, {"test_fraction", 0.5}};
    return base;
  }
  fail(ErrorKind::Schema, "unknown preset '" + name + "'");
}

namespace {

RunConfig parse_strict(const json& j) {
  check_keys(j, {"schema_version", "preset", "seed", "output_dir", "data", "nuisance", "surrogate", "constraints",
                 "gda", "experiment", "typei"},
             "config");
  RunConfig c;
  read(j, "schema_version", c.schema_version);
  require(c.schema_version == kSchemaVersion, ErrorKind::Schema,
          "unsupported schema_version " + std::to_string(c.schema_version));
  read(j, "preset", c.preset);
  read(j, "seed", c.seed);
  read(j, "output_dir", c.output_dir);

  if (j.contains("data")) {
    const json& d = j.at("data");
    check_keys(d, {"source", "generate", "csv"}, "data");
    const std::string source = d.value("source", std::string("generate"));
    if (source == "generate") {
      c.data.kind = DataSource::Kind::Generate;
      if (d.contains("generate")) c.data.dgp = dgp_from_json(d.at("generate"));
    } else if (source == "csv") {
      c.data.kind = DataSource::Kind::Csv;
      const json& s = d.at("csv");
      check_keys(s, {"path", "features", "treatment", "outcome", "aux", "delimiter"}, "data.csv");
      c.data.csv_path = s.at("path").get<std::string>();
      read(s, "features", c.data.schema.features);
      read(s, "treatment", c.data.schema.treatment);
      read(s, "outcome", c.data.schema.outcome);
      read(s, "aux", c.data.schema.aux);
      if (s.contains("delimiter")) {
        const auto delim = s.at("delimiter").get<std::string>();
        require(delim.size() == 1, ErrorKind::Parameter, "delimiter must be a single character");
        c.data.schema.delimiter = delim[0];
      }
    } else {
      fail(ErrorKind::Schema, "data.source must be generate or csv");
    }
  }
  c.data.dgp = c.data.dgp.resolved();

  if (j.contains("nuisance")) {
    const json& n = j.at("nuisance");
    check_keys(n, {"propensity_l2", "propensity_max_iters", "propensity_tol", "clip", "estimator", "outcome"},
               "nuisance");
    read(n, "propensity_l2", c.nuisance.propensity_l2);
    read(n, "propensity_max_iters", c.nuisance.propensity_max_iters);
    read(n, "propensity_tol", c.nuisance.propensity_tol);
    read(n, "clip", c.nuisance.clip);
    if (n.contains("estimator")) c.nuisance.estimator = parse_estimator(n.at("estimator").get<std::string>());
    if (n.contains("outcome")) {
      const json& o = n.at("outcome");
      check_keys(o, {"hidden_size", "epochs", "lr", "batch_size", "link"}, "nuisance.outcome");
      read(o, "hidden_size", c.nuisance.outcome.hidden_size);
      read(o, "epochs", c.nuisance.outcome.epochs);
      read(o, "lr", c.nuisance.outcome.lr);
      read(o, "batch_size", c.nuisance.outcome.batch_size);
      if (o.contains("link")) parse_link(o.at("link").get<std::string>(), c.nuisance.outcome);
    }
  }
  require(c.nuisance.propensity_l2 >= 0.0, ErrorKind::Parameter, "propensity_l2 must be >= 0");
  require(c.nuisance.propensity_max_iters >= 1, ErrorKind::Parameter, "propensity_max_iters must be >= 1");
  require(c.nuisance.clip > 0.0 && c.nuisance.clip < 0.5, ErrorKind::Parameter, "clip must lie in (0, 0.5)");
  require(c.nuisance.outcome.hidden_size >= 1 && c.nuisance.outcome.epochs >= 1 && c.nuisance.outcome.lr > 0.0 &&
              c.nuisance.outcome.batch_size >= 1,
          ErrorKind::Parameter, "outcome model settings out of range");

  if (j.contains("surrogate")) {
    const json& s = j.at("surrogate");
    check_keys(s, {"family", "hidden_size", "depth", "trees", "temperature", "threshold"}, "surrogate");
    if (s.contains("family")) c.surrogate.spec.family = parse_family(s.at("family").get<std::string>());
    read(s, "hidden_size", c.surrogate.spec.hidden_size);
    read(s, "depth", c.surrogate.spec.depth);
    read(s, "trees", c.surrogate.spec.trees);
    read(s, "temperature", c.surrogate.spec.temperature);
    read(s, "threshold", c.surrogate.threshold);
  }
  require(c.surrogate.spec.hidden_size >= 1, ErrorKind::Parameter, "surrogate hidden_size must be >= 1");
  require(c.surrogate.spec.depth >= 1 && c.surrogate.spec.depth <= 12, ErrorKind::Parameter,
          "surrogate depth must lie in [1, 12]");
  require(c.surrogate.spec.trees >= 1, ErrorKind::Parameter, "surrogate trees must be >= 1");
  require(c.surrogate.spec.temperature > 0.0, ErrorKind::Parameter, "surrogate temperature must be > 0");
  require(c.surrogate.threshold > 0.0 && c.surrogate.threshold < 1.0, ErrorKind::Parameter,
          "surrogate threshold must lie in (0,1)");

  if (j.contains("constraints")) {
    const json& k = j.at("constraints");
    check_keys(k, {"c", "alpha", "extra"}, "constraints");
    read(k, "c", c.constraints.c);
    read(k, "alpha", c.constraints.alpha);
    if (k.contains("extra")) {
      for (const auto& e : k.at("extra")) c.constraints.extra.push_back(extra_from_json(e));
    }
  }
  require(c.constraints.c > 0.0 && c.constraints.c < 1.0, ErrorKind::Parameter, "constraints.c must lie in (0,1)");
  require(c.constraints.alpha >= 0.0 && c.constraints.alpha < 0.5, ErrorKind::Parameter,
          "constraints.alpha must lie in [0, 0.5)");

  if (j.contains("gda")) {
    check_keys(j.at("gda"), {"eta", "zeta", "beta", "l1_coef", "t_max", "converge_window", "converge_rel_tol",
                             "collapse_xi", "max_restarts", "seed", "objective", "allow_beta_outside_band", "delta"},
               "gda");
    c.gda = GdaConfig::from_json(j.at("gda"));
  }

  if (j.contains("experiment")) {
    const json& e = j.at("experiment");
    check_keys(e, {"splits", "test_fraction", "c_values", "cv", "parallelism", "regenerate_data",
                   "overlap_metric_alpha"},
               "experiment");
    read(e, "splits", c.experiment.splits);
    read(e, "test_fraction", c.experiment.test_fraction);
    read(e, "c_values", c.experiment.c_values);
    read(e, "parallelism", c.experiment.parallelism);
    read(e, "regenerate_data", c.experiment.regenerate_data);
    read(e, "overlap_metric_alpha", c.experiment.overlap_metric_alpha);
    if (e.contains("cv")) {
      const json& v = e.at("cv");
      check_keys(v, {"folds", "betas", "sizes"}, "experiment.cv");
      read(v, "folds", c.experiment.cv.folds);
      read(v, "betas", c.experiment.cv.betas);
      if (v.contains("sizes")) c.experiment.cv.sizes = int_list(v.at("sizes"));
    }
  }
  require(c.experiment.splits >= 1, ErrorKind::Parameter, "experiment.splits must be >= 1");
  require(c.experiment.test_fraction > 0.0 && c.experiment.test_fraction < 1.0, ErrorKind::Parameter,
          "experiment.test_fraction must lie in (0,1)");
  require(c.experiment.cv.folds >= 2, ErrorKind::Parameter, "experiment.cv.folds must be >= 2");
  require(c.experiment.parallelism >= 0, ErrorKind::Parameter, "experiment.parallelism must be >= 0");
  for (double cv : c.experiment.c_values) {
    require(cv > 0.0 && cv < 1.0, ErrorKind::Parameter, "experiment.c_values entries must lie in (0,1)");
  }
  for (double b : c.experiment.cv.betas) require(b > 0.0, ErrorKind::Parameter, "cv betas must be > 0");
  for (int s : c.experiment.cv.sizes) require(s >= 1, ErrorKind::Parameter, "cv sizes must be >= 1");

  if (j.contains("typei")) {
    const json& t = j.at("typei");
    check_keys(t, {"instances", "bootstrap_iters", "significance", "c_values", "test_fraction", "resampling"}, "typei");
    read(t, "instances", c.typei.instances);
    read(t, "bootstrap_iters", c.typei.bootstrap_iters);
    read(t, "significance", c.typei.significance);
    read(t, "c_values", c.typei.c_values);
    read(t, "test_fraction", c.typei.test_fraction);
    if (t.contains("resampling")) {
      require(t.at("resampling").is_string(), ErrorKind::Schema, "typei.resampling must be a string");
      c.typei.resampling = parse_resampling(t.at("resampling").get<std::string>());
    }
  }
  require(c.typei.instances >= 1, ErrorKind::Parameter, "typei.instances must be >= 1");
  require(c.typei.bootstrap_iters >= 100, ErrorKind::Parameter, "typei.bootstrap_iters must be >= 100");
  require(c.typei.significance > 0.0 && c.typei.significance <= 1.0, ErrorKind::Parameter,
          "typei.significance must lie in (0,1]");
  require(!c.typei.c_values.empty(), ErrorKind::Parameter, "typei.c_values must not be empty");
  for (double cv : c.typei.c_values) {
    require(cv > 0.0 && cv < 1.0, ErrorKind::Parameter, "typei.c_values entries must lie in (0,1)");
  }
  require(c.typei.test_fraction > 0.0 && c.typei.test_fraction < 1.0, ErrorKind::Parameter,
          "typei.test_fraction must lie in (0,1)");

  c.gda.validate(c.constraints.c);
  for (double cv : c.experiment.c_values) c.gda.validate(cv);
  for (double b : c.experiment.cv.betas) {
    GdaConfig g = c.gda;
    g.beta = b;
    g.validate(c.constraints.c);
  }
  return c;
}

}  // namespace

RunConfig parse_run_config(const json& j, const std::string& preset_override) {
  if (!j.is_object()) fail(ErrorKind::Schema, "config must be a JSON object");
  std::string preset = preset_override;
  if (preset.empty() && j.contains("preset") && j.at("preset").is_string()) preset = j.at("preset").get<std::string>();
  json merged = preset.empty() ? json::object() : preset_json(preset);
  merged.merge_patch(j);
  if (!preset.empty()) merged["preset"] = preset;
  try {
    return parse_strict(merged);
  } catch (const json::exception& e) {
    fail(ErrorKind::Schema, std::string("invalid config: ") + e.what());
  }
}

RunConfig load_run_config(const std::string& path, const std::string& preset_override) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::Io, "cannot open config file '" + path + "'");
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    fail(ErrorKind::Parse, "config file '" + path + "' is not valid JSON: " + e.what());
  }
  return parse_run_config(j, preset_override);
}

std::vector<ExtraConstraint> materialize_extras(const ConstraintConfig& cfg, const Dataset& ds) {
  std::vector<ExtraConstraint> out;
  for (const auto& e : cfg.extra) {
    require(ds.has_aux(e.column), ErrorKind::Schema,
            "constraint '" + e.name + "' refers to missing column '" + e.column + "'");
    const Vector& col = ds.aux(e.column);
    if (e.direction == "band") {
      for (auto& r : ratio_band(e.name, col, e.center, e.tol)) out.push_back(std::move(r));
      continue;
    }
    const double limit = e.per_row ? e.limit * static_cast<double>(ds.rows()) : e.limit;
    const bool le = e.direction == "le";
    if (e.type == ConstraintKind::Linear) {
      out.push_back(le ? linear_at_most(e.name, col, limit) : linear_at_least(e.name, col, limit));
    } else {
      out.push_back(le ? ratio_at_most(e.name, col, limit) : ratio_at_least(e.name, col, limit));
    }
  }
  return out;
}

}  // namespace cosub
