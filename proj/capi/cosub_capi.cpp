#include "cosub/cosub.h"

#include "core/commands.hpp"
#include "core/config.hpp"
#include "core/gda.hpp"
#include "core/pipeline.hpp"
#include "core/pseudo.hpp"

#include <cstring>
#include <string>
#include <vector>

using namespace cosub;

struct cosub_config {
  RunConfig cfg;
};

struct cosub_result {
  CommandResult result;
  std::string summary;
};

struct cosub_dataset {
  Dataset ds;
};

namespace {

thread_local std::string g_last_error;

int set_error(Status s, const std::string& msg) {
  g_last_error = msg;
  return static_cast<int>(s);
}

template <typename Fn>
int guard(Fn&& fn) {
  try {
    g_last_error.clear();
    return fn();
  } catch (const Error& e) {
    return set_error(status_for(e.kind()), e.what());
  } catch (const json::exception& e) {
    return set_error(Status::Config, e.what());
  } catch (const std::bad_alloc&) {
    return set_error(Status::Internal, "out of memory");
  } catch (const std::exception& e) {
    return set_error(Status::Internal, e.what());
  } catch (...) {
    return set_error(Status::Internal, "unknown exception");
  }
}

char* dup_string(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (!out) throw std::bad_alloc();
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

int null_arg(const char* what) { return set_error(Status::Config, std::string(what) + " must not be NULL"); }

NuisanceEstimates raw_estimates(const double* e, const double* mu0, const double* mu1, size_t n) {
  NuisanceEstimates est;
  const auto m = static_cast<Index>(n);
  est.e_hat = Eigen::Map<const Vector>(e, m);
  est.mu0_hat = mu0 ? Vector(Eigen::Map<const Vector>(mu0, m)) : Vector::Zero(m);
  est.mu1_hat = mu1 ? Vector(Eigen::Map<const Vector>(mu1, m)) : Vector::Zero(m);
  return est;
}

Dataset kernel_dataset(const int* a, const double* y, size_t n) {
  const auto m = static_cast<Index>(n);
  Eigen::VectorXi treat = Eigen::Map<const Eigen::VectorXi>(a, m);
  return Dataset(Matrix::Zero(m, 1), treat, Eigen::Map<const Vector>(y, m));
}

}  // namespace

extern "C" {

const char* cosub_version(void) { return COSUB_VERSION; }

const char* cosub_last_error(void) { return g_last_error.c_str(); }

const char* cosub_status_string(int status) {
  if (status < 0 || status > 5) return "unknown status";
  return to_string(static_cast<Status>(status));
}

void cosub_string_free(char* s) { std::free(s); }

int cosub_config_load(const char* path, const char* preset, cosub_config** out) {
  if (!path) return null_arg("path");
  if (!out) return null_arg("out");
  return guard([&] {
    auto* c = new cosub_config{load_run_config(path, preset ? preset : "")};
    *out = c;
    return 0;
  });
}

int cosub_config_parse(const char* json_text, const char* preset, cosub_config** out) {
  if (!json_text) return null_arg("json_text");
  if (!out) return null_arg("out");
  return guard([&] {
    json j;
    try {
      j = json::parse(json_text);
    } catch (const json::exception& e) {
      fail(ErrorKind::Parse, std::string("config is not valid JSON: ") + e.what());
    }
    *out = new cosub_config{parse_run_config(j, preset ? preset : "")};
    return 0;
  });
}

int cosub_config_to_json(const cosub_config* cfg, char** out_json) {
  if (!cfg) return null_arg("cfg");
  if (!out_json) return null_arg("out_json");
  return guard([&] {
    *out_json = dup_string(cfg->cfg.to_json().dump(2));
    return 0;
  });
}

void cosub_config_free(cosub_config* cfg) { delete cfg; }

int cosub_run(const cosub_config* cfg, cosub_command command, const cosub_run_options* options, cosub_result** out) {
  if (!cfg) return null_arg("cfg");
  return guard([&] {
    CommandOptions opt;
    if (options) {
      if (options->out_dir) opt.out_dir = options->out_dir;
      if (options->has_seed) opt.seed = options->seed;
      opt.trace = options->trace != 0;
      opt.dump_phi = options->dump_phi != 0;
    }
    CommandResult r;
    switch (command) {
      case COSUB_CMD_GENERATE: r = cmd_generate(cfg->cfg, opt); break;
      case COSUB_CMD_FIT: r = cmd_fit(cfg->cfg, opt); break;
      case COSUB_CMD_EXPERIMENT: r = cmd_experiment(cfg->cfg, opt); break;
      case COSUB_CMD_TYPEI: r = cmd_typei(cfg->cfg, opt); break;
      default: return set_error(Status::Config, "unknown command");
    }
    const int status = static_cast<int>(r.status);
    if (status != 0) g_last_error = r.message;
    if (out) {
      auto* res = new cosub_result{std::move(r), {}};
      res->summary = res->result.summary.is_null() ? "{}" : res->result.summary.dump();
      *out = res;
    }
    return status;
  });
}

int cosub_result_status(const cosub_result* r) { return r ? static_cast<int>(r->result.status) : COSUB_ERR_CONFIG; }

const char* cosub_result_message(const cosub_result* r) { return r ? r->result.message.c_str() : ""; }

const char* cosub_result_summary_json(const cosub_result* r) { return r ? r->summary.c_str() : "{}"; }

size_t cosub_result_output_count(const cosub_result* r) { return r ? r->result.outputs.size() : 0; }

const char* cosub_result_output(const cosub_result* r, size_t index) {
  if (!r || index >= r->result.outputs.size()) return nullptr;
  return r->result.outputs[index].c_str();
}

void cosub_result_free(cosub_result* r) { delete r; }

int cosub_dataset_load_csv(const char* path, cosub_dataset** out) {
  if (!path) return null_arg("path");
  if (!out) return null_arg("out");
  return guard([&] {
    *out = new cosub_dataset{load_csv(path)};
    return 0;
  });
}

int cosub_dataset_generate(const cosub_config* cfg, uint64_t seed, cosub_dataset** out) {
  if (!cfg) return null_arg("cfg");
  if (!out) return null_arg("out");
  return guard([&] {
    require(cfg->cfg.data.kind == DataSource::Kind::Generate, ErrorKind::Schema, "config does not generate data");
    *out = new cosub_dataset{generate_dataset(cfg->cfg.data.dgp, UnitSeeds::derive(seed, 0).data)};
    return 0;
  });
}

size_t cosub_dataset_rows(const cosub_dataset* ds) { return ds ? static_cast<size_t>(ds->ds.rows()) : 0; }

size_t cosub_dataset_cols(const cosub_dataset* ds) { return ds ? static_cast<size_t>(ds->ds.cols()) : 0; }

int cosub_dataset_column(const cosub_dataset* ds, const char* name, double* out, size_t len) {
  if (!ds) return null_arg("ds");
  if (!name) return null_arg("name");
  if (!out) return null_arg("out");
  return guard([&] {
    const Dataset& d = ds->ds;
    require(len == static_cast<size_t>(d.rows()), ErrorKind::Parameter, "buffer length must equal the row count");
    Vector col;
    const std::string key = name;
    if (key == "a") {
      col = d.treatment().cast<double>();
    } else if (key == "y") {
      col = d.outcome();
    } else if (d.has_aux(key)) {
      col = d.aux(key);
    } else {
      const auto& names = d.feature_names();
      const auto it = std::find(names.begin(), names.end(), key);
      require(it != names.end(), ErrorKind::Schema, "no column named '" + key + "'");
      col = d.features().col(it - names.begin());
    }
    std::memcpy(out, col.data(), len * sizeof(double));
    return 0;
  });
}

void cosub_dataset_free(cosub_dataset* ds) { delete ds; }

int cosub_overlap_h(const double* e_hat, size_t n, double alpha, double* out_h) {
  if (!e_hat || !out_h) return null_arg("e_hat/out_h");
  return guard([&] {
    const OverlapScores h = overlap_h(Eigen::Map<const Vector>(e_hat, static_cast<Index>(n)), alpha);
    std::memcpy(out_h, h.h.data(), n * sizeof(double));
    return 0;
  });
}

int cosub_aiptw_phi(const double* e_hat, const double* mu0, const double* mu1, const int* a, const double* y,
                    size_t n, double* out_phi) {
  if (!e_hat || !mu0 || !mu1 || !a || !y || !out_phi) return null_arg("input arrays");
  return guard([&] {
    const PseudoOutcomes p = aiptw_phi(raw_estimates(e_hat, mu0, mu1, n), kernel_dataset(a, y, n));
    std::memcpy(out_phi, p.phi.data(), n * sizeof(double));
    return 0;
  });
}

int cosub_iptw_phi(const double* e_hat, const int* a, const double* y, size_t n, double* out_phi) {
  if (!e_hat || !a || !y || !out_phi) return null_arg("input arrays");
  return guard([&] {
    const PseudoOutcomes p = iptw_phi(raw_estimates(e_hat, nullptr, nullptr, n), kernel_dataset(a, y, n));
    std::memcpy(out_phi, p.phi.data(), n * sizeof(double));
    return 0;
  });
}

int cosub_subgroup_functional(const double* s, const double* phi, size_t n, double* out_f, double* out_w) {
  if (!s || !phi || !out_f) return null_arg("s/phi/out_f");
  return guard([&] {
    const auto m = static_cast<Index>(n);
    const SubgroupValue v = subgroup_functional(Eigen::Map<const Vector>(s, m), Eigen::Map<const Vector>(phi, m));
    *out_f = v.f;
    if (out_w) std::memcpy(out_w, v.w.data(), n * sizeof(double));
    return 0;
  });
}

}  // extern "C"
