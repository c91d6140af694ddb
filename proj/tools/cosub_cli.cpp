#include "cosub/cosub.h"

#include <CLI11.hpp>

#include <cstdio>
#include <string>

namespace {

struct Flags {
  std::string config;
  std::string out;
  std::string preset;
  uint64_t seed = 0;
  bool trace = false;
  bool dump_phi = false;
};

void add_flags(CLI::App* sub, Flags& f) {
  sub->add_option("--config", f.config, "Run configuration (JSON)")->required()->check(CLI::ExistingFile);
  sub->add_option("--out", f.out, "Output directory (overrides the config)");
  sub->add_option("--seed", f.seed, "Master seed (overrides the config)");
  sub->add_option("--preset", f.preset, "Named preset applied under the config");
  sub->add_flag("--trace", f.trace, "Write the per-iteration trace CSV (fit)");
  sub->add_flag("--dump-phi", f.dump_phi, "Write pseudo-outcomes CSV (fit)");
}

int run(const Flags& f, cosub_command cmd, bool seed_given) {
  cosub_config* cfg = nullptr;
  int status = cosub_config_load(f.config.c_str(), f.preset.c_str(), &cfg);
  if (status != COSUB_OK) {
    std::fprintf(stderr, "cosub: %s: %s\n", cosub_status_string(status), cosub_last_error());
    return status;
  }
  cosub_run_options opt{};
  opt.out_dir = f.out.empty() ? nullptr : f.out.c_str();
  opt.has_seed = seed_given ? 1 : 0;
  opt.seed = f.seed;
  opt.trace = f.trace ? 1 : 0;
  opt.dump_phi = f.dump_phi ? 1 : 0;
  cosub_result* res = nullptr;
  status = cosub_run(cfg, cmd, &opt, &res);
  if (res) {
    for (size_t i = 0; i < cosub_result_output_count(res); ++i) std::printf("wrote %s\n", cosub_result_output(res, i));
    std::FILE* stream = status == COSUB_OK ? stdout : stderr;
    std::fprintf(stream, "%s: %s\n", status == COSUB_OK ? "ok" : cosub_status_string(status),
                 cosub_result_message(res));
    cosub_result_free(res);
  } else if (status != COSUB_OK) {
    std::fprintf(stderr, "cosub: %s: %s\n", cosub_status_string(status), cosub_last_error());
  }
  cosub_config_free(cfg);
  return status;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Constrained treatment-effect subgroup identification"};
  app.set_version_flag("--version", std::string(cosub_version()));
  app.require_subcommand(1);

  Flags flags;
  struct Sub {
    const char* name;
    const char* help;
    cosub_command cmd;
  };
  const Sub subs[] = {{"generate", "Write a synthetic dataset", COSUB_CMD_GENERATE},
                      {"fit", "Fit nuisances and the subgroup model on one split", COSUB_CMD_FIT},
                      {"experiment", "Repeated splits with cross-validation and evaluation", COSUB_CMD_EXPERIMENT},
                      {"typei", "Type I error study on null data", COSUB_CMD_TYPEI}};
  std::vector<std::pair<CLI::App*, cosub_command>> registered;
  for (const auto& s : subs) {
    CLI::App* sub = app.add_subcommand(s.name, s.help);
    add_flags(sub, flags);
    registered.emplace_back(sub, s.cmd);
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : COSUB_ERR_CONFIG;
  }
  for (const auto& [sub, cmd] : registered) {
    if (sub->parsed()) return run(flags, cmd, sub->get_option("--seed")->count() > 0);
  }
  return COSUB_ERR_INTERNAL;
}
