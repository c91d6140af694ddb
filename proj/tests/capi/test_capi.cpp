// Exercises the shared library through its C header only, plus the CLI binary.
#define DOCTEST_CONFIG_IMPLEMENT
#include "doctest.h"

#include "cosub/cosub.h"

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>
#include <sys/wait.h>
#include <vector>

namespace fs = std::filesystem;

namespace {

std::string g_cli;
fs::path g_work;

const char* kSmallFit = R"({
  "preset": "paper-synthetic-confounded",
  "seed": 5,
  "data": {"generate": {"n": 600}},
  "nuisance": {"outcome": {"epochs": 10, "hidden_size": 8}},
  "surrogate": {"hidden_size": 6},
  "gda": {"t_max": 300}
})";

cosub_config* parse(const char* text) {
  cosub_config* cfg = nullptr;
  REQUIRE(cosub_config_parse(text, nullptr, &cfg) == COSUB_OK);
  return cfg;
}

int shell(const std::string& cmd) {
  const int rc = std::system((cmd + " >/dev/null 2>&1").c_str());
  return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

fs::path write_file(const std::string& name, const std::string& text) {
  fs::create_directories(g_work);
  const fs::path p = g_work / name;
  std::ofstream(p) << text;
  return p;
}

}  // namespace

TEST_CASE("version and status strings") {
  CHECK(std::string(cosub_version()).size() > 0);
  CHECK(std::string(cosub_status_string(COSUB_ERR_INFEASIBLE)).size() > 0);
}

TEST_CASE("config errors carry a status and a message") {
  cosub_config* cfg = nullptr;
  CHECK(cosub_config_parse("{not json", nullptr, &cfg) == COSUB_ERR_CONFIG);
  CHECK(cfg == nullptr);
  CHECK(std::string(cosub_last_error()).size() > 0);
  CHECK(cosub_config_parse(R"({"gda": {"beta": 0.9}})", nullptr, &cfg) == COSUB_ERR_CONFIG);
  CHECK(std::string(cosub_last_error()).find("beta") != std::string::npos);
  CHECK(cosub_config_load("/nonexistent/cfg.json", nullptr, &cfg) == COSUB_ERR_IO);
  CHECK(cosub_config_parse("{}", "no-such-preset", &cfg) == COSUB_ERR_CONFIG);
}

TEST_CASE("resolved config round-trips through JSON") {
  cosub_config* cfg = parse(R"({"preset": "appendix-F", "seed": 3})");
  char* text = nullptr;
  REQUIRE(cosub_config_to_json(cfg, &text) == COSUB_OK);
  cosub_config* again = parse(text);
  char* text2 = nullptr;
  REQUIRE(cosub_config_to_json(again, &text2) == COSUB_OK);
  CHECK(std::string(text) == std::string(text2));
  cosub_string_free(text);
  cosub_string_free(text2);
  cosub_config_free(cfg);
  cosub_config_free(again);
}

TEST_CASE("generate writes a dataset readable through the API") {
  cosub_config* cfg = parse(R"({"data": {"generate": {"n": 5000}}})");
  cosub_run_options opt{};
  const std::string out = (g_work / "gen").string();
  opt.out_dir = out.c_str();
  cosub_result* res = nullptr;
  REQUIRE(cosub_run(cfg, COSUB_CMD_GENERATE, &opt, &res) == COSUB_OK);
  CHECK(cosub_result_status(res) == COSUB_OK);
  CHECK(cosub_result_output_count(res) == 3);
  cosub_result_free(res);

  cosub_dataset* ds = nullptr;
  REQUIRE(cosub_dataset_load_csv((fs::path(out) / "dataset.csv").c_str(), &ds) == COSUB_OK);
  CHECK(cosub_dataset_rows(ds) == 5000);
  CHECK(cosub_dataset_cols(ds) == 10);
  std::vector<double> a(5000);
  CHECK(cosub_dataset_column(ds, "a", a.data(), a.size()) == COSUB_OK);
  for (double v : a) REQUIRE((v == 0.0 || v == 1.0));
  CHECK(cosub_dataset_column(ds, "a", a.data(), 10) != COSUB_OK);
  cosub_dataset_free(ds);

  cosub_dataset* gen = nullptr;
  REQUIRE(cosub_dataset_generate(cfg, 0, &gen) == COSUB_OK);
  std::vector<double> ite(cosub_dataset_rows(gen));
  CHECK(cosub_dataset_column(gen, "true_ite", ite.data(), ite.size()) == COSUB_OK);
  cosub_dataset_free(gen);
  cosub_config_free(cfg);

  cosub_config* null_cfg = parse(R"({"data": {"generate": {"n": 200, "variant": "null"}}})");
  cosub_dataset* zero = nullptr;
  REQUIRE(cosub_dataset_generate(null_cfg, 4, &zero) == COSUB_OK);
  std::vector<double> z(200);
  cosub_dataset_column(zero, "true_ite", z.data(), z.size());
  for (double v : z) CHECK(v == 0.0);
  cosub_dataset_free(zero);
  cosub_config_free(null_cfg);
}

TEST_CASE("unwritable output maps to the I/O status") {
  const fs::path blocker = write_file("blocker", "x");
  cosub_config* cfg = parse(R"({"data": {"generate": {"n": 100}}})");
  cosub_run_options opt{};
  const std::string out = (blocker / "sub").string();
  opt.out_dir = out.c_str();
  cosub_result* res = nullptr;
  CHECK(cosub_run(cfg, COSUB_CMD_GENERATE, &opt, &res) == COSUB_ERR_IO);
  CHECK(cosub_result_status(res) == COSUB_ERR_IO);
  cosub_result_free(res);
  cosub_config_free(cfg);
}

TEST_CASE("fit writes its artifacts") {
  cosub_config* cfg = parse(kSmallFit);
  cosub_run_options opt{};
  const std::string out = (g_work / "fit").string();
  opt.out_dir = out.c_str();
  opt.trace = 1;
  opt.dump_phi = 1;
  cosub_result* res = nullptr;
  const int status = cosub_run(cfg, COSUB_CMD_FIT, &opt, &res);
  CHECK((status == COSUB_OK || status == COSUB_ERR_INFEASIBLE));
  for (const char* name : {"train_report.json", "surrogate.json", "metrics.json", "trace.csv", "phi.csv",
                           "constraints.json", "resolved_config.json"}) {
    CHECK(fs::exists(fs::path(out) / name));
  }
  CHECK(std::string(cosub_result_summary_json(res)).find("feasible") != std::string::npos);
  cosub_result_free(res);
  cosub_config_free(cfg);
}

TEST_CASE("elementwise kernels") {
  const double e[] = {0.02, 0.5, 0.01};
  double h[3];
  REQUIRE(cosub_overlap_h(e, 3, 0.02, h) == COSUB_OK);
  CHECK(h[0] == 0.0);
  CHECK(h[1] == doctest::Approx(-11.7551).epsilon(1e-5));
  CHECK(h[2] == doctest::Approx(0.4949).epsilon(1e-4));
  CHECK(cosub_overlap_h(e, 3, 0.5, h) == COSUB_ERR_CONFIG);

  const double eh[] = {0.5, 0.25};
  const double mu0[] = {0.3, 0.3};
  const double mu1[] = {0.5, 0.5};
  const int a[] = {1, 0};
  const double y[] = {1.0, 0.3};
  double phi[2];
  REQUIRE(cosub_aiptw_phi(eh, mu0, mu1, a, y, 2, phi) == COSUB_OK);
  CHECK(phi[0] == doctest::Approx(1.2));
  CHECK(phi[1] == doctest::Approx(0.2));
  REQUIRE(cosub_iptw_phi(eh, a, y, 2, phi) == COSUB_OK);
  CHECK(phi[0] == doctest::Approx(2.0));

  const double s[] = {0.9, 0.1};
  const double p[] = {2.0, 0.0};
  double f = 0.0, w[2];
  REQUIRE(cosub_subgroup_functional(s, p, 2, &f, w) == COSUB_OK);
  CHECK(f == doctest::Approx(1.8));
  CHECK(w[1] == doctest::Approx(-1.8));
  const double zero[] = {0.0, 0.0};
  CHECK(cosub_subgroup_functional(zero, p, 2, &f, nullptr) == COSUB_ERR_INFEASIBLE);
  CHECK(cosub_overlap_h(nullptr, 3, 0.02, h) != COSUB_OK);
}

TEST_CASE("command-line exit codes") {
  REQUIRE(!g_cli.empty());
  CHECK(shell(g_cli + " --version") == 0);
  CHECK(shell(g_cli + " generate") == 2);
  CHECK(shell(g_cli + " generate --config /nonexistent.json") == 2);

  const fs::path bad_rho = write_file("bad_rho.json", R"({"data": {"generate": {"rho": 1.0}}})");
  CHECK(shell(g_cli + " generate --config " + bad_rho.string()) == 2);

  const fs::path ok = write_file("ok.json", R"({"data": {"generate": {"n": 50}}})");
  const fs::path blocker = write_file("blocker2", "x");
  CHECK(shell(g_cli + " generate --config " + ok.string() + " --out " + (blocker / "d").string()) == 3);
  CHECK(shell(g_cli + " generate --config " + ok.string() + " --out " + (g_work / "cli_gen").string()) == 0);
  CHECK(fs::exists(g_work / "cli_gen" / "dataset.csv"));
}

int main(int argc, char** argv) {
  if (argc >= 3) {
    g_cli = argv[1];
    g_work = argv[2];
  } else {
    g_work = fs::temp_directory_path() / "cosub_capi";
  }
  fs::remove_all(g_work);
  fs::create_directories(g_work);
  doctest::Context ctx;
  ctx.applyCommandLine(1, argv);
  return ctx.run();
}
