#include "doctest.h"

#include "core/config.hpp"
#include "core/error.hpp"
#include "helpers.hpp"

using namespace cosub;

namespace {

ErrorKind parse_error(const json& j) {
  try {
    parse_run_config(j);
  } catch (const Error& e) {
    return e.kind();
  }
  FAIL("expected a config error");
  return ErrorKind::Numerical;
}

}  // namespace

TEST_CASE("every preset parses and round-trips through the resolved form") {
  for (const auto& name : preset_names()) {
    CAPTURE(name);
    auto cfg = parse_run_config(json::object(), name);
    CHECK(cfg.preset == name);
    auto again = parse_run_config(cfg.to_json());
    CHECK(again.to_json() == cfg.to_json());
  }
  CHECK(parse_error({{"preset", "nope"}}) == ErrorKind::Schema);
}

TEST_CASE("preset values") {
  auto conf = parse_run_config({{"preset", "paper-synthetic-confounded"}});
  CHECK(conf.data.dgp.n == 5000);
  CHECK(conf.data.dgp.omega_tilde == 5.0);
  CHECK(conf.constraints.alpha == 0.02);
  CHECK(conf.gda.beta == 1e-4);
  CHECK(conf.experiment.c_values == std::vector<double>{0.4, 0.5, 0.6, 0.7, 0.8});

  auto multi = parse_run_config({{"preset", "appendix-E4"}});
  CHECK(multi.constraints.extra.size() == 3);
  CHECK(multi.data.dgp.risk_form == RiskForm::InnerOffset);

  auto null = parse_run_config({{"preset", "appendix-G"}});
  CHECK(null.data.dgp.variant == DgpVariant::Null);
  CHECK(null.typei.c_values == std::vector<double>{0.4, 0.6, 0.8});
  CHECK(null.typei.resampling == Resampling::WithReplacement);

  auto sub = parse_run_config({{"preset", "appendix-G"}, {"typei", {{"resampling", "without_replacement"}}}});
  CHECK(sub.typei.resampling == Resampling::WithoutReplacement);
  CHECK(sub.to_json()["typei"]["resampling"] == "without_replacement");
  CHECK_THROWS_AS(parse_run_config({{"typei", {{"resampling", "jackknife"}}}}), Error);
}

TEST_CASE("user values override the preset") {
  auto cfg = parse_run_config({{"preset", "appendix-F"}, {"seed", 9}, {"gda", {{"eta", 0.3}}},
                               {"experiment", {{"c_values", {0.7}}}}});
  CHECK(cfg.seed == 9);
  CHECK(cfg.gda.eta == 0.3);
  CHECK(cfg.gda.beta == 1e-4);
  CHECK(cfg.experiment.c_values == std::vector<double>{0.7});
  CHECK(cfg.data.dgp.variant == DgpVariant::BinarySubgroup);
}

TEST_CASE("strict validation") {
  CHECK(parse_error({{"gda", {{"etta", 1.0}}}}) == ErrorKind::Schema);
  CHECK(parse_error({{"surprise", 1}}) == ErrorKind::Schema);
  CHECK(parse_error({{"gda", {{"eta", "fast"}}}}) == ErrorKind::Schema);
  CHECK(parse_error({{"gda", {{"beta", 0.5}}}}) == ErrorKind::Parameter);
  CHECK(parse_error({{"constraints", {{"c", 1.2}}}}) == ErrorKind::Parameter);
  CHECK(parse_error({{"data", {{"generate", {{"rho", 1.0}}}}}}) == ErrorKind::Parameter);
  CHECK(parse_error({{"typei", {{"bootstrap_iters", 10}}}}) == ErrorKind::Parameter);
  CHECK(parse_error({{"experiment", {{"cv", {{"betas", {0.5}}}}}}}) == ErrorKind::Parameter);
  CHECK(parse_error({{"schema_version", 2}}) == ErrorKind::Schema);

  auto ok = parse_run_config({{"gda", {{"beta", 0.5}, {"allow_beta_outside_band", true}}}});
  CHECK(ok.gda.beta == 0.5);
}

TEST_CASE("extra constraints materialize against the dataset") {
  auto cfg = parse_run_config({{"preset", "appendix-E4"}});
  DgpConfig dgp = cfg.data.dgp;
  dgp.n = 400;
  auto ds = generate_dataset(dgp, 1);
  auto extras = materialize_extras(cfg.constraints, ds);
  REQUIRE(extras.size() == 4);
  CHECK(extras[0].name == "safety");
  CHECK(extras[0].kind == ConstraintKind::Ratio);
  CHECK(extras[0].a == doctest::Approx(-0.05));
  CHECK(extras[1].name == "budget");
  CHECK(extras[1].kind == ConstraintKind::Linear);
  CHECK(extras[1].a == doctest::Approx(-0.5));  // 0.5 per row, divided back by n
  CHECK(extras[2].name == "fairness_upper");
  CHECK(extras[3].a == doctest::Approx(0.49));

  cfg.constraints.extra[0].column = "missing";
  CHECK_THROWS_AS(materialize_extras(cfg.constraints, ds), Error);
}

TEST_CASE("config files") {
  auto dir = testing::scratch_dir("config_files");
  testing::write_text(dir / "bad.json", "{ not json");
  try {
    load_run_config((dir / "bad.json").string());
    FAIL("expected a parse error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::Parse);
  }
  CHECK_THROWS_AS(load_run_config((dir / "none.json").string()), Error);
  testing::write_text(dir / "ok.json", R"({"seed": 4, "data": {"generate": {"n": 300}}})");
  auto cfg = load_run_config((dir / "ok.json").string(), "appendix-F");
  CHECK(cfg.data.dgp.n == 300);
  CHECK(cfg.preset == "appendix-F");
}
