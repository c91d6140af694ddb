#include "doctest.h"

#include "core/error.hpp"
#include "core/gda.hpp"
#include "helpers.hpp"

#include <cmath>

using namespace cosub;
using namespace cosub::testing;

namespace {

OverlapScores no_overlap(Index n) {
  OverlapScores h;
  h.h = Vector::Constant(n, -1.0);
  h.alpha = 0.02;
  return h;
}

SurrogateSpec small_mlp() {
  SurrogateSpec spec;
  spec.hidden_size = 6;
  return spec;
}

// Central differences of the objective over theta.
Vector numeric_grad(Surrogate& model, const Matrix& x, const Vector& phi, const Vector& lambda,
                    const ConstraintSet& set, const GdaConfig& cfg) {
  const Vector theta = model.params();
  Vector out(theta.size());
  const double h = 1e-6;
  for (Index k = 0; k < theta.size(); ++k) {
    Vector tp = theta, tm = theta;
    tp[k] += h;
    tm[k] -= h;
    model.set_params(tp);
    const double fp = objective(model, x, phi, lambda, set, cfg).value;
    model.set_params(tm);
    const double fm = objective(model, x, phi, lambda, set, cfg).value;
    out[k] = (fp - fm) / (2 * h);
  }
  model.set_params(theta);
  return out;
}

double rel_error(const Vector& analytic, const Vector& numeric) {
  return (analytic - numeric).cwiseAbs().maxCoeff() / numeric.cwiseAbs().maxCoeff();
}

}  // namespace

TEST_CASE("subgroup functional") {
  Vector s(2), phi(2);
  s << 0.9, 0.1;
  phi << 2.0, 0.0;
  auto v = subgroup_functional(s, phi);
  CHECK(v.f == doctest::Approx(1.8));
  CHECK(v.w[0] == doctest::Approx(0.2));
  CHECK(v.w[1] == doctest::Approx(-1.8));

  Vector p = random_vector(50, 1);
  CHECK(subgroup_functional(Vector::Constant(50, 0.3), p).f == doctest::Approx(p.mean()).epsilon(1e-14));

  auto flat = subgroup_functional(random_vector(50, 2).cwiseAbs(), Vector::Constant(50, 0.7));
  CHECK(flat.f == doctest::Approx(0.7));
  CHECK(flat.w.cwiseAbs().maxCoeff() < 1e-15);

  try {
    subgroup_functional(Vector::Zero(3), Vector::Ones(3));
    FAIL("expected collapse");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::Collapse);
  }
}

TEST_CASE("objective composition") {
  Matrix x = random_matrix(2, 3, 1);
  auto model = make_surrogate(small_mlp(), x, 1);
  model->set_params(Vector::Zero(model->num_params()));  // s = 0.5
  Vector phi(2);
  phi << 2.0, 1.6;
  GdaConfig cfg;
  cfg.beta = 0.01;

  auto set = build_constraint_set(0.7, no_overlap(2), {});
  Vector lambda = Vector::Constant(1, 0.5);
  auto v = objective(*model, x, phi, lambda, set, cfg);
  CHECK(v.f == doctest::Approx(1.8));
  CHECK(v.g.values[0] == doctest::Approx(0.2));
  CHECK(v.value == doctest::Approx(-1.70125));

  CHECK(objective(*model, x, phi, Vector::Zero(1), set, cfg).value == doctest::Approx(-1.8));

  auto slack = build_constraint_set(0.3, no_overlap(2), {});
  Vector lam = Vector::Constant(1, 0.1);
  CHECK(objective(*model, x, phi, lam, slack, cfg).value == doctest::Approx(-1.8 - 0.005 * 0.01));

  cfg.l1_coef = 0.1;
  Vector theta = Vector::Zero(model->num_params());
  theta[0] = -3.0;
  model->set_params(theta);
  auto with_l1 = objective(*model, x, phi, Vector::Zero(1), set, cfg);
  CHECK(with_l1.value - with_l1.without_l1 == doctest::Approx(0.3));
}

TEST_CASE("multiplier gradient") {
  auto one = [](double v) { return Vector::Constant(1, v); };
  CHECK(grad_lambda(one(0.1), one(-0.3), 0.01)[0] == doctest::Approx(-0.001));
  CHECK(grad_lambda(one(0.0), one(0.2), 0.01)[0] == doctest::Approx(0.2));
  CHECK(grad_lambda(one(0.7), one(0.0), 0.01)[0] == doctest::Approx(-0.007));
  CHECK(grad_lambda(one(0.7), one(-0.3), 0.01, ObjectiveKind::Plain)[0] == doctest::Approx(-0.3));
}

TEST_CASE("theta gradient: multiplier-free and closed gates") {
  Matrix x = random_matrix(60, 3, 3);
  Vector phi = random_vector(60, 4);
  auto model = make_surrogate(small_mlp(), x, 5);
  GdaConfig cfg;
  auto set = build_constraint_set(0.05, no_overlap(60), {linear_at_most("cap", Vector::Ones(60), 60.0)});

  const Vector base = grad_theta(*model, x, phi, Vector::Zero(2), set, cfg);
  const Vector s = model->forward(x);
  const Vector expected = model->backward_weighted(x, -subgroup_functional(s, phi).w);
  CHECK((base - expected).cwiseAbs().maxCoeff() == 0.0);

  // both residuals negative: size 0.05 - ~0.5, cap mean(s) - 1
  const Vector gated = grad_theta(*model, x, phi, Vector::Constant(2, 37.0), set, cfg);
  CHECK((gated - base).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("theta gradient matches finite differences of the objective") {
  Matrix x = random_matrix(50, 3, 7);
  Vector phi = random_vector(50, 8);
  OverlapScores h;
  h.h = random_vector(50, 9);
  h.alpha = 0.02;
  auto set = build_constraint_set(0.6, h, {linear_at_most("cap", random_vector(50, 10).cwiseAbs(), 5.0)});
  for (auto kind : {ObjectiveKind::Modified, ObjectiveKind::Plain}) {
    GdaConfig cfg;
    cfg.objective = kind;
    cfg.l1_coef = 0.01;
    auto model = make_surrogate(small_mlp(), x, 11);
    Vector lambda = random_vector(set.count(), 12).cwiseAbs();
    const Vector analytic = grad_theta(*model, x, phi, lambda, set, cfg);
    CHECK(rel_error(analytic, numeric_grad(*model, x, phi, lambda, set, cfg)) < 1e-4);
  }
}

TEST_CASE("step size decays as (1+t)^zeta") {
  Matrix x = random_matrix(40, 2, 13);
  Vector phi = random_vector(40, 14);
  auto model = make_surrogate(small_mlp(), x, 15);
  auto set = build_constraint_set(0.3, no_overlap(40), {});
  GdaConfig cfg;
  cfg.eta = 0.2;
  cfg.zeta = 0.5;
  for (int t : {0, 3}) {
    auto m = model->clone();
    GdaState st = init_state(*m, x, set);
    st.t = t;
    const Vector theta0 = st.theta;
    const Vector grad = grad_theta(*m, x, phi, st.lambda, set, cfg);
    gda_step(st, cfg, *m, x, phi, set);
    const double gamma = t == 0 ? 1.0 : 2.0;
    CHECK(((theta0 - (cfg.eta / gamma) * grad) - st.theta).cwiseAbs().maxCoeff() < 1e-15);
    CHECK(st.t == t + 1);
  }
}

TEST_CASE("multiplier update is projected onto the nonnegative orthant") {
  Matrix x = random_matrix(20, 2, 16);
  auto model = make_surrogate(small_mlp(), x, 17);
  auto set = build_constraint_set(0.05, no_overlap(20), {});
  GdaConfig cfg;
  cfg.eta = 1.0;
  cfg.beta = 2.0;
  GdaState st = init_state(*model, x, set);
  st.lambda[0] = 0.0005;
  gda_step(st, cfg, *model, x, random_vector(20, 18), set);
  CHECK(st.lambda[0] == 0.0);
}

TEST_CASE("training invariants") {
  Matrix x = random_matrix(200, 3, 19);
  Vector phi = x.col(0) + 0.1 * random_vector(200, 20);
  OverlapScores h;
  h.h = random_vector(200, 21) - Vector::Constant(200, 1.5);
  h.alpha = 0.05;
  auto set = build_constraint_set(0.5, h, {});
  auto model = make_surrogate(small_mlp(), x, 22);
  GdaConfig cfg;
  cfg.eta = 0.1;
  cfg.t_max = 300;
  cfg.full_trace = true;
  GdaState st = init_state(*model, x, set);
  for (int t = 0; t < 300; ++t) {
    gda_step(st, cfg, *model, x, phi, set);
    REQUIRE(st.lambda.minCoeff() >= 0.0);
  }
  CHECK(st.trace.size() == 300);
  CHECK(st.trace.residuals.size() == 300);

  auto rep = run(x, phi, set, *model, cfg);
  const int explanations = int(rep.converged) + int(rep.collapsed) + int(rep.termination == Termination::MaxIterations);
  CHECK(explanations == 1);
  CHECK(rep.trace.size() == static_cast<std::size_t>(rep.iterations));
  CHECK(rep.feasible() == (!rep.collapsed && rep.violated_count() == 0));
  CHECK(rep.constraint_names.front() == "size");

  auto again = run(x, phi, set, *model, cfg);
  CHECK(again.to_json().dump() == rep.to_json().dump());
}

TEST_CASE("convergence stops early on a stationary problem") {
  Matrix x = random_matrix(50, 2, 23);
  auto model = make_surrogate(small_mlp(), x, 24);
  auto set = build_constraint_set(0.1, no_overlap(50), {});
  GdaConfig cfg;
  cfg.t_max = 2000;
  cfg.converge_window = 20;
  cfg.converge_rel_tol = 1e-3;
  // constant phi: f has zero gradient and no constraint is active
  auto rep = run(x, Vector::Constant(50, 0.4), set, *model, cfg);
  CHECK(rep.converged);
  CHECK(rep.termination == Termination::Converged);
  // the first step has no previous objective to compare against
  CHECK(rep.iterations == cfg.converge_window + 1);
}

TEST_CASE("collapse triggers seeded restarts and is reported") {
  Matrix x = random_matrix(100, 2, 25);
  auto model = make_surrogate(small_mlp(), x, 26);
  // unreachable ratio bound pushes every row out
  auto set = build_constraint_set(0.5, no_overlap(100), {ratio_at_most("r", Vector::Ones(100), 0.0)});
  GdaConfig cfg;
  cfg.eta = 5.0;
  cfg.max_restarts = 2;
  cfg.t_max = 3000;
  auto rep = run(x, random_vector(100, 27), set, *model, cfg);
  CHECK(rep.collapsed);
  CHECK(rep.termination == Termination::Collapsed);
  CHECK(rep.restarts == 2);
  CHECK(rep.restart_log.size() == 2);
  CHECK(rep.restart_log[0].seed != rep.restart_log[1].seed);
  CHECK_FALSE(rep.feasible());
  CHECK(rep.lambda.cwiseAbs().sum() == 0.0);
}

TEST_CASE("beta band validation") {
  GdaConfig cfg;
  cfg.beta = 0.5;
  CHECK_THROWS_AS(cfg.validate(0.5), Error);
  cfg.allow_beta_outside_band = true;
  CHECK(cfg.validate(0.5).size() == 1);
  cfg.beta = 1e-3;
  CHECK(cfg.validate(0.5).empty());
  cfg.collapse_xi = 0.6;
  CHECK_THROWS_AS(cfg.validate(0.5), Error);
  auto round = GdaConfig::from_json(GdaConfig{}.to_json());
  CHECK(round.to_json() == GdaConfig{}.to_json());
}

TEST_CASE("feasibility diagnostics scale with phi and xi") {
  Matrix x = random_matrix(300, 3, 28);
  Vector phi = random_vector(300, 29);
  auto model = make_surrogate(small_mlp(), x, 30);
  auto set = build_constraint_set(0.5, no_overlap(300), {});
  GdaConfig cfg;
  auto d = feasibility_diagnostics(*model, x, phi, set, cfg);
  CHECK(d.probe_rows == 256);
  CHECK(d.beta_bound > 0.0);
  auto scaled = feasibility_diagnostics(*model, x, 10.0 * phi, set, cfg);
  CHECK(scaled.beta_bound == doctest::Approx(d.beta_bound / 10.0).epsilon(1e-12));

  double previous = d.beta_bound;
  for (double xi : {1e-2, 1e-4, 1e-6}) {
    cfg.collapse_xi = xi;
    const double bound = feasibility_diagnostics(*model, x, phi, set, cfg).beta_bound;
    CHECK(bound < previous);
    previous = bound;
  }
  CHECK(previous < 1e-4 * d.beta_bound);
  CHECK(d.linear_bound(2.0) == doctest::Approx(d.xi / (2.0 * (1.0 + d.linear_slack))));
}
