#include "core/gda.hpp"

#include "core/error.hpp"
#include "core/rng.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

namespace cosub {

const char* to_string(ObjectiveKind k) { return k == ObjectiveKind::Plain ? "plain" : "modified"; }

ObjectiveKind parse_objective(const std::string& tag) {
  if (tag == "modified") return ObjectiveKind::Modified;
  if (tag == "plain") return ObjectiveKind::Plain;
  fail(ErrorKind::Parameter, "unknown objective '" + tag + "'");
}

const char* to_string(Termination t) {
  switch (t) {
    case Termination::Converged: return "converged";
    case Termination::MaxIterations: return "max_iterations";
    case Termination::Collapsed: return "collapsed";
  }
  return "max_iterations";
}

std::vector<std::string> GdaConfig::validate(double c) const {
  require(eta > 0.0 && std::isfinite(eta), ErrorKind::Parameter, "eta must be > 0");
  require(zeta >= 0.0, ErrorKind::Parameter, "zeta must be >= 0");
  require(beta > 0.0 && std::isfinite(beta), ErrorKind::Parameter, "beta must be > 0");
  require(l1_coef >= 0.0, ErrorKind::Parameter, "l1_coef must be >= 0");
  require(t_max >= 1, ErrorKind::Parameter, "t_max must be >= 1");
  require(converge_window >= 1, ErrorKind::Parameter, "converge_window must be >= 1");
  require(converge_rel_tol >= 0.0, ErrorKind::Parameter, "converge_rel_tol must be >= 0");
  require(max_restarts >= 0, ErrorKind::Parameter, "max_restarts must be >= 0");
  require(delta > 0.0 && delta < 1.0, ErrorKind::Parameter, "delta must lie in (0,1)");
  const double x = xi(c);
  require(x > 0.0 && x < c, ErrorKind::Parameter, "collapse_xi must lie in (0, c)");
  std::vector<std::string> warnings;
  if (beta < kBetaBandLow || beta > kBetaBandHigh) {
    char buf[160];
    std::snprintf(buf, sizeof buf, "beta = %g lies outside the recommended band [%g, %g]", beta, kBetaBandLow,
                  kBetaBandHigh);
    require(allow_beta_outside_band, ErrorKind::Parameter,
            std::string(buf) + "; set allow_beta_outside_band to proceed");
    warnings.emplace_back(buf);
  }
  return warnings;
}

json GdaConfig::to_json() const {
  return {{"eta", eta},
          {"zeta", zeta},
          {"beta", beta},
          {"l1_coef", l1_coef},
          {"t_max", t_max},
          {"converge_window", converge_window},
          {"converge_rel_tol", converge_rel_tol},
          {"collapse_xi", collapse_xi},
          {"max_restarts", max_restarts},
          {"seed", seed},
          {"objective", cosub::to_string(objective)},
          {"allow_beta_outside_band", allow_beta_outside_band},
          {"delta", delta}};
}

GdaConfig GdaConfig::from_json(const json& j) { return from_json(j, GdaConfig{}); }

GdaConfig GdaConfig::from_json(const json& j, const GdaConfig& base) {
  GdaConfig c = base;
  c.eta = j.value("eta", c.eta);
  c.zeta = j.value("zeta", c.zeta);
  c.beta = j.value("beta", c.beta);
  c.l1_coef = j.value("l1_coef", c.l1_coef);
  c.t_max = j.value("t_max", c.t_max);
  c.converge_window = j.value("converge_window", c.converge_window);
  c.converge_rel_tol = j.value("converge_rel_tol", c.converge_rel_tol);
  c.collapse_xi = j.value("collapse_xi", c.collapse_xi);
  c.max_restarts = j.value("max_restarts", c.max_restarts);
  c.seed = j.value("seed", c.seed);
  if (j.contains("objective")) c.objective = parse_objective(j.at("objective").get<std::string>());
  c.allow_beta_outside_band = j.value("allow_beta_outside_band", c.allow_beta_outside_band);
  c.delta = j.value("delta", c.delta);
  return c;
}

SubgroupValue subgroup_functional(const Vector& s, const Vector& phi) {
  require(s.size() == phi.size(), ErrorKind::Parameter, "s and phi differ in length");
  const double total = s.sum();
  if (!(total > 0.0)) fail(ErrorKind::Collapse, "soft group size is zero");
  SubgroupValue out;
  out.f = s.dot(phi) / total;
  out.w = (phi.array() - out.f).matrix() / total;
  return out;
}

namespace {

double penalty(const Vector& lambda, const Vector& g, const GdaConfig& cfg) {
  if (cfg.objective == ObjectiveKind::Plain) return lambda.dot(g);
  double sum = 0.0;
  for (Index k = 0; k < g.size(); ++k) {
    if (g[k] > 0.0) sum += lambda[k] * g[k];
  }
  return sum - 0.5 * cfg.beta * lambda.squaredNorm();
}

ObjectiveValue objective_from(const Surrogate& model, const Vector& s, const Vector& phi, const Vector& lambda,
                              const ConstraintSet& set, const GdaConfig& cfg) {
  ObjectiveValue out;
  out.f = subgroup_functional(s, phi).f;
  out.group_size = s.mean();
  out.g = eval_g(set, s, s.sum());
  out.without_l1 = -out.f + penalty(lambda, out.g.values, cfg);
  out.value = out.without_l1 + (cfg.l1_coef > 0.0 ? l1_penalty(model, cfg.l1_coef).value : 0.0);
  return out;
}

double max_norm(const Vector& v) { return v.size() ? v.cwiseAbs().maxCoeff() : 0.0; }

}  // namespace

ObjectiveValue objective(const Surrogate& model, const Matrix& x, const Vector& phi, const Vector& lambda,
                         const ConstraintSet& set, const GdaConfig& cfg) {
  require(lambda.size() == set.count(), ErrorKind::Parameter, "lambda length does not match the constraint count");
  return objective_from(model, model.forward(x), phi, lambda, set, cfg);
}

Vector grad_lambda(const Vector& lambda, const Vector& g, double beta, ObjectiveKind kind) {
  require(lambda.size() == g.size(), ErrorKind::Parameter, "lambda and g differ in length");
  if (kind == ObjectiveKind::Plain) return g;
  return g.cwiseMax(0.0) - beta * lambda;
}

void Trace::clear() {
  f.clear();
  group_size.clear();
  objective.clear();
  objective_no_l1.clear();
  max_residual.clear();
  residuals.clear();
  lambdas.clear();
}

namespace {

void check_collapse(const Vector& s, const GdaConfig& cfg, const ConstraintSet& set, int t) {
  const double size = s.mean();
  if (!(size >= cfg.xi(set.size_c()))) {
    char buf[128];
    std::snprintf(buf, sizeof buf, "group size %.6g fell below xi = %.6g at iteration %d", size,
                  cfg.xi(set.size_c()), t);
    fail(ErrorKind::Collapse, buf);
  }
}

// Gradient over theta given s and its pass (no extra forward).
Vector theta_gradient(const Surrogate& model, const Matrix& x, const Vector& s, const SurrogatePass& pass,
                      const Vector& phi, const Vector& lambda, const ConstraintSet& set, const GdaConfig& cfg) {
  const SubgroupValue sf = subgroup_functional(s, phi);
  const GVector g = eval_g(set, s, s.sum());
  Vector u = -sf.w;
  for (Index k = 0; k < g.values.size(); ++k) {
    const bool open = cfg.objective == ObjectiveKind::Plain || g.values[k] > 0.0;
    if (open && lambda[k] != 0.0) g.accumulate(set, k, lambda[k], u);
  }
  Vector grad = model.backward_weighted(x, u, &pass);
  if (cfg.l1_coef > 0.0) grad += l1_penalty(model, cfg.l1_coef).gradient;
  return grad;
}

}  // namespace

Vector grad_theta(const Surrogate& model, const Matrix& x, const Vector& phi, const Vector& lambda,
                  const ConstraintSet& set, const GdaConfig& cfg) {
  require(lambda.size() == set.count(), ErrorKind::Parameter, "lambda length does not match the constraint count");
  std::unique_ptr<SurrogatePass> pass;
  const Vector s = model.forward(x, Routing::Soft, &pass);
  return theta_gradient(model, x, s, *pass, phi, lambda, set, cfg);
}

GdaState init_state(const Surrogate& model, const Matrix& x, const ConstraintSet& set) {
  require(x.rows() == set.rows(), ErrorKind::Parameter, "design rows do not match the constraint set");
  GdaState st;
  st.theta = model.params();
  st.lambda = Vector::Zero(set.count());
  st.s = model.forward(x, Routing::Soft, &st.pass);
  return st;
}

void gda_step(GdaState& st, const GdaConfig& cfg, Surrogate& model, const Matrix& x, const Vector& phi,
              const ConstraintSet& set) {
  check_collapse(st.s, cfg, set, st.t);
  const double gamma = std::pow(1.0 + st.t, cfg.zeta);
  const Vector grad = theta_gradient(model, x, st.s, *st.pass, phi, st.lambda, set, cfg);
  Vector next = st.theta - (cfg.eta / gamma) * grad;
  if (!next.allFinite()) fail(ErrorKind::Numerical, "non-finite parameter update at iteration " + std::to_string(st.t));
  model.set_params(next);
  st.theta = std::move(next);
  st.s = model.forward(x, Routing::Soft, &st.pass);
  check_collapse(st.s, cfg, set, st.t + 1);

  const GVector g = eval_g(set, st.s, st.s.sum());
  st.lambda = (st.lambda + cfg.eta * grad_lambda(st.lambda, g.values, cfg.beta, cfg.objective)).cwiseMax(0.0);
  if (!st.lambda.allFinite()) fail(ErrorKind::Numerical, "non-finite multiplier update at iteration " + std::to_string(st.t));
  ++st.t;

  const double f = subgroup_functional(st.s, phi).f;
  const double pen = penalty(st.lambda, g.values, cfg);
  const double l1 = cfg.l1_coef > 0.0 ? l1_penalty(model, cfg.l1_coef).value : 0.0;
  st.trace.f.push_back(f);
  st.trace.group_size.push_back(st.s.mean());
  st.trace.objective_no_l1.push_back(-f + pen);
  st.trace.objective.push_back(-f + pen + l1);
  st.trace.max_residual.push_back(g.values.maxCoeff());
  if (cfg.full_trace) {
    st.trace.residuals.push_back(g.values);
    st.trace.lambdas.push_back(st.lambda);
  }
}

double FeasibilityDiagnostics::linear_bound(double coefficient_sum) const {
  const double b = std::abs(coefficient_sum);
  if (b == 0.0) return std::numeric_limits<double>::infinity();
  return xi / (b * (1.0 + linear_slack));
}

json FeasibilityDiagnostics::to_json() const {
  return {{"phi_max", phi_max},         {"lipschitz_est", lipschitz_est},
          {"mu_delta_est", mu_delta_est}, {"coordinate", coordinate},
          {"xi", xi},                   {"beta_bound", beta_bound},
          {"delta", delta},             {"linear_slack", linear_slack},
          {"probe_rows", probe_rows},   {"beta_exceeds_bound", beta_exceeds_bound}};
}

FeasibilityDiagnostics feasibility_diagnostics(const Surrogate& model, const Matrix& x, const Vector& phi,
                                               const ConstraintSet& set, const GdaConfig& cfg) {
  FeasibilityDiagnostics d;
  d.phi_max = phi.size() ? phi.cwiseAbs().maxCoeff() : 0.0;
  d.xi = cfg.xi(set.size_c());
  d.delta = cfg.delta;
  d.probe_rows = std::min<Index>(256, x.rows());
  const Matrix probe = x.topRows(d.probe_rows);
  std::unique_ptr<SurrogatePass> pass;
  model.forward(probe, Routing::Soft, &pass);
  const Index p = model.num_params();
  Vector max_abs = Vector::Zero(p);
  Vector mean = Vector::Zero(p);
  Vector unit = Vector::Zero(d.probe_rows);
  for (Index i = 0; i < d.probe_rows; ++i) {
    unit[i] = 1.0;
    const Vector row = model.backward_weighted(probe, unit, pass.get());
    unit[i] = 0.0;
    max_abs = max_abs.cwiseMax(row.cwiseAbs());
    mean += row;
  }
  mean /= static_cast<double>(d.probe_rows);
  double best = -1.0;
  for (Index j = 0; j < p; ++j) {
    if (max_abs[j] <= 0.0) continue;
    const double ratio = std::abs(mean[j]) / max_abs[j];
    if (ratio > best) {
      best = ratio;
      d.coordinate = j;
    }
  }
  if (d.coordinate >= 0) {
    d.lipschitz_est = max_abs[d.coordinate];
    d.mu_delta_est = mean[d.coordinate];
  }
  const double c = set.size_c();
  if (d.phi_max > 0.0 && d.lipschitz_est > 0.0) {
    d.beta_bound = d.xi * (c - d.xi) * std::abs(d.mu_delta_est) / (2.0 * d.phi_max * d.lipschitz_est);
  } else {
    d.beta_bound = std::numeric_limits<double>::infinity();
  }
  if (std::abs(d.mu_delta_est) > 0.0) {
    d.linear_slack = d.lipschitz_est / (std::abs(d.mu_delta_est) * std::sqrt(static_cast<double>(x.rows()))) *
                     std::sqrt(std::log(2.0 / d.delta));
  } else {
    d.linear_slack = std::numeric_limits<double>::infinity();
  }
  d.beta_exceeds_bound = cfg.beta > d.beta_bound;
  return d;
}

bool TrainReport::feasible() const { return !collapsed && violated_count() == 0; }

Index TrainReport::violated_count() const {
  return static_cast<Index>(std::count(feasible_flags.begin(), feasible_flags.end(), false));
}

json TrainReport::summary_json() const {
  json flags = json::array();
  for (std::size_t k = 0; k < feasible_flags.size(); ++k) {
    flags.push_back({{"name", constraint_names[k]},
                     {"residual", residuals[static_cast<Index>(k)]},
                     {"tolerance", tolerances[k]},
                     {"lambda", lambda[static_cast<Index>(k)]},
                     {"feasible", static_cast<bool>(feasible_flags[k])}});
  }
  json restarts_j = json::array();
  for (const auto& r : restart_log) {
    restarts_j.push_back(
        {{"restart", r.restart}, {"iteration", r.iteration}, {"group_size", r.group_size}, {"seed", r.seed}});
  }
  return {{"termination", cosub::to_string(termination)},
          {"converged", converged},
          {"collapsed", collapsed},
          {"feasible", feasible()},
          {"restarts", restarts},
          {"iterations", iterations},
          {"final_f", final_f},
          {"final_group_size", final_group_size},
          {"final_objective", final_objective},
          {"constraint_count", static_cast<Index>(feasible_flags.size())},
          {"violated_count", violated_count()},
          {"constraints", flags},
          {"diagnostics", diagnostics.to_json()},
          {"restart_log", restarts_j},
          {"warnings", warnings}};
}

json TrainReport::to_json() const {
  json j = summary_json();
  if (model) j["surrogate"] = model->to_json();
  j["trace"] = {{"f", trace.f},
                {"group_size", trace.group_size},
                {"objective", trace.objective},
                {"objective_no_l1", trace.objective_no_l1},
                {"max_residual", trace.max_residual}};
  return j;
}

namespace {

struct Attempt {
  std::unique_ptr<Surrogate> model;
  GdaState state;
  bool converged = false;
  bool collapsed = false;
};

Attempt attempt_run(std::unique_ptr<Surrogate> model, const Matrix& x, const Vector& phi, const ConstraintSet& set,
                    const GdaConfig& cfg) {
  Attempt a;
  a.state = init_state(*model, x, set);
  int quiet = 0;
  double prev_obj = std::numeric_limits<double>::quiet_NaN();
  while (a.state.t < cfg.t_max) {
    const Vector prev_theta = a.state.theta;
    try {
      gda_step(a.state, cfg, *model, x, phi, set);
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::Collapse) throw;
      a.collapsed = true;
      break;
    }
    const double obj = a.state.trace.objective.back();
    const double dtheta = max_norm(a.state.theta - prev_theta) / std::max(1.0, max_norm(prev_theta));
    const double dobj = std::isnan(prev_obj) ? std::numeric_limits<double>::infinity()
                                             : std::abs(obj - prev_obj) / std::max(1.0, std::abs(prev_obj));
    prev_obj = obj;
    quiet = (dtheta < cfg.converge_rel_tol && dobj < cfg.converge_rel_tol) ? quiet + 1 : 0;
    if (quiet >= cfg.converge_window) {
      a.converged = true;
      break;
    }
  }
  a.model = std::move(model);
  return a;
}

}  // namespace

TrainReport run(const Matrix& x, const Vector& phi, const ConstraintSet& set, const Surrogate& model_init,
                const GdaConfig& cfg) {
  require(x.rows() == phi.size(), ErrorKind::Parameter, "phi length does not match the design rows");
  require(model_init.inputs() == x.cols(), ErrorKind::Parameter, "surrogate input dimension does not match the data");
  TrainReport rep;
  rep.warnings = cfg.validate(set.size_c());

  Attempt last;
  for (int attempt = 0; attempt <= cfg.max_restarts; ++attempt) {
    auto model = model_init.clone();
    if (attempt > 0) model->reinitialize(rep.restart_log.back().seed, x);
    last = attempt_run(std::move(model), x, phi, set, cfg);
    if (!last.collapsed) break;
    RestartEvent ev;
    ev.restart = attempt + 1;
    ev.iteration = last.state.t;
    ev.group_size = last.state.s.mean();
    ev.seed = derive_seed(cfg.seed, Stream::Restart, static_cast<std::uint64_t>(attempt + 1));
    rep.restart_log.push_back(ev);
  }
  const bool done = !last.collapsed;
  rep.converged = last.converged;
  rep.collapsed = last.collapsed;
  rep.termination =
      last.collapsed ? Termination::Collapsed : (last.converged ? Termination::Converged : Termination::MaxIterations);
  rep.iterations = last.state.t;
  rep.trace = std::move(last.state.trace);
  // the final collapse is not followed by a restart
  rep.restarts = static_cast<int>(rep.restart_log.size()) - (last.collapsed ? 1 : 0);
  if (last.collapsed) rep.restart_log.pop_back();

  GdaState& last_state = last.state;
  rep.model = std::move(last.model);
  const Vector s = rep.model->forward(x);
  rep.lambda = done ? last_state.lambda : Vector::Zero(set.count());
  rep.final_group_size = s.mean();
  rep.diagnostics = feasibility_diagnostics(*rep.model, x, phi, set, cfg);
  if (rep.diagnostics.beta_exceeds_bound) {
    char buf[200];
    std::snprintf(buf, sizeof buf,
                  "beta = %g exceeds the collapse bound %.3g for this problem (recommended band [%g, %g])",
                  cfg.beta, rep.diagnostics.beta_bound, kBetaBandLow, kBetaBandHigh);
    rep.warnings.emplace_back(buf);
  }
  const double total = s.sum();
  if (total > 0.0) {
    const GVector g = eval_g(set, s, total);
    rep.residuals = g.values;
    rep.final_f = subgroup_functional(s, phi).f;
    rep.final_objective = -rep.final_f + penalty(rep.lambda, g.values, cfg);
    for (Index k = 0; k < set.count(); ++k) {
      const double tol = k == 0 ? rep.diagnostics.xi : rep.diagnostics.linear_bound(g.coefficients(set, k).sum());
      rep.tolerances.push_back(tol);
      rep.feasible_flags.push_back(g.values[k] <= tol);
      rep.constraint_names.push_back(set.name(k));
    }
  } else {
    rep.residuals = Vector::Constant(set.count(), std::numeric_limits<double>::quiet_NaN());
    for (Index k = 0; k < set.count(); ++k) {
      rep.tolerances.push_back(0.0);
      rep.feasible_flags.push_back(false);
      rep.constraint_names.push_back(set.name(k));
    }
  }
  return rep;
}

void write_trace_csv(const TrainReport& report, const ConstraintSet& set, const std::string& path) {
  std::ofstream out(path);
  if (!out) fail(ErrorKind::Io, "cannot open trace file '" + path + "'");
  const auto& tr = report.trace;
  const bool full = tr.residuals.size() == tr.size() && tr.size() > 0;
  out << "iteration,f,group_size,objective,objective_no_l1,max_residual";
  if (full) {
    for (Index k = 0; k < set.count(); ++k) out << ",g:" << set.name(k);
    for (Index k = 0; k < set.count(); ++k) out << ",lambda:" << set.name(k);
  }
  out << '\n';
  for (std::size_t t = 0; t < tr.size(); ++t) {
    out << t + 1 << ',' << format_real(tr.f[t]) << ',' << format_real(tr.group_size[t]) << ','
        << format_real(tr.objective[t]) << ',' << format_real(tr.objective_no_l1[t]) << ','
        << format_real(tr.max_residual[t]);
    if (full) {
      for (Index k = 0; k < set.count(); ++k) out << ',' << format_real(tr.residuals[t][k]);
      for (Index k = 0; k < set.count(); ++k) out << ',' << format_real(tr.lambdas[t][k]);
    }
    out << '\n';
  }
  if (!out) fail(ErrorKind::Io, "failed writing trace file '" + path + "'");
}

}  // namespace cosub
