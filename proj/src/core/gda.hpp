#pragma once

#include "core/constraints.hpp"
#include "core/data.hpp"
#include "core/json_eigen.hpp"
#include "core/surrogate.hpp"

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

namespace cosub {

// Modified: -f + lambda' relu(g) - beta/2 |lambda|^2 + l1.
// Plain:    -f + lambda' g + l1 (kept for stability comparisons).
enum class ObjectiveKind { Modified, Plain };

const char* to_string(ObjectiveKind k);
ObjectiveKind parse_objective(const std::string& tag);

inline constexpr double kBetaBandLow = 1e-5;
inline constexpr double kBetaBandHigh = 1e-2;

struct GdaConfig {
  double eta = 1.0;
  double zeta = 0.5;
  double beta = 1e-4;
  double l1_coef = 0.0;
  int t_max = 5000;
  int converge_window = 200;
  double converge_rel_tol = 1e-5;
  // 0 selects 0.05 * c.
  double collapse_xi = 0.0;
  int max_restarts = 3;
  std::uint64_t seed = 0;
  ObjectiveKind objective = ObjectiveKind::Modified;
  // Accept beta outside [kBetaBandLow, kBetaBandHigh] with a warning instead of an error.
  bool allow_beta_outside_band = false;
  double delta = 0.05;
  // Keep per-iteration residual and multiplier vectors (needed for trace CSV).
  bool full_trace = false;

  double xi(double c) const { return collapse_xi > 0.0 ? collapse_xi : 0.05 * c; }
  // Throws Parameter on invalid values; returns warnings otherwise.
  std::vector<std::string> validate(double c) const;
  json to_json() const;
  static GdaConfig from_json(const json& j);
  static GdaConfig from_json(const json& j, const GdaConfig& base);
};

struct SubgroupValue {
  double f = 0.0;
  Vector w;  // df/ds_i = (phi_i - f) / sum(s)
};

// Throws Collapse when sum(s) <= 0.
SubgroupValue subgroup_functional(const Vector& s, const Vector& phi);

struct ObjectiveValue {
  double value = 0.0;
  double without_l1 = 0.0;
  double f = 0.0;
  double group_size = 0.0;
  GVector g;
};

ObjectiveValue objective(const Surrogate& model, const Matrix& x, const Vector& phi, const Vector& lambda,
                         const ConstraintSet& set, const GdaConfig& cfg);

// max(g, 0) - beta lambda (modified) or g (plain).
Vector grad_lambda(const Vector& lambda, const Vector& g, double beta, ObjectiveKind kind = ObjectiveKind::Modified);

// Gradient of the objective over theta at the model's current parameters.
Vector grad_theta(const Surrogate& model, const Matrix& x, const Vector& phi, const Vector& lambda,
                  const ConstraintSet& set, const GdaConfig& cfg);

struct Trace {
  std::vector<double> f;
  std::vector<double> group_size;
  std::vector<double> objective;
  std::vector<double> objective_no_l1;
  std::vector<double> max_residual;
  std::vector<Vector> residuals;  // full_trace only
  std::vector<Vector> lambdas;    // full_trace only

  std::size_t size() const { return f.size(); }
  void clear();
};

struct GdaState {
  Vector theta;
  Vector lambda;
  int t = 0;
  Trace trace;
  // forward pass at theta, refreshed by gda_step
  Vector s;
  std::unique_ptr<SurrogatePass> pass;
};

// Fresh state for `model`: lambda = 0, t = 0, forward pass cached.
GdaState init_state(const Surrogate& model, const Matrix& x, const ConstraintSet& set);

// One iteration: theta step with rate eta / (1+t)^zeta at the current lambda,
// then the lambda ascent step evaluated at the new theta. Throws Collapse when
// mean(s) drops below xi and Numerical on a non-finite update.
void gda_step(GdaState& state, const GdaConfig& cfg, Surrogate& model, const Matrix& x, const Vector& phi,
              const ConstraintSet& set);

struct FeasibilityDiagnostics {
  double phi_max = 0.0;
  double lipschitz_est = 0.0;
  double mu_delta_est = 0.0;
  Index coordinate = -1;
  double xi = 0.0;
  double beta_bound = 0.0;
  double delta = 0.05;
  // L / (|mu| sqrt(n)) * sqrt(log(2/delta)); linear bound = xi / (|sum b| (1 + this))
  double linear_slack = 0.0;
  Index probe_rows = 0;
  bool beta_exceeds_bound = false;

  double linear_bound(double coefficient_sum) const;
  json to_json() const;
};

FeasibilityDiagnostics feasibility_diagnostics(const Surrogate& model, const Matrix& x, const Vector& phi,
                                               const ConstraintSet& set, const GdaConfig& cfg);

enum class Termination { Converged, MaxIterations, Collapsed };
const char* to_string(Termination t);

struct RestartEvent {
  int restart = 0;
  int iteration = 0;
  double group_size = 0.0;
  std::uint64_t seed = 0;
};

struct TrainReport {
  std::unique_ptr<Surrogate> model;
  Vector lambda;
  Vector residuals;
  std::vector<double> tolerances;
  std::vector<bool> feasible_flags;
  std::vector<std::string> constraint_names;
  bool converged = false;
  bool collapsed = false;
  Termination termination = Termination::MaxIterations;
  int restarts = 0;
  int iterations = 0;
  double final_f = 0.0;
  double final_group_size = 0.0;
  double final_objective = 0.0;
  FeasibilityDiagnostics diagnostics;
  std::vector<RestartEvent> restart_log;
  std::vector<std::string> warnings;
  Trace trace;

  // Every constraint within tolerance and no collapse.
  bool feasible() const;
  Index violated_count() const;
  // Summary without traces or parameters.
  json summary_json() const;
  json to_json() const;
};

// Iterates until convergence, t_max or collapse; a collapse reinitializes the
// model with a derived seed up to max_restarts times.
TrainReport run(const Matrix& x, const Vector& phi, const ConstraintSet& set, const Surrogate& model_init,
                const GdaConfig& cfg);

void write_trace_csv(const TrainReport& report, const ConstraintSet& set, const std::string& path);

}  // namespace cosub
