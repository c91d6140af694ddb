#pragma once

#include "core/data.hpp"
#include "core/nuisance.hpp"

#include <string>

namespace cosub {

enum class Estimator { Iptw, Aiptw };

const char* to_string(Estimator e);
Estimator parse_estimator(const std::string& tag);

struct PseudoOutcomes {
  Vector phi;
  Estimator estimator = Estimator::Aiptw;
  double phi_max = 0.0;  // max_i |phi_i|
};

PseudoOutcomes aiptw_phi(const NuisanceEstimates& est, const Dataset& ds);
PseudoOutcomes iptw_phi(const NuisanceEstimates& est, const Dataset& ds);
PseudoOutcomes compute_phi(Estimator estimator, const NuisanceEstimates& est, const Dataset& ds);

// Overlap surrogate h(x, alpha) = 1 - e(1-e) / (alpha(1-alpha)).
// h <= 0 exactly when alpha <= e <= 1 - alpha. alpha = 0 disables the
// constraint and every score is set to -infinity.
struct OverlapScores {
  Vector h;
  double alpha = 0.0;

  bool disabled() const { return alpha == 0.0; }
};

double overlap_h(double e_hat, double alpha);
OverlapScores overlap_h(const Vector& e_hat, double alpha);

}  // namespace cosub
