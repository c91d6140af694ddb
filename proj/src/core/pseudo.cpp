#include "core/pseudo.hpp"

#include "core/error.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace cosub {

const char* to_string(Estimator e) { return e == Estimator::Iptw ? "iptw" : "aiptw"; }

Estimator parse_estimator(const std::string& tag) {
  if (tag == "aiptw") return Estimator::Aiptw;
  if (tag == "iptw") return Estimator::Iptw;
  fail(ErrorKind::Parameter, "unknown pseudo-outcome estimator '" + tag + "'");
}

namespace {

void check_inputs(const NuisanceEstimates& est, const Dataset& ds) {
  require(est.size() == ds.rows(), ErrorKind::Parameter, "nuisance estimates must align with dataset rows");
}

PseudoOutcomes finish(Vector phi, Estimator estimator) {
  for (Index i = 0; i < phi.size(); ++i) {
    if (!std::isfinite(phi[i])) {
      fail(ErrorKind::Numerical, "pseudo-outcome is not finite at row " + std::to_string(i + 1));
    }
  }
  PseudoOutcomes out;
  out.phi_max = phi.size() ? phi.cwiseAbs().maxCoeff() : 0.0;
  out.phi = std::move(phi);
  out.estimator = estimator;
  return out;
}

}  // namespace

PseudoOutcomes aiptw_phi(const NuisanceEstimates& est, const Dataset& ds) {
  check_inputs(est, ds);
  Vector phi(ds.rows());
  for (Index i = 0; i < ds.rows(); ++i) {
    const double e = est.e_hat[i];
    const double y = ds.outcome()[i];
    const double mu0 = est.mu0_hat[i];
    const double mu1 = est.mu1_hat[i];
    const int a = ds.treatment()[i];
    phi[i] = mu1 - mu0 + (a / e) * (y - mu1) - ((1 - a) / (1.0 - e)) * (y - mu0);
  }
  return finish(std::move(phi), Estimator::Aiptw);
}

PseudoOutcomes iptw_phi(const NuisanceEstimates& est, const Dataset& ds) {
  check_inputs(est, ds);
  Vector phi(ds.rows());
  for (Index i = 0; i < ds.rows(); ++i) {
    const double e = est.e_hat[i];
    const double y = ds.outcome()[i];
    const int a = ds.treatment()[i];
    phi[i] = (a / e) * y - ((1 - a) / (1.0 - e)) * y;
  }
  return finish(std::move(phi), Estimator::Iptw);
}

PseudoOutcomes compute_phi(Estimator estimator, const NuisanceEstimates& est, const Dataset& ds) {
  return estimator == Estimator::Iptw ? iptw_phi(est, ds) : aiptw_phi(est, ds);
}

double overlap_h(double e_hat, double alpha) {
  require(alpha >= 0.0 && alpha < 0.5, ErrorKind::Parameter, "alpha must lie in [0, 0.5)");
  if (alpha == 0.0) return -std::numeric_limits<double>::infinity();
  const double h = 1.0 - e_hat * (1.0 - e_hat) / (alpha * (1.0 - alpha));
  // Rounding near the band edges can flip the sign of h; keep it consistent with the band test.
  const bool inside = alpha <= e_hat && e_hat <= 1.0 - alpha;
  return inside ? std::min(h, 0.0) : std::max(h, std::numeric_limits<double>::epsilon());
}

OverlapScores overlap_h(const Vector& e_hat, double alpha) {
  require(alpha >= 0.0 && alpha < 0.5, ErrorKind::Parameter, "alpha must lie in [0, 0.5)");
  OverlapScores out;
  out.alpha = alpha;
  out.h = e_hat.unaryExpr([alpha](double e) { return overlap_h(e, alpha); });
  return out;
}

}  // namespace cosub
