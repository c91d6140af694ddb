#pragma once

#include "core/data.hpp"

#include <cstdint>
#include <string>

namespace cosub {

enum class DgpVariant { Continuous, BinarySubgroup, Null };
enum class RiskForm { OuterOffset, InnerOffset };

const char* to_string(DgpVariant v);
DgpVariant parse_variant(const std::string& tag);

// Parameters of the synthetic data-generating process. Defaults are the
// high-confounding scenario (omega_tilde = 5) with p = 10.
struct DgpConfig {
  int p = 10;
  double sigma_x = 0.1;
  double sigma_y = 0.1;
  double rho = 0.3;
  Vector beta1;      // defaults to e5 * 2
  Vector beta_tau;   // defaults to (0.5, 0.5, 0.5, 0.5, 0, ...)
  double omega_tilde = 5.0;
  Vector omega_base;  // defaults to (0, -1, -1, 1, 1, -2, 0, 0, 0, 0)
  Index n = 5000;
  DgpVariant variant = DgpVariant::Continuous;
  // Attach risk/cost/sensitive columns (needs p >= 10).
  bool constraint_aux = true;
  // The aux formulas are evaluated on covariates divided by this scale.
  // 0 means "use sigma_x" (unit-variance covariates).
  double aux_scale = 0.0;
  RiskForm risk_form = RiskForm::OuterOffset;

  static DgpConfig defaults();
  // Fills unset vectors with the defaults for p and validates ranges.
  DgpConfig resolved() const;
  Vector omega() const { return omega_tilde * omega_base; }
};

Matrix sample_covariates(const DgpConfig& cfg, std::uint64_t seed);

struct TreatmentDraw {
  Eigen::VectorXi treatment;
  Vector propensity;
};

TreatmentDraw assign_treatment(const Matrix& x, const Vector& omega, std::uint64_t seed);

struct OutcomeDraw {
  Vector outcome;
  Vector true_ite;
  Vector y0;
  Vector y1;
  Vector true_label;  // set only for the binary-subgroup variant
};

OutcomeDraw gen_outcomes(const Matrix& x, const Eigen::VectorXi& treatment, const DgpConfig& cfg,
                         std::uint64_t seed);

// Per-row risk = 1/(1+exp(10 x10 + 1)) (OuterOffset) or 1/(1+exp(10 (x10 + 1))) (InnerOffset), cost = (x3 + 5)/5, sensitive = 1(x3 > 0.5);
// covariate indices are 1-based.
struct ConstraintAux {
  Vector risk;
  Vector cost;
  Vector sensitive;
};

ConstraintAux attach_constraint_aux(const Matrix& x, RiskForm form = RiskForm::OuterOffset);

// Full dataset with aux columns true_ite (+ true_label, risk, cost, sensitive
// when applicable) and the true propensity under "true_propensity".
Dataset generate_dataset(const DgpConfig& cfg, std::uint64_t seed);

}  // namespace cosub
