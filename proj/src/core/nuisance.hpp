#pragma once

#include "core/data.hpp"
#include "core/dense_net.hpp"
#include "core/json_eigen.hpp"

#include <cstdint>
#include <vector>

namespace cosub {

using RowMask = std::vector<bool>;

// Per-feature (mean, scale) pairs computed on the fitting data.
struct Standardizer {
  Vector mean;
  Vector scale;

  static Standardizer fit(const Matrix& x);
  static Standardizer identity(Index d);
  Matrix apply(const Matrix& x) const;
  Index dims() const { return mean.size(); }
  json to_json() const;
  static Standardizer from_json(const json& j);
};

inline constexpr double kPropensityClip = 1e-3;

struct PropensityModel {
  Vector weights;  // on standardized features
  double bias = 0.0;
  Standardizer scaler;
  bool converged = false;
  int iterations = 0;
  double final_grad_norm = 0.0;

  // logistic(z w + b) without clipping
  Vector predict_raw(const Matrix& x) const;
  json to_json() const;
  static PropensityModel from_json(const json& j);
};

// Penalized mean negative log-likelihood (1/n) sum[log(1+e^eta) - a eta] + l2/2 |w|^2
// on already-standardized features. `grad` (optional) receives (dw, db).
double propensity_loss(const Vector& weights, double bias, const Matrix& z, const Eigen::VectorXi& a,
                       double l2, Vector* grad);

// Full-batch gradient descent with step 1/L, L the smoothness constant.
PropensityModel fit_propensity(const Dataset& ds, double l2 = 1e-3, int max_iters = 5000, double tol = 1e-6);

enum class OutcomeLink { Identity, Logistic };

struct OutcomeFitOptions {
  int hidden_size = 50;
  int epochs = 150;
  double lr = 2e-3;
  int batch_size = 64;
  std::uint64_t seed = 0;
  // "auto" picks Logistic when every outcome is 0/1.
  bool auto_link = true;
  OutcomeLink link = OutcomeLink::Identity;
};

struct ArmNet {
  DenseNet net;
  double y_mean = 0.0;
  double y_scale = 1.0;
};

// One network per arm sharing the same architecture and input standardization.
struct OutcomeModel {
  Standardizer scaler;
  OutcomeLink link = OutcomeLink::Identity;
  ArmNet arms[2];

  Vector predict(int arm, const Matrix& x) const;
  json to_json() const;
  static OutcomeModel from_json(const json& j);
};

// Mean loss of one arm network on standardized inputs/targets: half squared
// error (Identity) or binary cross-entropy on logits (Logistic).
double outcome_loss(const DenseNet& net, const Matrix& z, const Vector& target, OutcomeLink link,
                    Vector* grad);

OutcomeModel fit_outcome(const Dataset& ds, const OutcomeFitOptions& options);

struct NuisanceEstimates {
  Vector e_hat;
  Vector mu0_hat;
  Vector mu1_hat;
  double clip = kPropensityClip;

  Index size() const { return e_hat.size(); }
  NuisanceEstimates subset(const std::vector<Index>& rows) const;
};

Vector clip_propensity(const Vector& e, double clip = kPropensityClip);

NuisanceEstimates predict_nuisance(const PropensityModel& pm, const OutcomeModel& om, const Matrix& x,
                                   double clip = kPropensityClip);

struct BalanceResult {
  int count = 0;
  Vector smd;
};

inline constexpr double kSmdThreshold = 0.2;

// IPTW-weighted standardized mean differences on the selected rows; features
// whose weighted variance is zero in both arms get SMD 0.
BalanceResult count_unbalanced(const Dataset& ds, const Vector& e_hat, const RowMask& selection);

}  // namespace cosub
