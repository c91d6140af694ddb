#pragma once

#include "core/data.hpp"
#include "core/json_eigen.hpp"
#include "core/pseudo.hpp"

#include <string>
#include <vector>

namespace cosub {

enum class ConstraintKind { Size, Overlap, Linear, Ratio };

const char* to_string(ConstraintKind k);

// Linear:  a + sum_i b_i s_i <= 0
// Ratio:   a + sum_i b_i s_i / sum_i s_i <= 0
struct ExtraConstraint {
  ConstraintKind kind = ConstraintKind::Linear;
  double a = 0.0;
  Vector b;
  std::string name;
};

// Convenience builders. Linear forms are divided by n so residuals are
// per-sample averages.
ExtraConstraint linear_at_most(const std::string& name, const Vector& column, double limit);
ExtraConstraint linear_at_least(const std::string& name, const Vector& column, double limit);
ExtraConstraint ratio_at_most(const std::string& name, const Vector& column, double limit);
ExtraConstraint ratio_at_least(const std::string& name, const Vector& column, double limit);
// |ratio - center| <= tol as an upper and a lower ratio constraint.
std::vector<ExtraConstraint> ratio_band(const std::string& name, const Vector& column, double center, double tol);

// Constraint order: [size, overlap rows (ascending), extras...].
class ConstraintSet {
 public:
  ConstraintSet() = default;

  Index rows() const { return n_; }
  double size_c() const { return c_; }
  double alpha() const { return alpha_; }
  Index count() const { return 1 + overlap_count() + static_cast<Index>(extras_.size()); }
  Index overlap_count() const { return static_cast<Index>(overlap_rows_.size()); }
  const std::vector<Index>& overlap_rows() const { return overlap_rows_; }
  const Vector& overlap_h() const { return overlap_h_; }
  const std::vector<ExtraConstraint>& extras() const { return extras_; }
  bool has_ratio() const;

  ConstraintKind kind(Index k) const;
  std::string name(Index k) const;

  json to_json() const;
  static ConstraintSet from_json(const json& j);

  friend ConstraintSet build_constraint_set(double, const OverlapScores&, std::vector<ExtraConstraint>);

 private:
  Index n_ = 0;
  double c_ = 0.5;
  double alpha_ = 0.0;
  std::vector<Index> overlap_rows_;
  Vector overlap_h_;
  std::vector<ExtraConstraint> extras_;
};

// One overlap constraint per row with h_i > 0; rows with h_i <= 0 hold for
// every s in (0,1) and are dropped.
ConstraintSet build_constraint_set(double size_c, const OverlapScores& h, std::vector<ExtraConstraint> extras);

struct GVector {
  Vector values;
  double denominator = 0.0;  // sum of s used for the ratio coefficients

  // u += scale * dg_k/ds
  void accumulate(const ConstraintSet& set, Index k, double scale, Vector& u) const;
  Vector coefficients(const ConstraintSet& set, Index k) const;
};

// frozen_denominator must equal sum(s) at the current iterate; it scales the
// ratio residuals and is held constant in their coefficients.
GVector eval_g(const ConstraintSet& set, const Vector& s, double frozen_denominator);
inline GVector eval_g(const ConstraintSet& set, const Vector& s) { return eval_g(set, s, s.sum()); }

}  // namespace cosub
