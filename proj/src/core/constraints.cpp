#include "core/constraints.hpp"

#include "core/error.hpp"

#include <cmath>

namespace cosub {

const char* to_string(ConstraintKind k) {
  switch (k) {
    case ConstraintKind::Size: return "size";
    case ConstraintKind::Overlap: return "overlap";
    case ConstraintKind::Linear: return "linear";
    case ConstraintKind::Ratio: return "ratio";
  }
  return "size";
}

namespace {

ConstraintKind parse_kind(const std::string& tag) {
  if (tag == "linear") return ConstraintKind::Linear;
  if (tag == "ratio") return ConstraintKind::Ratio;
  fail(ErrorKind::Schema, "unknown extra constraint kind '" + tag + "'");
}

void check_column(const Vector& column, const std::string& name) {
  require(column.size() > 0, ErrorKind::Parameter, "constraint '" + name + "' has an empty column");
  require(column.allFinite(), ErrorKind::Parameter, "constraint '" + name + "' has non-finite coefficients");
}

}  // namespace

ExtraConstraint linear_at_most(const std::string& name, const Vector& column, double limit) {
  check_column(column, name);
  const double n = static_cast<double>(column.size());
  return {ConstraintKind::Linear, -limit / n, column / n, name};
}

ExtraConstraint linear_at_least(const std::string& name, const Vector& column, double limit) {
  check_column(column, name);
  const double n = static_cast<double>(column.size());
  return {ConstraintKind::Linear, limit / n, -column / n, name};
}

ExtraConstraint ratio_at_most(const std::string& name, const Vector& column, double limit) {
  check_column(column, name);
  return {ConstraintKind::Ratio, -limit, column, name};
}

ExtraConstraint ratio_at_least(const std::string& name, const Vector& column, double limit) {
  check_column(column, name);
  return {ConstraintKind::Ratio, limit, -column, name};
}

std::vector<ExtraConstraint> ratio_band(const std::string& name, const Vector& column, double center, double tol) {
  require(tol >= 0.0, ErrorKind::Parameter, "ratio band tolerance must be >= 0");
  return {ratio_at_most(name + "_upper", column, center + tol), ratio_at_least(name + "_lower", column, center - tol)};
}

bool ConstraintSet::has_ratio() const {
  for (const auto& e : extras_) {
    if (e.kind == ConstraintKind::Ratio) return true;
  }
  return false;
}

ConstraintKind ConstraintSet::kind(Index k) const {
  if (k == 0) return ConstraintKind::Size;
  if (k <= overlap_count()) return ConstraintKind::Overlap;
  return extras_.at(static_cast<std::size_t>(k - 1 - overlap_count())).kind;
}

std::string ConstraintSet::name(Index k) const {
  if (k == 0) return "size";
  if (k <= overlap_count()) return "overlap[" + std::to_string(overlap_rows_[static_cast<std::size_t>(k - 1)]) + "]";
  return extras_.at(static_cast<std::size_t>(k - 1 - overlap_count())).name;
}

ConstraintSet build_constraint_set(double size_c, const OverlapScores& h, std::vector<ExtraConstraint> extras) {
  require(size_c > 0.0 && size_c < 1.0, ErrorKind::Parameter, "size constraint c must lie in (0,1)");
  require(h.alpha >= 0.0 && h.alpha < 0.5, ErrorKind::Parameter, "overlap alpha must lie in [0, 0.5)");
  ConstraintSet set;
  set.n_ = h.h.size();
  require(set.n_ > 0, ErrorKind::Parameter, "constraint set needs at least one row");
  set.c_ = size_c;
  set.alpha_ = h.alpha;
  std::vector<double> kept;
  if (!h.disabled()) {
    for (Index i = 0; i < set.n_; ++i) {
      if (h.h[i] > 0.0) {
        set.overlap_rows_.push_back(i);
        kept.push_back(h.h[i]);
      }
    }
  }
  set.overlap_h_ = Eigen::Map<const Vector>(kept.data(), static_cast<Index>(kept.size()));
  for (const auto& e : extras) {
    require(e.kind == ConstraintKind::Linear || e.kind == ConstraintKind::Ratio, ErrorKind::Parameter,
            "extra constraints must be linear or ratio");
    require(e.b.size() == set.n_, ErrorKind::Parameter, "constraint '" + e.name + "' has the wrong length");
    if (e.kind == ConstraintKind::Linear) {
      require(std::abs(e.b.sum()) > 0.0, ErrorKind::Parameter,
              "linear constraint '" + e.name + "' has coefficients summing to zero; the feasibility bound needs a nonzero sum");
    }
  }
  set.extras_ = std::move(extras);
  return set;
}

GVector eval_g(const ConstraintSet& set, const Vector& s, double frozen_denominator) {
  require(s.size() == set.rows(), ErrorKind::Parameter, "selection vector length does not match the constraint set");
  GVector g;
  g.denominator = frozen_denominator;
  g.values.resize(set.count());
  const double n = static_cast<double>(set.rows());
  g.values[0] = set.size_c() - s.sum() / n;
  for (Index k = 0; k < set.overlap_count(); ++k) {
    g.values[1 + k] = s[set.overlap_rows()[static_cast<std::size_t>(k)]] * set.overlap_h()[k];
  }
  Index k = 1 + set.overlap_count();
  for (const auto& e : set.extras()) {
    if (e.kind == ConstraintKind::Linear) {
      g.values[k] = e.a + e.b.dot(s);
    } else {
      if (!(frozen_denominator > 0.0)) fail(ErrorKind::Numerical, "ratio constraint with a non-positive denominator");
      g.values[k] = e.a + e.b.dot(s) / frozen_denominator;
    }
    ++k;
  }
  return g;
}

void GVector::accumulate(const ConstraintSet& set, Index k, double scale, Vector& u) const {
  if (k == 0) {
    u.array() -= scale / static_cast<double>(set.rows());
    return;
  }
  if (k <= set.overlap_count()) {
    u[set.overlap_rows()[static_cast<std::size_t>(k - 1)]] += scale * set.overlap_h()[k - 1];
    return;
  }
  const auto& e = set.extras()[static_cast<std::size_t>(k - 1 - set.overlap_count())];
  if (e.kind == ConstraintKind::Linear) {
    u += scale * e.b;
  } else {
    u += (scale / denominator) * e.b;
  }
}

Vector GVector::coefficients(const ConstraintSet& set, Index k) const {
  Vector u = Vector::Zero(set.rows());
  accumulate(set, k, 1.0, u);
  return u;
}

json ConstraintSet::to_json() const {
  json extras = json::array();
  for (const auto& e : extras_) {
    extras.push_back({{"kind", cosub::to_string(e.kind)}, {"name", e.name}, {"a", e.a}, {"b", to_json_array(e.b)}});
  }
  return {{"rows", n_},
          {"size_c", c_},
          {"alpha", alpha_},
          {"overlap_rows", overlap_rows_},
          {"overlap_h", to_json_array(overlap_h_)},
          {"extras", extras}};
}

ConstraintSet ConstraintSet::from_json(const json& j) {
  ConstraintSet set;
  set.n_ = j.at("rows").get<Index>();
  set.c_ = j.at("size_c").get<double>();
  set.alpha_ = j.at("alpha").get<double>();
  set.overlap_rows_ = j.at("overlap_rows").get<std::vector<Index>>();
  set.overlap_h_ = vector_from_json(j.at("overlap_h"));
  require(static_cast<Index>(set.overlap_rows_.size()) == set.overlap_h_.size(), ErrorKind::Schema,
          "overlap rows and scores differ in length");
  for (const auto& e : j.at("extras")) {
    set.extras_.push_back({parse_kind(e.at("kind").get<std::string>()), e.at("a").get<double>(),
                           vector_from_json(e.at("b")), e.at("name").get<std::string>()});
  }
  return set;
}

}  // namespace cosub
