#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace cosub {

using Index = Eigen::Index;
using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

// Auxiliary column names understood by the rest of the pipeline.
namespace aux {
inline constexpr const char* kTrueIte = "true_ite";
inline constexpr const char* kTrueLabel = "true_label";
inline constexpr const char* kRisk = "risk";
inline constexpr const char* kCost = "cost";
inline constexpr const char* kSensitive = "sensitive";
}  // namespace aux

// Observational sample: covariates X (n x d), binary treatment A, outcome Y and
// optional named auxiliary columns of length n. Immutable once built.
class Dataset {
 public:
  Dataset() = default;
  Dataset(Matrix features, Eigen::VectorXi treatment, Vector outcome,
          std::vector<std::string> feature_names = {});

  Index rows() const { return features_.rows(); }
  Index cols() const { return features_.cols(); }

  const Matrix& features() const { return features_; }
  const Eigen::VectorXi& treatment() const { return treatment_; }
  const Vector& outcome() const { return outcome_; }
  const std::vector<std::string>& feature_names() const { return feature_names_; }

  const std::map<std::string, Vector>& aux() const { return aux_; }
  bool has_aux(const std::string& name) const { return aux_.count(name) > 0; }
  const Vector& aux(const std::string& name) const;
  std::optional<Vector> find_aux(const std::string& name) const;

  // Returns a copy with the column attached (or replaced).
  Dataset with_aux(const std::string& name, Vector column) const;

  Index treated_count() const { return treatment_.sum(); }
  Index control_count() const { return rows() - treated_count(); }

  // Throws Fit if either arm is empty.
  void require_both_arms(const char* what) const;

  Dataset subset(const std::vector<Index>& rows) const;

 private:
  void validate() const;

  Matrix features_;
  Eigen::VectorXi treatment_;
  Vector outcome_;
  std::vector<std::string> feature_names_;
  std::map<std::string, Vector> aux_;
};

// Column mapping for CSV ingestion. When `features` is empty every header
// column named x<k> (k = 1, 2, ...) is taken, ordered by k.
struct CsvSchema {
  std::vector<std::string> features;
  std::string treatment = "a";
  std::string outcome = "y";
  // aux name -> column name in the file
  std::map<std::string, std::string> aux;
  char delimiter = ',';
};

Dataset load_csv(const std::string& path, const CsvSchema& schema = {});

// Writes x1..xd (or the stored feature names), a, y, then aux columns in name
// order, with 17 significant digits.
void write_csv(const Dataset& ds, const std::string& path, char delimiter = ',');

struct SplitIndices {
  std::vector<Index> train;
  std::vector<Index> test;
};

SplitIndices split_indices(Index n, double test_fraction, std::uint64_t seed);

std::pair<Dataset, Dataset> train_test_split(const Dataset& ds, double test_fraction,
                                             std::uint64_t seed);

std::vector<SplitIndices> kfold_indices(Index n, Index k, std::uint64_t seed);

// Formats a real with 17 significant digits (round-trip safe).
std::string format_real(double value);

}  // namespace cosub
