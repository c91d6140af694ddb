#include "core/data.hpp"

#include "core/error.hpp"
#include "core/rng.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>

namespace cosub {

Dataset::Dataset(Matrix features, Eigen::VectorXi treatment, Vector outcome,
                 std::vector<std::string> feature_names)
    : features_(std::move(features)),
      treatment_(std::move(treatment)),
      outcome_(std::move(outcome)),
      feature_names_(std::move(feature_names)) {
  if (feature_names_.empty()) {
    for (Index j = 0; j < features_.cols(); ++j) feature_names_.push_back("x" + std::to_string(j + 1));
  }
  validate();
}

void Dataset::validate() const {
  require(features_.rows() >= 1 && features_.cols() >= 1, ErrorKind::Parameter,
          "dataset needs n >= 1 and d >= 1");
  require(treatment_.size() == features_.rows() && outcome_.size() == features_.rows(),
          ErrorKind::Parameter, "treatment/outcome length must equal the number of rows");
  require(static_cast<Index>(feature_names_.size()) == features_.cols(), ErrorKind::Parameter,
          "feature name count must equal the number of feature columns");
  for (Index i = 0; i < treatment_.size(); ++i) {
    if (treatment_[i] != 0 && treatment_[i] != 1) {
      fail(ErrorKind::Domain, "treatment value at row " + std::to_string(i + 1) + " is not 0/1");
    }
  }
  require(features_.allFinite() && outcome_.allFinite(), ErrorKind::Numerical,
          "dataset contains non-finite values");
}

const Vector& Dataset::aux(const std::string& name) const {
  auto it = aux_.find(name);
  if (it == aux_.end()) fail(ErrorKind::Schema, "dataset has no auxiliary column '" + name + "'");
  return it->second;
}

std::optional<Vector> Dataset::find_aux(const std::string& name) const {
  auto it = aux_.find(name);
  if (it == aux_.end()) return std::nullopt;
  return it->second;
}

Dataset Dataset::with_aux(const std::string& name, Vector column) const {
  require(column.size() == rows(), ErrorKind::Parameter,
          "auxiliary column '" + name + "' must have length n");
  Dataset out = *this;
  out.aux_[name] = std::move(column);
  return out;
}

void Dataset::require_both_arms(const char* what) const {
  if (treated_count() == 0 || control_count() == 0) {
    fail(ErrorKind::Fit, std::string(what) + ": both treatment arms must be non-empty");
  }
}

Dataset Dataset::subset(const std::vector<Index>& rows) const {
  const Index m = static_cast<Index>(rows.size());
  Matrix x(m, cols());
  Eigen::VectorXi a(m);
  Vector y(m);
  for (Index r = 0; r < m; ++r) {
    const Index i = rows[r];
    x.row(r) = features_.row(i);
    a[r] = treatment_[i];
    y[r] = outcome_[i];
  }
  Dataset out(std::move(x), std::move(a), std::move(y), feature_names_);
  for (const auto& [name, col] : aux_) {
    Vector v(m);
    for (Index r = 0; r < m; ++r) v[r] = col[rows[r]];
    out.aux_[name] = std::move(v);
  }
  return out;
}

namespace {

std::vector<std::string> split_line(const std::string& line, char delimiter) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream stream(line);
  while (std::getline(stream, cell, delimiter)) out.push_back(cell);
  if (!line.empty() && line.back() == delimiter) out.emplace_back();
  return out;
}

std::string trim(const std::string& s) {
  const auto first = s.find_first_not_of(" \t\r\"");
  if (first == std::string::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\"");
  return s.substr(first, last - first + 1);
}

double parse_cell(const std::string& raw, std::size_t row, const std::string& column) {
  const std::string cell = trim(raw);
  double value = 0.0;
  const char* begin = cell.data();
  const char* end = begin + cell.size();
  if (!cell.empty() && *begin == '+') ++begin;
  auto [ptr, ec] = std::from_chars(begin, end, value);
  if (cell.empty() || ec != std::errc() || ptr != end || !std::isfinite(value)) {
    fail(ErrorKind::Parse, "row " + std::to_string(row) + ", column '" + column +
                               "': cannot parse '" + cell + "' as a finite number");
  }
  return value;
}

}  // namespace

Dataset load_csv(const std::string& path, const CsvSchema& schema) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::Io, "cannot open '" + path + "' for reading");

  std::string line;
  if (!std::getline(in, line)) fail(ErrorKind::Schema, "'" + path + "' has no header row");
  if (line.size() >= 3 && static_cast<unsigned char>(line[0]) == 0xEF) line = line.substr(3);  // BOM
  std::vector<std::string> header = split_line(line, schema.delimiter);
  for (auto& h : header) h = trim(h);

  auto column_of = [&](const std::string& name) -> std::size_t {
    auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) fail(ErrorKind::Schema, "column '" + name + "' not found in '" + path + "'");
    return static_cast<std::size_t>(it - header.begin());
  };

  std::vector<std::string> feature_names = schema.features;
  if (feature_names.empty()) {
    std::vector<std::pair<int, std::string>> numbered;
    for (const auto& h : header) {
      if (h.size() < 2 || h[0] != 'x') continue;
      int k = 0;
      auto [ptr, ec] = std::from_chars(h.data() + 1, h.data() + h.size(), k);
      if (ec == std::errc() && ptr == h.data() + h.size() && k >= 1) numbered.emplace_back(k, h);
    }
    std::sort(numbered.begin(), numbered.end());
    for (const auto& [k, name] : numbered) feature_names.push_back(name);
    if (feature_names.empty()) fail(ErrorKind::Schema, "no x<k> feature columns in '" + path + "'");
  }

  std::vector<std::size_t> feature_cols;
  for (const auto& name : feature_names) feature_cols.push_back(column_of(name));
  const std::size_t a_col = column_of(schema.treatment);
  const std::size_t y_col = column_of(schema.outcome);
  std::vector<std::pair<std::string, std::size_t>> aux_cols;
  for (const auto& [aux_name, column] : schema.aux) aux_cols.emplace_back(aux_name, column_of(column));

  std::vector<std::vector<double>> rows;
  std::vector<int> treatment;
  std::vector<double> outcome;
  std::vector<std::vector<double>> aux_values(aux_cols.size());
  std::size_t row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (trim(line).empty()) continue;
    const auto cells = split_line(line, schema.delimiter);
    if (cells.size() != header.size()) {
      fail(ErrorKind::Parse, "row " + std::to_string(row) + " has " + std::to_string(cells.size()) +
                                 " cells, header has " + std::to_string(header.size()));
    }
    std::vector<double> x;
    x.reserve(feature_cols.size());
    for (std::size_t j = 0; j < feature_cols.size(); ++j) {
      x.push_back(parse_cell(cells[feature_cols[j]], row, feature_names[j]));
    }
    const double a = parse_cell(cells[a_col], row, schema.treatment);
    if (a != 0.0 && a != 1.0) {
      fail(ErrorKind::Domain, "row " + std::to_string(row) + ", column '" + schema.treatment +
                                  "': treatment value '" + trim(cells[a_col]) + "' is not 0 or 1");
    }
    rows.push_back(std::move(x));
    treatment.push_back(static_cast<int>(a));
    outcome.push_back(parse_cell(cells[y_col], row, schema.outcome));
    for (std::size_t k = 0; k < aux_cols.size(); ++k) {
      aux_values[k].push_back(parse_cell(cells[aux_cols[k].second], row, header[aux_cols[k].second]));
    }
  }
  if (rows.empty()) fail(ErrorKind::Schema, "'" + path + "' has no data rows");

  const Index n = static_cast<Index>(rows.size());
  const Index d = static_cast<Index>(feature_names.size());
  Matrix x(n, d);
  Eigen::VectorXi a(n);
  Vector y(n);
  for (Index i = 0; i < n; ++i) {
    for (Index j = 0; j < d; ++j) x(i, j) = rows[i][j];
    a[i] = treatment[i];
    y[i] = outcome[i];
  }
  Dataset ds(std::move(x), std::move(a), std::move(y), feature_names);
  for (std::size_t k = 0; k < aux_cols.size(); ++k) {
    ds = ds.with_aux(aux_cols[k].first,
                     Eigen::Map<Vector>(aux_values[k].data(), static_cast<Index>(aux_values[k].size())));
  }
  return ds;
}

std::string format_real(double value) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", value);
  return buf;
}

void write_csv(const Dataset& ds, const std::string& path, char delimiter) {
  std::ofstream out(path);
  if (!out) fail(ErrorKind::Io, "cannot open '" + path + "' for writing");
  for (const auto& name : ds.feature_names()) out << name << delimiter;
  out << "a" << delimiter << "y";
  for (const auto& [name, col] : ds.aux()) out << delimiter << name;
  out << '\n';
  for (Index i = 0; i < ds.rows(); ++i) {
    for (Index j = 0; j < ds.cols(); ++j) out << format_real(ds.features()(i, j)) << delimiter;
    out << ds.treatment()[i] << delimiter << format_real(ds.outcome()[i]);
    for (const auto& [name, col] : ds.aux()) out << delimiter << format_real(col[i]);
    out << '\n';
  }
  if (!out) fail(ErrorKind::Io, "write to '" + path + "' failed");
}

namespace {

std::vector<Index> shuffled_range(Index n, std::uint64_t seed) {
  std::vector<Index> idx(static_cast<std::size_t>(n));
  std::iota(idx.begin(), idx.end(), Index{0});
  Rng rng(seed);
  // Fisher-Yates with explicit draws so the permutation is fixed by the seed alone.
  for (Index i = n - 1; i > 0; --i) {
    const auto j = static_cast<Index>(rng() % static_cast<std::uint64_t>(i + 1));
    std::swap(idx[i], idx[j]);
  }
  return idx;
}

}  // namespace

SplitIndices split_indices(Index n, double test_fraction, std::uint64_t seed) {
  require(test_fraction > 0.0 && test_fraction < 1.0, ErrorKind::Parameter,
          "test_fraction must lie in (0,1)");
  require(n >= 2, ErrorKind::Parameter, "splitting needs at least 2 rows");
  const auto n_train = static_cast<Index>(std::llround(static_cast<double>(n) * (1.0 - test_fraction)));
  require(n_train >= 1 && n_train < n, ErrorKind::Parameter,
          "test_fraction leaves an empty train or test part");
  auto idx = shuffled_range(n, seed);
  SplitIndices out;
  out.train.assign(idx.begin(), idx.begin() + n_train);
  out.test.assign(idx.begin() + n_train, idx.end());
  std::sort(out.train.begin(), out.train.end());
  std::sort(out.test.begin(), out.test.end());
  return out;
}

std::pair<Dataset, Dataset> train_test_split(const Dataset& ds, double test_fraction,
                                             std::uint64_t seed) {
  const auto split = split_indices(ds.rows(), test_fraction, seed);
  return {ds.subset(split.train), ds.subset(split.test)};
}

std::vector<SplitIndices> kfold_indices(Index n, Index k, std::uint64_t seed) {
  require(k >= 2 && k <= n, ErrorKind::Parameter,
          "kfold needs 2 <= k <= n (k=" + std::to_string(k) + ", n=" + std::to_string(n) + ")");
  const auto idx = shuffled_range(n, seed);
  std::vector<SplitIndices> folds(static_cast<std::size_t>(k));
  const Index base = n / k;
  const Index extra = n % k;
  Index start = 0;
  for (Index f = 0; f < k; ++f) {
    const Index size = base + (f < extra ? 1 : 0);
    auto& fold = folds[static_cast<std::size_t>(f)];
    fold.test.assign(idx.begin() + start, idx.begin() + start + size);
    fold.train.assign(idx.begin(), idx.begin() + start);
    fold.train.insert(fold.train.end(), idx.begin() + start + size, idx.end());
    std::sort(fold.test.begin(), fold.test.end());
    std::sort(fold.train.begin(), fold.train.end());
    start += size;
  }
  return folds;
}

}  // namespace cosub
