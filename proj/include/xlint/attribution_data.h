#pragma once

// Tabular attribution-based global explanations: one row per instance with
// feature values, per-feature attributions and the model prediction.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <istream>
#include <map>
#include <optional>
#include <string>
#include <unordered_map>
#include <variant>
#include <vector>

#include "xlint/insight_types.h"

namespace xlint {

enum class FeatureKind { kQuantitative, kCategorical };

struct FeatureMeta {
  std::string name;
  FeatureKind kind = FeatureKind::kQuantitative;
  std::optional<std::string> unit;
  std::optional<std::string> description;

  bool operator==(const FeatureMeta&) const = default;
};

// A feature value: a real for quantitative features, the category label for
// categorical ones.
using Cell = std::variant<double, std::string>;

struct Row {
  std::string id;
  std::vector<Cell> values;          // indexed like ExplanationTable::features()
  std::vector<double> attributions;  // indexed like ExplanationTable::features()
  double prediction = 0;

  bool operator==(const Row&) const = default;
};

struct TableOptions {
  // Efficiency tolerance is eps_scale * (1 + |prediction|).
  double efficiency_eps_scale = 1e-6;
};

// Immutable, validated explanation table. Construction enforces the schema
// invariants and records efficiency violations as warnings.
class ExplanationTable {
 public:
  ExplanationTable(std::vector<FeatureMeta> features, double base_value,
                   std::vector<Row> rows, const TableOptions& options = {});

  const std::vector<FeatureMeta>& features() const { return features_; }
  double base_value() const { return base_value_; }
  const std::vector<Row>& rows() const { return rows_; }
  std::size_t num_rows() const { return rows_.size(); }
  const std::vector<std::string>& warnings() const { return warnings_; }

  std::optional<std::size_t> FeatureIndex(std::string_view name) const;
  const FeatureMeta& Feature(std::string_view name) const;  // throws UnknownFeature

  bool operator==(const ExplanationTable& other) const {
    return features_ == other.features_ && base_value_ == other.base_value_ &&
           rows_ == other.rows_;
  }

 private:
  std::vector<FeatureMeta> features_;
  double base_value_;
  std::vector<Row> rows_;
  std::vector<std::string> warnings_;
  std::unordered_map<std::string, std::size_t> index_;
};

enum class TableFormat { kCsv, kJson };

ExplanationTable LoadTable(std::istream& source, TableFormat format,
                           const TableOptions& options = {});
ExplanationTable LoadTableFromString(const std::string& text, TableFormat format,
                                     const TableOptions& options = {});
std::string SerializeTable(const ExplanationTable& table, TableFormat format);

// Guesses the format from the first non-blank byte.
TableFormat SniffTableFormat(const std::string& text);

// Indices of the rows satisfying every condition.
using RowSubset = std::vector<std::size_t>;

RowSubset AllRows(const ExplanationTable& table);
RowSubset FilterRows(const ExplanationTable& table, const Conditions& conditions);
RowSubset FilterRows(const ExplanationTable& table, const RowSubset& rows,
                     const Conditions& conditions);

// Throws UnknownFeature / TypeMismatch if the condition cannot apply to the
// table.
void CheckCondition(const ExplanationTable& table, const TCondition& condition);
bool RowMatches(const ExplanationTable& table, const Row& row,
                const TCondition& condition);

struct LinearModel {
  std::map<std::string, double> weights;
  double intercept = 0;
  std::map<std::string, double> background_means;
};

struct ShapleyResult {
  std::map<std::string, double> attributions;
  double base_value = 0;
  double prediction = 0;
};

// Closed-form Shapley values of a linear model with independent features
// (interventional, mean background): phi_i = w_i * (x_i - mu_i).
ShapleyResult ExactShapleyLinear(const LinearModel& model,
                                 const std::map<std::string, double>& instance);

inline constexpr int kMaxBruteForceFeatures = 12;

// Coalitions are bitmasks over n players; bit i set means player i present.
using CoalitionValue = std::function<double(std::uint32_t coalition)>;

// Shapley vector by full 2^n enumeration.
std::vector<double> BruteForceShapley(const CoalitionValue& value, int n);

}  // namespace xlint
