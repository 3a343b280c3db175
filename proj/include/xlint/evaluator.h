#pragma once

// Data-side judgment of a bound insight against an explanation table.

#include <map>
#include <optional>
#include <string>

#include "json.hpp"
#include "xlint/attribution_data.h"
#include "xlint/insight.h"

namespace xlint {

enum class Outcome { kSupported, kRefuted, kUndetermined };
std::string_view ToString(Outcome outcome);

struct Verdict {
  Outcome outcome = Outcome::kUndetermined;
  std::map<std::string, double> statistics;
  std::optional<double> threshold_used;
  // Machine-readable trace: what was computed over which rows, and why the
  // outcome follows. Always has "reason" when undetermined.
  nlohmann::json explanation;
};

nlohmann::json ToJson(const Verdict& verdict);
Verdict VerdictFromJson(const nlohmann::json& j);

struct EvalOptions {
  double approx_tolerance = 0.05;   // relative, for ~= and approx-equal
  double correlation_tau = 0.3;     // |r| below this reads as "no correlation"
  std::size_t min_correlation_rows = 3;
  std::size_t min_rows = 1;         // Read and Comparison
};

Verdict EvalRead(const ReadInsight& insight, const ExplanationTable& table,
                 const EvalOptions& options = {});
Verdict EvalCorrelation(const CorrelationInsight& insight, const ExplanationTable& table,
                        const EvalOptions& options = {});
Verdict EvalComparison(const ComparisonInsight& insight, const ExplanationTable& table,
                       const EvalOptions& options = {});
Verdict Evaluate(const BoundInsight& insight, const ExplanationTable& table,
                 const EvalOptions& options = {});

// Aggregate of `variable` over `rows`; nullopt when undefined for the sample
// (empty rows, variance of one row, ...). Throws TypeMismatch for the value
// facet of a categorical feature.
std::optional<double> AggregateVariable(const TVariable& variable, const ExplanationTable& table,
                                        const RowSubset& rows);

// Per-row facet values of a feature.
std::vector<double> FacetValues(const ExplanationTable& table, const std::string& feature,
                                Facet facet, const RowSubset& rows);

}  // namespace xlint
