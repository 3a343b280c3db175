#pragma once

// Independent reference implementations used as test oracles. They share no
// code with the library beyond the data types: row filtering, aggregation,
// correlation and ranking are all written out again here, in long double.

#include <map>
#include <string>
#include <vector>

#include "xlint/attribution_data.h"
#include "xlint/evaluator.h"
#include "xlint/insight.h"

namespace xlint::testing {

struct OracleVerdict {
  Outcome outcome = Outcome::kUndetermined;
  std::map<std::string, double> statistics;
};

// Same defaults as the library: tau 0.3, at least 3 rows for correlation,
// at least 1 row for Read and Comparison, 5% relative tolerance for ~=.
struct OracleOptions {
  long double tau = 0.3L;
  std::size_t min_correlation_rows = 3;
  std::size_t min_rows = 1;
  long double approx_tolerance = 0.05L;
};

OracleVerdict OracleEvaluate(const StructuredInsight& insight, const ExplanationTable& table,
                             const OracleOptions& options = {});

// Shapley values by enumerating every permutation (n! orderings) of the
// players; independent of the coalition-weight formula.
std::vector<double> PermutationShapley(const std::vector<double>& weights,
                                       const std::vector<double>& x,
                                       const std::vector<double>& mu);

}  // namespace xlint::testing
