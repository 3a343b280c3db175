#pragma once

// Vocabulary shared by the explanation table, the insight IR and the
// evaluator: facets, aggregators, comparators and row conditions.

#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace xlint {

enum class Facet { kValue, kAttribution };

enum class Aggregator {
  kIdentity,
  kMean,
  kVariance,
  kMin,
  kMax,
  kCount,
  kFraction,
};

// Superset of the comparators used by Read insights (< <= > >= ~=) and
// count/fraction predicates (< <= > >= =).
enum class Comparator { kLess, kLessEqual, kGreater, kGreaterEqual, kEqual, kApprox };

enum class ConditionOp { kLess, kLessEqual, kGreater, kGreaterEqual, kEqual, kInRange };

inline constexpr Aggregator kAllAggregators[] = {
    Aggregator::kIdentity, Aggregator::kMean,  Aggregator::kVariance,
    Aggregator::kMin,      Aggregator::kMax,   Aggregator::kCount,
    Aggregator::kFraction,
};

std::string_view ToString(Facet facet);
std::string_view ToString(Aggregator aggregator);
std::string_view ToString(Comparator comparator);
std::string_view ToString(ConditionOp op);

std::optional<Facet> ParseFacet(std::string_view text);
std::optional<Aggregator> ParseAggregator(std::string_view text);
// Accepts the canonical ASCII tokens plus the unicode forms (≤ ≥ ≈).
std::optional<Comparator> ParseComparator(std::string_view text);
std::optional<ConditionOp> ParseConditionOp(std::string_view text);

inline bool NeedsPredicate(Aggregator a) {
  return a == Aggregator::kCount || a == Aggregator::kFraction;
}

// Strict comparison of a statistic against a constant. kApprox is not
// handled here; see ApproxEqual.
bool Compare(double lhs, Comparator comparator, double rhs);

// |a - b| <= tolerance * max(|a|, |b|).
bool ApproxEqual(double a, double b, double relative_tolerance);

// A row filter on a feature value. Numeric conditions carry one bound (two
// for in-range, lo <= hi); equality on a categorical feature carries the
// category string instead.
struct TCondition {
  std::string feature;
  ConditionOp op = ConditionOp::kGreater;
  std::vector<double> bounds;
  std::optional<std::string> category;

  bool operator==(const TCondition&) const = default;
};

using Conditions = std::vector<TCondition>;

}  // namespace xlint
