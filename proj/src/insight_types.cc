#include "xlint/insight_types.h"

#include <algorithm>
#include <cmath>

namespace xlint {

std::string_view ToString(Facet facet) {
  return facet == Facet::kValue ? "value" : "attribution";
}

std::string_view ToString(Aggregator aggregator) {
  switch (aggregator) {
    case Aggregator::kIdentity: return "identity";
    case Aggregator::kMean: return "mean";
    case Aggregator::kVariance: return "variance";
    case Aggregator::kMin: return "min";
    case Aggregator::kMax: return "max";
    case Aggregator::kCount: return "count";
    case Aggregator::kFraction: return "fraction";
  }
  return "identity";
}

std::string_view ToString(Comparator comparator) {
  switch (comparator) {
    case Comparator::kLess: return "<";
    case Comparator::kLessEqual: return "<=";
    case Comparator::kGreater: return ">";
    case Comparator::kGreaterEqual: return ">=";
    case Comparator::kEqual: return "=";
    case Comparator::kApprox: return "~=";
  }
  return "=";
}

std::string_view ToString(ConditionOp op) {
  switch (op) {
    case ConditionOp::kLess: return "<";
    case ConditionOp::kLessEqual: return "<=";
    case ConditionOp::kGreater: return ">";
    case ConditionOp::kGreaterEqual: return ">=";
    case ConditionOp::kEqual: return "=";
    case ConditionOp::kInRange: return "in-range";
  }
  return "=";
}

std::optional<Facet> ParseFacet(std::string_view text) {
  if (text == "value") return Facet::kValue;
  if (text == "attribution") return Facet::kAttribution;
  return std::nullopt;
}

std::optional<Aggregator> ParseAggregator(std::string_view text) {
  for (Aggregator a : kAllAggregators) {
    if (ToString(a) == text) return a;
  }
  return std::nullopt;
}

std::optional<Comparator> ParseComparator(std::string_view text) {
  if (text == "<") return Comparator::kLess;
  if (text == "<=" || text == "\xE2\x89\xA4") return Comparator::kLessEqual;
  if (text == ">") return Comparator::kGreater;
  if (text == ">=" || text == "\xE2\x89\xA5") return Comparator::kGreaterEqual;
  if (text == "=" || text == "==") return Comparator::kEqual;
  if (text == "~=" || text == "\xE2\x89\x88") return Comparator::kApprox;
  return std::nullopt;
}

std::optional<ConditionOp> ParseConditionOp(std::string_view text) {
  if (text == "in-range") return ConditionOp::kInRange;
  auto c = ParseComparator(text);
  if (!c || *c == Comparator::kApprox) return std::nullopt;
  switch (*c) {
    case Comparator::kLess: return ConditionOp::kLess;
    case Comparator::kLessEqual: return ConditionOp::kLessEqual;
    case Comparator::kGreater: return ConditionOp::kGreater;
    case Comparator::kGreaterEqual: return ConditionOp::kGreaterEqual;
    default: return ConditionOp::kEqual;
  }
}

bool Compare(double lhs, Comparator comparator, double rhs) {
  switch (comparator) {
    case Comparator::kLess: return lhs < rhs;
    case Comparator::kLessEqual: return lhs <= rhs;
    case Comparator::kGreater: return lhs > rhs;
    case Comparator::kGreaterEqual: return lhs >= rhs;
    case Comparator::kEqual: return lhs == rhs;
    case Comparator::kApprox: return lhs == rhs;
  }
  return false;
}

bool ApproxEqual(double a, double b, double relative_tolerance) {
  return std::fabs(a - b) <=
         relative_tolerance * std::max(std::fabs(a), std::fabs(b));
}

}  // namespace xlint
