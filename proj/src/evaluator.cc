#include "xlint/evaluator.h"

#include <cmath>

#include "xlint/error.h"
#include "xlint/stats.h"
#include "xlint/text_util.h"

namespace xlint {

using nlohmann::json;

std::string_view ToString(Outcome outcome) {
  switch (outcome) {
    case Outcome::kSupported: return "supported";
    case Outcome::kRefuted: return "refuted";
    case Outcome::kUndetermined: return "undetermined";
  }
  return "undetermined";
}

json ToJson(const Verdict& verdict) {
  json stats = json::object();
  for (const auto& [k, v] : verdict.statistics) stats[k] = v;
  return {{"outcome", ToString(verdict.outcome)},
          {"statistics", std::move(stats)},
          {"threshold_used",
           verdict.threshold_used ? json(*verdict.threshold_used) : json(nullptr)},
          {"explanation", verdict.explanation}};
}

Verdict VerdictFromJson(const json& j) {
  Verdict v;
  const std::string o = j.at("outcome").get<std::string>();
  v.outcome = o == "supported" ? Outcome::kSupported
              : o == "refuted" ? Outcome::kRefuted
                               : Outcome::kUndetermined;
  for (const auto& [k, val] : j.at("statistics").items()) v.statistics[k] = val.get<double>();
  if (auto it = j.find("threshold_used"); it != j.end() && it->is_number()) {
    v.threshold_used = it->get<double>();
  }
  if (auto it = j.find("explanation"); it != j.end()) v.explanation = *it;
  return v;
}

std::vector<double> FacetValues(const ExplanationTable& table, const std::string& feature,
                                Facet facet, const RowSubset& rows) {
  const FeatureMeta& meta = table.Feature(feature);
  const std::size_t idx = *table.FeatureIndex(feature);
  if (facet == Facet::kValue && meta.kind == FeatureKind::kCategorical) {
    throw Error(ErrorCode::kTypeMismatch,
                "values of categorical feature '" + feature + "' are not numeric");
  }
  std::vector<double> out;
  out.reserve(rows.size());
  for (std::size_t r : rows) {
    const Row& row = table.rows()[r];
    out.push_back(facet == Facet::kAttribution ? row.attributions[idx]
                                               : std::get<double>(row.values[idx]));
  }
  return out;
}

std::optional<double> AggregateVariable(const TVariable& variable, const ExplanationTable& table,
                                        const RowSubset& rows) {
  const auto xs = FacetValues(table, variable.feature, variable.facet, rows);
  switch (variable.aggregator) {
    case Aggregator::kMean: return stats::Mean(xs);
    case Aggregator::kVariance: return stats::Variance(xs);
    case Aggregator::kMin: return stats::Min(xs);
    case Aggregator::kMax: return stats::Max(xs);
    case Aggregator::kCount:
    case Aggregator::kFraction: {
      if (!variable.predicate) {
        throw Error(ErrorCode::kInvariantViolation, "count/fraction without a predicate");
      }
      double hits = 0;
      for (double x : xs) {
        if (Compare(x, variable.predicate->comparator, variable.predicate->constant)) hits += 1;
      }
      if (variable.aggregator == Aggregator::kCount) return hits;
      if (xs.empty()) return std::nullopt;
      return hits / static_cast<double>(xs.size());
    }
    case Aggregator::kIdentity:
      break;
  }
  throw Error(ErrorCode::kInvariantViolation, "identity variable cannot be aggregated");
}

namespace {

std::string Describe(const TVariable& v) {
  std::string s = std::string(ToString(v.aggregator)) + "(" + std::string(ToString(v.facet)) +
                  " of " + v.feature;
  if (v.predicate) {
    s += " " + std::string(ToString(v.predicate->comparator)) + " " +
         FormatNumber(v.predicate->constant);
  }
  return s + ")";
}

Verdict Undetermined(std::string reason, json explanation) {
  Verdict v;
  v.outcome = Outcome::kUndetermined;
  explanation["reason"] = std::move(reason);
  v.explanation = std::move(explanation);
  return v;
}

json ConditionsTrace(const Conditions& conditions) {
  json out = json::array();
  for (const auto& c : conditions) out.push_back(ToJson(c));
  return out;
}

}  // namespace

Verdict EvalRead(const ReadInsight& insight, const ExplanationTable& table,
                 const EvalOptions& options) {
  const RowSubset rows = FilterRows(table, insight.conditions);
  json trace = {{"type", "read"},
                {"variable", Describe(insight.variable)},
                {"conditions", ConditionsTrace(insight.conditions)},
                {"n_rows", rows.size()}};
  const auto stat = rows.size() < options.min_rows
                        ? std::nullopt
                        : AggregateVariable(insight.variable, table, rows);
  if (!stat) {
    Verdict v = Undetermined(
        rows.empty() ? "UndefinedStatistic: no rows satisfy the conditions"
                     : "UndefinedStatistic: " + std::string(ToString(insight.variable.aggregator)) +
                           " is undefined for " + std::to_string(rows.size()) + " row(s)",
        std::move(trace));
    v.statistics["n_rows"] = static_cast<double>(rows.size());
    v.threshold_used = insight.threshold;
    return v;
  }
  const bool holds = insight.comparator == Comparator::kApprox
                         ? ApproxEqual(*stat, insight.threshold, options.approx_tolerance)
                         : Compare(*stat, insight.comparator, insight.threshold);
  Verdict v;
  v.outcome = holds ? Outcome::kSupported : Outcome::kRefuted;
  v.statistics["statistic"] = *stat;
  v.statistics[std::string(ToString(insight.variable.aggregator))] = *stat;
  v.statistics["threshold"] = insight.threshold;
  v.statistics["n_rows"] = static_cast<double>(rows.size());
  v.threshold_used = insight.threshold;
  trace["evidence"] = FormatNumber(*stat) + " " + std::string(ToString(insight.comparator)) +
                      " " + FormatNumber(insight.threshold) + (holds ? " holds" : " fails");
  if (insight.comparator == Comparator::kApprox) trace["tolerance"] = options.approx_tolerance;
  v.explanation = std::move(trace);
  return v;
}

Verdict EvalCorrelation(const CorrelationInsight& insight, const ExplanationTable& table,
                        const EvalOptions& options) {
  const RowSubset rows = FilterRows(table, insight.conditions);
  json trace = {{"type", "correlation"},
                {"x", Describe(insight.x)},
                {"y", Describe(insight.y)},
                {"conditions", ConditionsTrace(insight.conditions)},
                {"n_rows", rows.size()},
                {"tau", options.correlation_tau}};
  const auto xs = FacetValues(table, insight.x.feature, insight.x.facet, rows);
  const auto ys = FacetValues(table, insight.y.feature, insight.y.facet, rows);
  auto undetermined = [&](std::string reason) {
    Verdict v = Undetermined(std::move(reason), trace);
    v.statistics["n_rows"] = static_cast<double>(rows.size());
    v.threshold_used = options.correlation_tau;
    return v;
  };
  if (rows.size() < options.min_correlation_rows) {
    return undetermined("UndefinedStatistic: correlation needs at least " +
                        std::to_string(options.min_correlation_rows) + " rows");
  }
  const auto r = stats::Pearson(xs, ys);
  if (!r) return undetermined("UndefinedStatistic: zero variance");

  Direction computed = Direction::kNone;
  if (*r >= options.correlation_tau) {
    computed = Direction::kPositive;
  } else if (*r <= -options.correlation_tau) {
    computed = Direction::kNegative;
  }
  Verdict v;
  v.outcome = computed == insight.direction ? Outcome::kSupported : Outcome::kRefuted;
  v.statistics["pearson_r"] = *r;
  if (auto rho = stats::Spearman(xs, ys)) v.statistics["spearman_rho"] = *rho;
  v.statistics["n_rows"] = static_cast<double>(rows.size());
  v.statistics["tau"] = options.correlation_tau;
  v.threshold_used = options.correlation_tau;
  trace["computed_direction"] = ToString(computed);
  trace["claimed_direction"] = ToString(insight.direction);
  trace["evidence"] = "r = " + FormatNumber(*r) + ", |r| " +
                      (std::fabs(*r) < options.correlation_tau ? "<" : ">=") + " " +
                      FormatNumber(options.correlation_tau);
  v.explanation = std::move(trace);
  return v;
}

Verdict EvalComparison(const ComparisonInsight& insight, const ExplanationTable& table,
                       const EvalOptions& options) {
  const RowSubset rows = FilterRows(table, insight.conditions);
  json trace = {{"type", "comparison"},
                {"left", Describe(insight.left)},
                {"right", Describe(insight.right)},
                {"relation", ToString(insight.relation)},
                {"conditions", ConditionsTrace(insight.conditions)},
                {"n_rows", rows.size()}};
  std::optional<double> lhs, rhs;
  if (rows.size() >= options.min_rows) {
    lhs = AggregateVariable(insight.left, table, rows);
    rhs = AggregateVariable(insight.right, table, rows);
  }
  if (!lhs || !rhs) {
    Verdict v = Undetermined(
        rows.empty() ? "UndefinedStatistic: no rows satisfy the conditions"
                     : "UndefinedStatistic: " + std::string(!lhs ? "left" : "right") +
                           " side is undefined for " + std::to_string(rows.size()) + " row(s)",
        std::move(trace));
    v.statistics["n_rows"] = static_cast<double>(rows.size());
    return v;
  }
  bool holds = false;
  switch (insight.relation) {
    case Relation::kGreater: holds = *lhs > *rhs; break;
    case Relation::kLess: holds = *lhs < *rhs; break;
    case Relation::kApproxEqual: holds = ApproxEqual(*lhs, *rhs, options.approx_tolerance); break;
  }
  Verdict v;
  v.outcome = holds ? Outcome::kSupported : Outcome::kRefuted;
  v.statistics["lhs"] = *lhs;
  v.statistics["rhs"] = *rhs;
  v.statistics["n_rows"] = static_cast<double>(rows.size());
  if (insight.relation == Relation::kApproxEqual) {
    v.threshold_used = options.approx_tolerance;
    trace["tolerance"] = options.approx_tolerance;
  }
  trace["evidence"] = FormatNumber(*lhs) + " vs " + FormatNumber(*rhs) + ": " +
                      std::string(ToString(insight.relation)) + (holds ? " holds" : " fails");
  v.explanation = std::move(trace);
  return v;
}

Verdict Evaluate(const BoundInsight& bound, const ExplanationTable& table,
                 const EvalOptions& options) {
  return std::visit(
      [&](const auto& i) -> Verdict {
        using T = std::decay_t<decltype(i)>;
        if constexpr (std::is_same_v<T, ReadInsight>) {
          return EvalRead(i, table, options);
        } else if constexpr (std::is_same_v<T, CorrelationInsight>) {
          return EvalCorrelation(i, table, options);
        } else {
          return EvalComparison(i, table, options);
        }
      },
      bound.insight);
}

}  // namespace xlint
