#pragma once

// Structured insight IR: Read / Correlation / Comparison over attribution
// tables, its JSON form ("insight/v1"), validation into slots and binding of
// feature references against a concrete table.

#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "json.hpp"
#include "xlint/attribution_data.h"
#include "xlint/insight_types.h"

namespace xlint {

inline constexpr const char* kInsightSchema = "insight/v1";

struct Predicate {
  Comparator comparator = Comparator::kGreater;
  double constant = 0;

  bool operator==(const Predicate&) const = default;
};

// A per-row quantity (aggregator == identity) or an aggregate over the
// conditioned rows. count and fraction aggregate a predicate on the facet.
struct TVariable {
  std::string feature;
  Facet facet = Facet::kAttribution;
  Aggregator aggregator = Aggregator::kIdentity;
  std::optional<Predicate> predicate;

  bool operator==(const TVariable&) const = default;
};

enum class InsightType { kRead, kCorrelation, kComparison };
enum class Direction { kPositive, kNegative, kNone };
enum class Relation { kGreater, kLess, kApproxEqual };

struct ReadInsight {
  TVariable variable;
  Comparator comparator = Comparator::kGreater;
  double threshold = 0;
  Conditions conditions;

  bool operator==(const ReadInsight&) const = default;
};

struct CorrelationInsight {
  TVariable x;
  TVariable y;
  Direction direction = Direction::kNone;
  Conditions conditions;

  bool operator==(const CorrelationInsight&) const = default;
};

struct ComparisonInsight {
  TVariable left;
  TVariable right;
  Relation relation = Relation::kGreater;
  Conditions conditions;

  bool operator==(const ComparisonInsight&) const = default;
};

using StructuredInsight = std::variant<ReadInsight, CorrelationInsight, ComparisonInsight>;

InsightType TypeOf(const StructuredInsight& insight);
const Conditions& ConditionsOf(const StructuredInsight& insight);
Conditions& ConditionsOf(StructuredInsight& insight);

std::string_view ToString(InsightType type);
std::string_view ToString(Direction direction);
std::string_view ToString(Relation relation);
std::optional<InsightType> ParseInsightType(std::string_view text);
std::optional<Direction> ParseDirection(std::string_view text);
std::optional<Relation> ParseRelation(std::string_view text);

enum class SlotState { kFilled, kMissing, kAmbiguous };
std::string_view ToString(SlotState state);

// A field of an insight document that the user still has to supply or
// disambiguate. Paths look like "read.threshold", "correlation.y" or
// "comparison.conditions[0].bounds".
struct SlotStatus {
  std::string path;
  SlotState state = SlotState::kMissing;
  std::vector<std::string> candidates;

  bool operator==(const SlotStatus&) const = default;
};

nlohmann::json ToJson(const SlotStatus& slot);
SlotStatus SlotFromJson(const nlohmann::json& j);

struct ValidationResult {
  std::optional<StructuredInsight> insight;
  std::vector<SlotStatus> slots;

  bool ok() const { return insight.has_value(); }
};

// Checks a document against insight/v1. Produces either the insight or every
// offending slot. Throws Error(kUnknownInsightType) when the "type" tag is
// absent or unknown.
ValidationResult Validate(const nlohmann::json& document);

// Canonical JSON: "schema" tag, sorted keys, explicit nulls for absent
// predicates and for an empty condition list.
nlohmann::json ToJson(const StructuredInsight& insight);
nlohmann::json ToJson(const TVariable& variable);
nlohmann::json ToJson(const TCondition& condition);
std::string Serialize(const StructuredInsight& insight);

// Throws Error(kSchemaViolation) with the JSON path of the first problem.
StructuredInsight Deserialize(const std::string& text);
StructuredInsight FromJson(const nlohmann::json& document);

// Standalone pieces of a document, e.g. a spec's row filter. Throw
// Error(kSchemaViolation).
Conditions ConditionsFromJson(const nlohmann::json& list);
TVariable VariableFromJson(const nlohmann::json& variable);

// Converts a slot path ("read.threshold") into a JSON path ("$.threshold").
std::string SlotPathToJsonPath(const std::string& slot_path);

// Result of resolving a free-text feature reference against a table.
struct FeatureResolution {
  std::optional<std::string> name;
  SlotState state = SlotState::kFilled;
  std::vector<std::string> candidates;
};

// Exact name, then case-folded name, then case-folded substring of a feature
// description. More than one hit at the deciding stage is ambiguous.
FeatureResolution ResolveFeature(const std::string& reference, const ExplanationTable& table);

// An insight whose feature references all name features of a specific table
// and whose conditions and facets are applicable to that table.
struct BoundInsight {
  StructuredInsight insight;

  bool operator==(const BoundInsight&) const = default;
};

struct BindResult {
  std::optional<BoundInsight> bound;
  nlohmann::json document;  // document with every resolvable reference rewritten
  std::vector<SlotStatus> slots;

  bool ok() const { return bound.has_value(); }
};

// Resolves feature references inside a (possibly incomplete) document. Never
// throws for unresolved references; they are reported as slots along with the
// validation slots of the rewritten document.
BindResult BindDocument(const nlohmann::json& document, const ExplanationTable& table);
BindResult Bind(const StructuredInsight& insight, const ExplanationTable& table);

}  // namespace xlint
