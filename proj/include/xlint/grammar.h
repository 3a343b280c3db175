#pragma once

// Controlled insight language: a deterministic parser for sentences such as
//
//   there is no correlation between bp attributions and s5 attributions
//   for more than 65% of patients, bmi has a positive attribution
//   the number of rows with positive attribution for bp is greater than the
//     number with negative attribution when age is above 0.02
//
// and the rule-based renderer that turns an insight document back into such
// a sentence, with typed segments for highlighting and slot completion. The
// full grammar is in docs/controlled-language.ebnf.

#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "xlint/attribution_data.h"
#include "xlint/insight.h"

namespace xlint {

struct ParseOutcome {
  enum class Kind { kInsight, kSlots, kNoParse };

  Kind kind = Kind::kNoParse;
  std::optional<StructuredInsight> insight;  // kInsight, bound to the table
  nlohmann::json document;                   // kInsight / kSlots
  std::vector<SlotStatus> slots;             // kSlots
  std::string diagnostic;                    // kNoParse
};

// Total: every input yields exactly one kind, never throws.
ParseOutcome ParseControlled(std::string_view text, const ExplanationTable& table);

enum class SegmentKind { kLiteral, kKeyword, kSlot };
enum class Highlight { kNone, kFeature, kAttribution, kInsightType, kCondition };

std::string_view ToString(SegmentKind kind);
std::string_view ToString(Highlight highlight);

struct Segment {
  SegmentKind kind = SegmentKind::kLiteral;
  std::string text;
  std::optional<std::string> slot_ref;  // document path the segment edits
  Highlight highlight = Highlight::kNone;
  std::vector<std::string> candidates;  // slot segments only

  bool operator==(const Segment&) const = default;
};

struct RenderedInsight {
  std::vector<Segment> segments;

  // Concatenated text of all segments.
  std::string Flatten() const;
};

nlohmann::json ToJson(const RenderedInsight& rendered);

// Renders a (possibly incomplete) insight document. Each entry of `slots`
// becomes exactly one slot segment.
RenderedInsight Render(const nlohmann::json& document, const std::vector<SlotStatus>& slots);
RenderedInsight Render(const StructuredInsight& insight);

// parse(flatten(render(insight))) == insight against `table`'s vocabulary.
bool RoundtripCheck(const StructuredInsight& insight, const ExplanationTable& table);

// True when a feature name or category label must be quoted to survive
// tokenization (grammar keywords, numbers, punctuation).
bool NeedsQuoting(std::string_view name);

// Words the controlled language reserves.
const std::vector<std::string>& ReservedWords();

}  // namespace xlint
