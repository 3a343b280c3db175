#pragma once

// Projects a bound insight back onto a chart: annotation layers on the
// current spec plus an optional coordinated view.

#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "xlint/chat_client.h"
#include "xlint/insight.h"
#include "xlint/vis_spec.h"

namespace xlint {

struct MapperOptions {
  double dim_opacity = kDefaultDimOpacity;
};

struct AnnotateResult {
  VisSpec spec;
  bool no_match = false;               // no encoded field relates to the insight
  std::vector<Channel> matched_channels;
};

// Appends dim / emphasis / reference-line layers. On no match the chart is
// returned unchanged with the flag set.
AnnotateResult Annotate(const BoundInsight& insight, const VisSpec& spec,
                        const MapperOptions& options = {});

struct Rationale {
  std::string rule_id;
  std::string text;

  bool operator==(const Rationale&) const = default;
};

struct Recommendation {
  std::optional<VisSpec> spec;
  Rationale rationale;
};

// Rule-table recommender. Returns no spec when `current` already shows the
// target chart, unless `force` is set.
Recommendation Recommend(const BoundInsight& insight, const VisSpec& current,
                         bool force = false);

// Lets a chat model pick one of the chart kinds in RuleIds(); any answer that
// is not a fitting rule id falls back to Recommend().
Recommendation RecommendGuided(const BoundInsight& insight, const VisSpec& current,
                               ChatClient& client, bool force = false);

// The rule ids Recommend() can emit.
const std::vector<std::string>& RuleIds();

struct MappingResult {
  VisSpec annotated_spec;
  std::optional<VisSpec> recommended_spec;
  Rationale rationale;
  bool no_match = false;
  DataRef coordination;  // shared by both specs
};

MappingResult Map(const BoundInsight& insight, const VisSpec& spec,
                  const MapperOptions& options = {});

nlohmann::json ToJson(const MappingResult& mapping);
MappingResult MappingFromJson(const nlohmann::json& j);

// {"annotated": <vega-lite>, "recommended": <vega-lite> | null}
nlohmann::json CompileMapping(const MappingResult& mapping, const ExplanationTable& table);

// True when `derived` equals `base` apart from appended layers and the data
// filter: same mark, encodings, title, split and aggregates, and base layers
// as a prefix.
bool OnlyAppendedLayers(const VisSpec& base, const VisSpec& derived);

}  // namespace xlint
