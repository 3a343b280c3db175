#include "xlint/reverse_mapper.h"

#include <algorithm>
#include <set>

#include "xlint/error.h"
#include "xlint/text_util.h"

namespace xlint {

using nlohmann::json;

namespace {

struct FieldKey {
  std::string feature;
  Facet facet;

  bool operator==(const FieldKey&) const = default;
};

// (feature, facet) pairs an insight talks about, including condition features.
std::vector<FieldKey> InsightFields(const StructuredInsight& insight) {
  std::vector<FieldKey> out;
  auto add = [&](const std::string& f, Facet facet) {
    FieldKey k{f, facet};
    if (std::find(out.begin(), out.end(), k) == out.end()) out.push_back(std::move(k));
  };
  std::visit(
      [&](const auto& i) {
        using T = std::decay_t<decltype(i)>;
        if constexpr (std::is_same_v<T, ReadInsight>) {
          add(i.variable.feature, i.variable.facet);
        } else if constexpr (std::is_same_v<T, CorrelationInsight>) {
          add(i.x.feature, i.x.facet);
          add(i.y.feature, i.y.facet);
        } else {
          add(i.left.feature, i.left.facet);
          add(i.right.feature, i.right.facet);
        }
      },
      insight);
  for (const auto& c : ConditionsOf(insight)) add(c.feature, Facet::kValue);
  return out;
}

bool Positional(Channel ch) { return ch == Channel::kX || ch == Channel::kY; }

bool IsQuantitativeOn(const Encoding& e, const std::string& feature, Facet facet) {
  if (e.scale != Scale::kLinear) return false;
  if (e.field.kind == FieldKind::kFeature) return e.field.feature == feature && e.field.facet == facet;
  return e.field.kind == FieldKind::kMelted && e.field.facet == facet;
}

}  // namespace

AnnotateResult Annotate(const BoundInsight& bound, const VisSpec& spec,
                        const MapperOptions& options) {
  const StructuredInsight& insight = bound.insight;
  const auto fields = InsightFields(insight);

  AnnotateResult out;
  out.spec = spec;
  std::vector<std::string> melted_keep;
  for (const auto& [ch, e] : spec.encodings) {
    bool match = false;
    if (e.field.kind == FieldKind::kFeature) {
      match = std::find(fields.begin(), fields.end(), FieldKey{e.field.feature, e.field.facet}) !=
              fields.end();
    } else if (e.field.kind == FieldKind::kMelted) {
      for (const auto& k : fields) {
        if (k.facet != e.field.facet) continue;
        match = true;
        if (std::find(melted_keep.begin(), melted_keep.end(), k.feature) == melted_keep.end()) {
          melted_keep.push_back(k.feature);
        }
      }
    }
    if (match) out.matched_channels.push_back(ch);
  }
  if (out.matched_channels.empty()) {
    out.no_match = true;
    return out;
  }

  AnnotationLayer dim;
  dim.kind = LayerKind::kDim;
  dim.keep_features = melted_keep;
  dim.keep_conditions = ConditionsOf(insight);
  dim.opacity = options.dim_opacity;
  out.spec.layers.push_back(std::move(dim));

  for (Channel ch : out.matched_channels) {
    if (ch == Channel::kRowFacet || ch == Channel::kColumnFacet) continue;
    AnnotationLayer emph;
    emph.kind = LayerKind::kEmphasis;
    emph.channel = ch;
    emph.target = Positional(ch) ? EmphasisTarget::kAxis : EmphasisTarget::kLegend;
    out.spec.layers.push_back(std::move(emph));
  }

  std::set<std::pair<Channel, double>> lines;
  auto line = [&](Channel ch, double at) {
    if (!lines.insert({ch, at}).second) return;
    AnnotationLayer l;
    l.kind = LayerKind::kReferenceLine;
    l.channel = ch;
    l.at = at;
    l.dashed = true;
    out.spec.layers.push_back(std::move(l));
  };
  for (const auto& c : ConditionsOf(insight)) {
    if (c.category) continue;
    for (Channel ch : {Channel::kX, Channel::kY}) {
      auto it = spec.encodings.find(ch);
      if (it == spec.encodings.end() || it->second.field.kind != FieldKind::kFeature) continue;
      if (!IsQuantitativeOn(it->second, c.feature, Facet::kValue)) continue;
      for (double b : c.bounds) line(ch, b);
    }
  }
  if (const auto* read = std::get_if<ReadInsight>(&insight)) {
    const Aggregator a = read->variable.aggregator;
    if (a == Aggregator::kMean || a == Aggregator::kMin || a == Aggregator::kMax) {
      for (Channel ch : {Channel::kX, Channel::kY}) {
        auto it = spec.encodings.find(ch);
        if (it != spec.encodings.end() &&
            IsQuantitativeOn(it->second, read->variable.feature, read->variable.facet)) {
          line(ch, read->threshold);
        }
      }
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Recommendation

namespace {

constexpr const char* kCorrelationScatter = "correlation->scatter";
constexpr const char* kReadCountDual = "read-count->dual-beeswarm";
constexpr const char* kReadMeanReference = "read-mean->beeswarm-reference";
constexpr const char* kReadVariance = "read-variance->beeswarm";
constexpr const char* kReadIdentity = "read-identity->beeswarm";
constexpr const char* kComparisonCountDual = "comparison-count->dual-beeswarm";
constexpr const char* kComparisonBar = "comparison->paired-bar";
constexpr const char* kComparisonIdentity = "comparison-identity->scatter";

bool Counting(const TVariable& v) { return NeedsPredicate(v.aggregator); }

Split SplitOf(const TVariable& v) {
  return {v.feature, v.facet, v.predicate.value_or(Predicate{Comparator::kGreater, 0.0})};
}

std::string DefaultRule(const StructuredInsight& insight) {
  return std::visit(
      [](const auto& i) -> std::string {
        using T = std::decay_t<decltype(i)>;
        if constexpr (std::is_same_v<T, CorrelationInsight>) {
          return kCorrelationScatter;
        } else if constexpr (std::is_same_v<T, ReadInsight>) {
          switch (i.variable.aggregator) {
            case Aggregator::kCount:
            case Aggregator::kFraction: return kReadCountDual;
            case Aggregator::kMean:
            case Aggregator::kMin:
            case Aggregator::kMax: return kReadMeanReference;
            case Aggregator::kVariance: return kReadVariance;
            case Aggregator::kIdentity: return kReadIdentity;
          }
          return kReadIdentity;
        } else {
          if (i.left.aggregator == Aggregator::kIdentity ||
              i.right.aggregator == Aggregator::kIdentity) {
            return kComparisonIdentity;
          }
          if (Counting(i.left) && Counting(i.right) && i.left.feature == i.right.feature &&
              i.left.facet == i.right.facet) {
            return kComparisonCountDual;
          }
          return kComparisonBar;
        }
      },
      insight);
}

TVariable PerRow(TVariable v) {
  v.aggregator = Aggregator::kIdentity;
  v.predicate.reset();
  return v;
}

// Spec for `rule`, or nothing when the rule does not fit the insight.
std::optional<VisSpec> BuildForRule(const std::string& rule, const StructuredInsight& insight,
                                    const std::string& dataset_id) {
  const auto* read = std::get_if<ReadInsight>(&insight);
  const auto* corr = std::get_if<CorrelationInsight>(&insight);
  const auto* comp = std::get_if<ComparisonInsight>(&insight);

  if (rule == kCorrelationScatter && corr) {
    return ScatterSpec(dataset_id, PerRow(corr->x), PerRow(corr->y));
  }
  if (rule == kReadCountDual && read && Counting(read->variable)) {
    return DualBeeswarmSpec(dataset_id, SplitOf(read->variable));
  }
  if (rule == kReadMeanReference && read) {
    VisSpec s = BeeswarmSpec(dataset_id, read->variable.feature, read->variable.facet);
    AnnotationLayer l;
    l.kind = LayerKind::kReferenceLine;
    l.channel = Channel::kX;
    l.at = read->threshold;
    s.layers.push_back(l);
    return s;
  }
  if ((rule == kReadVariance || rule == kReadIdentity) && read) {
    return BeeswarmSpec(dataset_id, read->variable.feature, read->variable.facet);
  }
  if (rule == kComparisonCountDual && comp && Counting(comp->left) && Counting(comp->right) &&
      comp->left.feature == comp->right.feature && comp->left.facet == comp->right.facet) {
    return DualBeeswarmSpec(dataset_id, SplitOf(comp->left));
  }
  if (rule == kComparisonBar && comp && comp->left.aggregator != Aggregator::kIdentity &&
      comp->right.aggregator != Aggregator::kIdentity) {
    return PairedBarSpec(dataset_id, {comp->left, comp->right});
  }
  if (rule == kComparisonIdentity && comp) {
    TVariable x = PerRow(comp->left), y = PerRow(comp->right);
    if (x == y) return BeeswarmSpec(dataset_id, x.feature, x.facet);
    return ScatterSpec(dataset_id, x, y);
  }
  return std::nullopt;
}

std::string RuleText(const std::string& rule) {
  if (rule == kCorrelationScatter) {
    return "Relationships between two per-row variables read best as a scatter plot.";
  }
  if (rule == kReadCountDual || rule == kComparisonCountDual) {
    return "Counts of rows on either side of a predicate read best as a dual beeswarm, where "
           "point quantity shows as shape area.";
  }
  if (rule == kReadMeanReference) {
    return "A distribution with a dashed line at the claimed threshold shows where the "
           "statistic sits.";
  }
  if (rule == kReadVariance || rule == kReadIdentity) {
    return "A beeswarm shows the spread of a single variable.";
  }
  if (rule == kComparisonBar) return "Two aggregated values compare best as paired bars.";
  return "Per-row variables are compared in a scatter plot.";
}

bool SameBindings(const VisSpec& a, const VisSpec& b) {
  if (a.mark != b.mark || a.split != b.split || a.aggregates != b.aggregates) return false;
  if (a.encodings.size() != b.encodings.size()) return false;
  for (const auto& [ch, e] : a.encodings) {
    auto it = b.encodings.find(ch);
    if (it == b.encodings.end() || !(it->second.field == e.field)) return false;
  }
  return true;
}

Recommendation Finish(const std::string& rule, std::optional<VisSpec> target,
                      const VisSpec& current, bool force, std::string text) {
  Recommendation rec;
  rec.rationale.rule_id = rule;
  if (target && SameBindings(*target, current) && !force) {
    rec.rationale.text = "The current chart already shows this view; annotations only.";
    return rec;
  }
  rec.rationale.text = std::move(text);
  rec.spec = std::move(target);
  return rec;
}

}  // namespace

const std::vector<std::string>& RuleIds() {
  static const std::vector<std::string> kIds = {
      kCorrelationScatter, kReadCountDual,        kReadMeanReference, kReadVariance,
      kReadIdentity,       kComparisonCountDual, kComparisonBar,      kComparisonIdentity};
  return kIds;
}

Recommendation Recommend(const BoundInsight& bound, const VisSpec& current, bool force) {
  const std::string rule = DefaultRule(bound.insight);
  auto target = BuildForRule(rule, bound.insight, current.data_ref.dataset_id);
  if (!target) {
    throw Error(ErrorCode::kInvariantViolation, "rule " + rule + " produced no chart");
  }
  return Finish(rule, std::move(target), current, force, RuleText(rule));
}

Recommendation RecommendGuided(const BoundInsight& bound, const VisSpec& current,
                               ChatClient& client, bool force) {
  std::string menu;
  for (const auto& id : RuleIds()) menu += "- " + id + ": " + RuleText(id) + "\n";
  const std::vector<ChatMessage> messages = {
      {"system",
       "You choose a chart to verify an insight about a model's feature attributions. Follow "
       "these design guidelines: use scatter plots rather than bar charts for correlations; use "
       "dual beeswarm plots when the number of rows matters; use paired bars to compare two "
       "aggregates. Answer with one rule id only."},
      {"user", "Insight (JSON): " + Serialize(bound.insight) + "\nCurrent chart: " +
                   std::string(ToString(current.mark)) + "\nRule ids:\n" + menu}};
  std::string answer;
  try {
    answer = client.Complete(messages, "recommend");
  } catch (const Error&) {
    return Recommend(bound, current, force);
  }
  // The longest id contained in the answer wins ("comparison->paired-bar"
  // must not be read as a prefix match of another id).
  std::string chosen;
  for (const auto& id : RuleIds()) {
    if (answer.find(id) != std::string::npos && id.size() > chosen.size()) chosen = id;
  }
  if (!chosen.empty()) {
    if (auto spec = BuildForRule(chosen, bound.insight, current.data_ref.dataset_id)) {
      return Finish(chosen, std::move(spec), current, force,
                    RuleText(chosen) + " (chosen by the guided recommender)");
    }
  }
  return Recommend(bound, current, force);
}

// ---------------------------------------------------------------------------
// Mapping

MappingResult Map(const BoundInsight& insight, const VisSpec& spec, const MapperOptions& options) {
  AnnotateResult ann = Annotate(insight, spec, options);
  Recommendation rec = Recommend(insight, spec, ann.no_match);

  MappingResult out;
  out.coordination = {spec.data_ref.dataset_id, ConditionsOf(insight.insight)};
  out.annotated_spec = std::move(ann.spec);
  out.annotated_spec.data_ref = out.coordination;
  if (rec.spec) {
    rec.spec->data_ref = out.coordination;
    out.recommended_spec = std::move(rec.spec);
  }
  out.rationale = std::move(rec.rationale);
  out.no_match = ann.no_match;
  return out;
}

json ToJson(const MappingResult& m) {
  json filter = json::array();
  for (const auto& c : m.coordination.filter) filter.push_back(ToJson(c));
  return {{"annotated_spec", ToJson(m.annotated_spec)},
          {"recommended_spec", m.recommended_spec ? ToJson(*m.recommended_spec) : json(nullptr)},
          {"rationale", {{"rule_id", m.rationale.rule_id}, {"text", m.rationale.text}}},
          {"rule_id", m.rationale.rule_id},
          {"no_match", m.no_match},
          {"coordination",
           {{"dataset_id", m.coordination.dataset_id}, {"filter", std::move(filter)}}}};
}

MappingResult MappingFromJson(const json& j) {
  MappingResult m;
  m.annotated_spec = VisSpecFromJson(j.at("annotated_spec"));
  if (j.contains("recommended_spec") && !j["recommended_spec"].is_null()) {
    m.recommended_spec = VisSpecFromJson(j["recommended_spec"]);
  }
  m.rationale.rule_id = j.at("rationale").at("rule_id").get<std::string>();
  m.rationale.text = j.at("rationale").at("text").get<std::string>();
  m.no_match = j.value("no_match", false);
  m.coordination.dataset_id = j.at("coordination").at("dataset_id").get<std::string>();
  m.coordination.filter = ConditionsFromJson(j.at("coordination").at("filter"));
  return m;
}

json CompileMapping(const MappingResult& m, const ExplanationTable& table) {
  return {{"annotated", Compile(m.annotated_spec, table)},
          {"recommended",
           m.recommended_spec ? Compile(*m.recommended_spec, table) : json(nullptr)}};
}

bool OnlyAppendedLayers(const VisSpec& base, const VisSpec& derived) {
  if (base.mark != derived.mark || base.encodings != derived.encodings ||
      base.title != derived.title || base.split != derived.split ||
      base.aggregates != derived.aggregates || base.bin_width != derived.bin_width ||
      base.data_ref.dataset_id != derived.data_ref.dataset_id) {
    return false;
  }
  if (derived.layers.size() < base.layers.size()) return false;
  return std::equal(base.layers.begin(), base.layers.end(), derived.layers.begin());
}

}  // namespace xlint
