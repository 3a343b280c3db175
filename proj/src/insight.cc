#include "xlint/insight.h"

#include <algorithm>
#include <set>

#include "xlint/error.h"
#include "xlint/text_util.h"

namespace xlint {

using nlohmann::json;

InsightType TypeOf(const StructuredInsight& insight) {
  return static_cast<InsightType>(insight.index());
}

const Conditions& ConditionsOf(const StructuredInsight& insight) {
  return std::visit([](const auto& i) -> const Conditions& { return i.conditions; }, insight);
}

Conditions& ConditionsOf(StructuredInsight& insight) {
  return std::visit([](auto& i) -> Conditions& { return i.conditions; }, insight);
}

std::string_view ToString(InsightType type) {
  switch (type) {
    case InsightType::kRead: return "read";
    case InsightType::kCorrelation: return "correlation";
    case InsightType::kComparison: return "comparison";
  }
  return "read";
}

std::string_view ToString(Direction direction) {
  switch (direction) {
    case Direction::kPositive: return "positive";
    case Direction::kNegative: return "negative";
    case Direction::kNone: return "none";
  }
  return "none";
}

std::string_view ToString(Relation relation) {
  switch (relation) {
    case Relation::kGreater: return "greater";
    case Relation::kLess: return "less";
    case Relation::kApproxEqual: return "approx-equal";
  }
  return "greater";
}

std::string_view ToString(SlotState state) {
  switch (state) {
    case SlotState::kFilled: return "filled";
    case SlotState::kMissing: return "missing";
    case SlotState::kAmbiguous: return "ambiguous";
  }
  return "missing";
}

std::optional<InsightType> ParseInsightType(std::string_view text) {
  for (auto t : {InsightType::kRead, InsightType::kCorrelation, InsightType::kComparison}) {
    if (ToString(t) == text) return t;
  }
  return std::nullopt;
}

std::optional<Direction> ParseDirection(std::string_view text) {
  for (auto d : {Direction::kPositive, Direction::kNegative, Direction::kNone}) {
    if (ToString(d) == text) return d;
  }
  return std::nullopt;
}

std::optional<Relation> ParseRelation(std::string_view text) {
  for (auto r : {Relation::kGreater, Relation::kLess, Relation::kApproxEqual}) {
    if (ToString(r) == text) return r;
  }
  return std::nullopt;
}

json ToJson(const SlotStatus& slot) {
  json j = {{"path", slot.path}, {"state", ToString(slot.state)}};
  j["candidates"] = slot.candidates.empty() ? json(nullptr) : json(slot.candidates);
  return j;
}

SlotStatus SlotFromJson(const json& j) {
  SlotStatus s;
  s.path = j.at("path").get<std::string>();
  const std::string state = j.at("state").get<std::string>();
  s.state = state == "filled"    ? SlotState::kFilled
            : state == "missing" ? SlotState::kMissing
                                 : SlotState::kAmbiguous;
  if (auto it = j.find("candidates"); it != j.end() && it->is_array()) {
    s.candidates = it->get<std::vector<std::string>>();
  }
  return s;
}

// ---------------------------------------------------------------------------
// Validation

namespace {

const std::vector<std::string> kFacetNames = {"value", "attribution"};
const std::vector<std::string> kAggregatedNames = {"mean", "variance", "min", "max",
                                                   "count", "fraction"};
const std::vector<std::string> kPredicateComparators = {"<", "<=", ">", ">=", "="};
const std::vector<std::string> kReadComparators = {"<", "<=", ">", ">=", "~="};
const std::vector<std::string> kConditionOps = {"<", "<=", ">", ">=", "=", "in-range"};
const std::vector<std::string> kDirections = {"positive", "negative", "none"};
const std::vector<std::string> kRelations = {"greater", "less", "approx-equal"};

const json* Field(const json& obj, const char* key) {
  if (!obj.is_object()) return nullptr;
  auto it = obj.find(key);
  if (it == obj.end() || it->is_null()) return nullptr;
  return &*it;
}

class Validator {
 public:
  std::vector<SlotStatus> slots;

  void Missing(std::string path, std::vector<std::string> candidates = {}) {
    slots.push_back({std::move(path), SlotState::kMissing, std::move(candidates)});
  }
  void Ambiguous(std::string path, std::vector<std::string> candidates = {}) {
    slots.push_back({std::move(path), SlotState::kAmbiguous, std::move(candidates)});
  }

  // Enumerated string field.
  template <typename T, typename ParseFn>
  std::optional<T> Enum(const json& obj, const char* key, const std::string& path,
                        const std::vector<std::string>& allowed, ParseFn parse) {
    const json* v = Field(obj, key);
    if (!v) {
      Missing(path, allowed);
      return std::nullopt;
    }
    if (v->is_string()) {
      if (auto parsed = parse(v->get<std::string>())) {
        std::string canonical(ToString(*parsed));
        if (std::find(allowed.begin(), allowed.end(), canonical) != allowed.end()) {
          return parsed;
        }
      }
    }
    Ambiguous(path, allowed);
    return std::nullopt;
  }

  std::optional<double> Number(const json& obj, const char* key, const std::string& path) {
    const json* v = Field(obj, key);
    if (!v) {
      Missing(path);
      return std::nullopt;
    }
    if (!v->is_number()) {
      Ambiguous(path);
      return std::nullopt;
    }
    return v->get<double>();
  }

  std::optional<TVariable> Variable(const json& parent, const char* key,
                                    const std::string& path, bool per_row) {
    const json* v = Field(parent, key);
    if (!v) {
      Missing(path);
      return std::nullopt;
    }
    if (!v->is_object()) {
      Ambiguous(path);
      return std::nullopt;
    }
    TVariable out;
    bool ok = true;
    const json* feature = Field(*v, "feature");
    if (!feature) {
      Missing(path + ".feature");
      ok = false;
    } else if (!feature->is_string() || Trim(feature->get<std::string>()).empty()) {
      Ambiguous(path + ".feature");
      ok = false;
    } else {
      out.feature = feature->get<std::string>();
    }

    auto facet = Enum<Facet>(*v, "facet", path + ".facet", kFacetNames, ParseFacet);
    if (facet) out.facet = *facet; else ok = false;

    std::optional<Aggregator> agg;
    if (per_row) {
      const json* a = Field(*v, "aggregator");
      if (!a) {
        agg = Aggregator::kIdentity;
      } else if (*a == "identity") {
        agg = Aggregator::kIdentity;
      } else {
        Ambiguous(path + ".aggregator", {"identity"});
      }
    } else {
      agg = Enum<Aggregator>(*v, "aggregator", path + ".aggregator", kAggregatedNames,
                             ParseAggregator);
    }
    if (agg) out.aggregator = *agg; else ok = false;

    const json* pred = Field(*v, "predicate");
    const bool need = agg && NeedsPredicate(*agg);
    const bool forbid = agg && !NeedsPredicate(*agg);
    if (pred && forbid) {
      Ambiguous(path + ".predicate");
      ok = false;
    } else if (!pred && need) {
      Missing(path + ".predicate");
      ok = false;
    } else if (pred) {
      if (!pred->is_object()) {
        Ambiguous(path + ".predicate");
        ok = false;
      } else {
        auto cmp = Enum<Comparator>(*pred, "comparator", path + ".predicate.comparator",
                                    kPredicateComparators, ParseComparator);
        auto constant = Number(*pred, "constant", path + ".predicate.constant");
        if (cmp && constant) {
          out.predicate = Predicate{*cmp, *constant};
        } else {
          ok = false;
        }
      }
    }
    if (!ok) return std::nullopt;
    return out;
  }

  std::optional<Conditions> ConditionList(const json& doc, const std::string& type) {
    const std::string base = type + ".conditions";
    const json* list = Field(doc, "conditions");
    Conditions out;
    if (!list) return out;
    if (!list->is_array()) {
      Ambiguous(base);
      return std::nullopt;
    }
    bool ok = true;
    for (std::size_t i = 0; i < list->size(); ++i) {
      const std::string path = base + "[" + std::to_string(i) + "]";
      const json& c = (*list)[i];
      if (!c.is_object()) {
        Ambiguous(path);
        ok = false;
        continue;
      }
      TCondition cond;
      bool cond_ok = true;
      const json* feature = Field(c, "feature");
      if (!feature) {
        Missing(path + ".feature");
        cond_ok = false;
      } else if (!feature->is_string() || Trim(feature->get<std::string>()).empty()) {
        Ambiguous(path + ".feature");
        cond_ok = false;
      } else {
        cond.feature = feature->get<std::string>();
      }
      if (const json* facet = Field(c, "facet"); facet && *facet != "value") {
        Ambiguous(path + ".facet", {"value"});
        cond_ok = false;
      }
      auto op = Enum<ConditionOp>(c, "op", path + ".op", kConditionOps, ParseConditionOp);
      if (op) cond.op = *op; else cond_ok = false;

      const json* bounds = Field(c, "bounds");
      if (!bounds) {
        Missing(path + ".bounds");
        cond_ok = false;
      } else if (!bounds->is_array() || bounds->empty()) {
        Ambiguous(path + ".bounds");
        cond_ok = false;
      } else if (op) {
        const std::size_t arity = *op == ConditionOp::kInRange ? 2 : 1;
        bool bounds_ok = bounds->size() == arity;
        if (bounds_ok && *op == ConditionOp::kEqual && (*bounds)[0].is_string()) {
          cond.category = (*bounds)[0].get<std::string>();
        } else if (bounds_ok) {
          for (const json& b : *bounds) {
            if (!b.is_number()) bounds_ok = false; else cond.bounds.push_back(b.get<double>());
          }
          if (bounds_ok && arity == 2 && cond.bounds[0] > cond.bounds[1]) bounds_ok = false;
        }
        if (!bounds_ok) {
          Ambiguous(path + ".bounds");
          cond_ok = false;
        }
      }
      if (cond_ok) out.push_back(std::move(cond)); else ok = false;
    }
    if (!ok) return std::nullopt;
    return out;
  }
};

}  // namespace

ValidationResult Validate(const json& document) {
  if (!document.is_object()) {
    throw Error(ErrorCode::kSchemaViolation, "insight document must be an object", "$");
  }
  if (const json* schema = Field(document, "schema"); schema && *schema != kInsightSchema) {
    throw Error(ErrorCode::kSchemaViolation, "unsupported schema version", "$.schema");
  }
  const json* tag = Field(document, "type");
  std::optional<InsightType> type;
  if (tag && tag->is_string()) type = ParseInsightType(tag->get<std::string>());
  if (!type) {
    throw Error(ErrorCode::kUnknownInsightType,
                tag ? "unknown insight type " + tag->dump() : "missing insight type", "$.type");
  }

  Validator v;
  const std::string t(ToString(*type));
  ValidationResult result;
  switch (*type) {
    case InsightType::kRead: {
      auto var = v.Variable(document, "variable", t + ".variable", false);
      auto cmp = v.Enum<Comparator>(document, "comparator", t + ".comparator",
                                    kReadComparators, ParseComparator);
      auto threshold = v.Number(document, "threshold", t + ".threshold");
      auto conds = v.ConditionList(document, t);
      if (var && cmp && threshold && conds) {
        result.insight = ReadInsight{*var, *cmp, *threshold, *conds};
      }
      break;
    }
    case InsightType::kCorrelation: {
      auto x = v.Variable(document, "x", t + ".x", true);
      auto y = v.Variable(document, "y", t + ".y", true);
      if (x && y && x->feature == y->feature && x->facet == y->facet) {
        v.Ambiguous(t + ".y");
        y.reset();
      }
      auto dir = v.Enum<Direction>(document, "direction", t + ".direction", kDirections,
                                   ParseDirection);
      auto conds = v.ConditionList(document, t);
      if (x && y && dir && conds) {
        result.insight = CorrelationInsight{*x, *y, *dir, *conds};
      }
      break;
    }
    case InsightType::kComparison: {
      auto left = v.Variable(document, "left", t + ".left", false);
      auto right = v.Variable(document, "right", t + ".right", false);
      auto rel = v.Enum<Relation>(document, "relation", t + ".relation", kRelations,
                                  ParseRelation);
      auto conds = v.ConditionList(document, t);
      if (left && right && rel && conds) {
        result.insight = ComparisonInsight{*left, *right, *rel, *conds};
      }
      break;
    }
  }
  result.slots = std::move(v.slots);
  if (!result.slots.empty()) result.insight.reset();
  return result;
}

Conditions ConditionsFromJson(const json& list) {
  Validator v;
  auto out = v.ConditionList(json{{"conditions", list}}, "filter");
  if (!out || !v.slots.empty()) {
    throw Error(ErrorCode::kSchemaViolation, "invalid condition list", v.slots.front().path);
  }
  return *out;
}

TVariable VariableFromJson(const json& j) {
  Validator v;
  const bool identity = Field(j, "aggregator") && j["aggregator"] == "identity";
  auto out = v.Variable(json{{"variable", j}}, "variable", "variable", identity);
  if (!out || !v.slots.empty()) {
    throw Error(ErrorCode::kSchemaViolation, "invalid variable",
                v.slots.empty() ? "variable" : v.slots.front().path);
  }
  return *out;
}

// ---------------------------------------------------------------------------
// Serialization

json ToJson(const TVariable& variable) {
  json j = {{"feature", variable.feature},
            {"facet", ToString(variable.facet)},
            {"aggregator", ToString(variable.aggregator)}};
  if (variable.predicate) {
    j["predicate"] = {{"comparator", ToString(variable.predicate->comparator)},
                      {"constant", variable.predicate->constant}};
  } else {
    j["predicate"] = nullptr;
  }
  return j;
}

json ToJson(const TCondition& condition) {
  json bounds = json::array();
  if (condition.category) {
    bounds.push_back(*condition.category);
  } else {
    for (double b : condition.bounds) bounds.push_back(b);
  }
  return {{"feature", condition.feature},
          {"facet", "value"},
          {"op", ToString(condition.op)},
          {"bounds", std::move(bounds)}};
}

namespace {
json ConditionsJson(const Conditions& conditions) {
  if (conditions.empty()) return nullptr;
  json out = json::array();
  for (const auto& c : conditions) out.push_back(ToJson(c));
  return out;
}
}  // namespace

json ToJson(const StructuredInsight& insight) {
  json j;
  j["schema"] = kInsightSchema;
  j["type"] = ToString(TypeOf(insight));
  std::visit(
      [&](const auto& i) {
        using T = std::decay_t<decltype(i)>;
        if constexpr (std::is_same_v<T, ReadInsight>) {
          j["variable"] = ToJson(i.variable);
          j["comparator"] = ToString(i.comparator);
          j["threshold"] = i.threshold;
        } else if constexpr (std::is_same_v<T, CorrelationInsight>) {
          j["x"] = ToJson(i.x);
          j["y"] = ToJson(i.y);
          j["direction"] = ToString(i.direction);
        } else {
          j["left"] = ToJson(i.left);
          j["right"] = ToJson(i.right);
          j["relation"] = ToString(i.relation);
        }
        j["conditions"] = ConditionsJson(i.conditions);
      },
      insight);
  return j;
}

std::string Serialize(const StructuredInsight& insight) { return ToJson(insight).dump(); }

std::string SlotPathToJsonPath(const std::string& slot_path) {
  auto dot = slot_path.find('.');
  if (dot == std::string::npos) return "$";
  return "$." + slot_path.substr(dot + 1);
}

StructuredInsight FromJson(const json& document) {
  ValidationResult r;
  try {
    r = Validate(document);
  } catch (const Error& e) {
    if (e.code() == ErrorCode::kUnknownInsightType) {
      throw Error(ErrorCode::kSchemaViolation, "unknown insight type", "$.type");
    }
    throw;
  }
  if (!r.ok()) {
    const SlotStatus& first = r.slots.front();
    throw Error(ErrorCode::kSchemaViolation,
                std::string(ToString(first.state)) + " field", SlotPathToJsonPath(first.path));
  }
  return *r.insight;
}

StructuredInsight Deserialize(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw Error(ErrorCode::kSchemaViolation, e.what(), "$");
  }
  return FromJson(doc);
}

// ---------------------------------------------------------------------------
// Binding

FeatureResolution ResolveFeature(const std::string& reference, const ExplanationTable& table) {
  FeatureResolution out;
  const auto& features = table.features();
  if (table.FeatureIndex(reference)) {
    out.name = reference;
    return out;
  }
  const std::string folded = ToLower(Trim(reference));
  auto decide = [&](const std::vector<std::string>& hits) {
    if (hits.size() == 1) {
      out.name = hits.front();
      out.state = SlotState::kFilled;
      return true;
    }
    if (hits.size() > 1) {
      out.state = SlotState::kAmbiguous;
      out.candidates = hits;
      return true;
    }
    return false;
  };

  std::vector<std::string> hits;
  for (const auto& f : features) {
    if (ToLower(f.name) == folded) hits.push_back(f.name);
  }
  if (decide(hits)) return out;

  if (!folded.empty()) {
    for (const auto& f : features) {
      if (f.description && ToLower(*f.description).find(folded) != std::string::npos) {
        hits.push_back(f.name);
      }
    }
    if (decide(hits)) return out;
  }

  out.state = SlotState::kMissing;
  for (const auto& f : features) out.candidates.push_back(f.name);
  return out;
}

namespace {

std::vector<std::string> VariableKeys(InsightType type) {
  switch (type) {
    case InsightType::kRead: return {"variable"};
    case InsightType::kCorrelation: return {"x", "y"};
    case InsightType::kComparison: return {"left", "right"};
  }
  return {};
}

std::vector<std::string> Categories(const ExplanationTable& table, std::size_t index) {
  std::set<std::string> seen;
  for (const Row& row : table.rows()) {
    if (const auto* s = std::get_if<std::string>(&row.values[index])) seen.insert(*s);
  }
  return {seen.begin(), seen.end()};
}

void AllFeatureNames(const ExplanationTable& table, std::vector<std::string>& out) {
  for (const auto& f : table.features()) out.push_back(f.name);
}

// Resolves doc[key].feature in place; returns the bound feature index.
std::optional<std::size_t> ResolveRef(json& obj, const std::string& path,
                                      const ExplanationTable& table,
                                      std::vector<SlotStatus>& slots) {
  auto it = obj.find("feature");
  if (it == obj.end() || it->is_null()) {
    SlotStatus s{path + ".feature", SlotState::kMissing, {}};
    AllFeatureNames(table, s.candidates);
    slots.push_back(std::move(s));
    return std::nullopt;
  }
  if (!it->is_string()) return std::nullopt;  // reported by Validate
  FeatureResolution r = ResolveFeature(it->get<std::string>(), table);
  if (!r.name) {
    slots.push_back({path + ".feature", r.state, r.candidates});
    return std::nullopt;
  }
  *it = *r.name;
  return table.FeatureIndex(*r.name);
}

}  // namespace

BindResult BindDocument(const json& document, const ExplanationTable& table) {
  BindResult out;
  out.document = document;
  if (!document.is_object()) {
    Validate(document);  // throws
  }
  const json* tag = Field(document, "type");
  std::optional<InsightType> type;
  if (tag && tag->is_string()) type = ParseInsightType(tag->get<std::string>());
  if (!type) Validate(document);  // throws UnknownInsightType

  const std::string t(ToString(*type));
  std::vector<SlotStatus> bind_slots;
  json& doc = out.document;

  for (const std::string& key : VariableKeys(*type)) {
    auto v = doc.find(key);
    if (v == doc.end() || !v->is_object()) continue;
    const std::string path = t + "." + key;
    auto idx = ResolveRef(*v, path, table, bind_slots);
    if (!idx) continue;
    if (table.features()[*idx].kind == FeatureKind::kCategorical) {
      auto facet = v->find("facet");
      if (facet != v->end() && *facet == "value") {
        bind_slots.push_back({path + ".facet", SlotState::kAmbiguous, {"attribution"}});
      }
    }
  }

  if (auto conds = doc.find("conditions"); conds != doc.end() && conds->is_array()) {
    for (std::size_t i = 0; i < conds->size(); ++i) {
      json& c = (*conds)[i];
      if (!c.is_object()) continue;
      const std::string path = t + ".conditions[" + std::to_string(i) + "]";
      auto idx = ResolveRef(c, path, table, bind_slots);
      if (!idx) continue;
      const json* op = Field(c, "op");
      const json* bounds = Field(c, "bounds");
      if (table.features()[*idx].kind == FeatureKind::kCategorical) {
        if (op && *op != "=") {
          bind_slots.push_back({path + ".op", SlotState::kAmbiguous, {"="}});
        }
        const auto cats = Categories(table, *idx);
        bool valid = bounds && bounds->is_array() && bounds->size() == 1 &&
                     (*bounds)[0].is_string() &&
                     std::find(cats.begin(), cats.end(), (*bounds)[0].get<std::string>()) !=
                         cats.end();
        if (bounds && !valid) {
          bind_slots.push_back({path + ".bounds", SlotState::kAmbiguous, cats});
        }
      } else if (bounds && bounds->is_array()) {
        bool has_string = std::any_of(bounds->begin(), bounds->end(),
                                      [](const json& b) { return b.is_string(); });
        if (has_string) bind_slots.push_back({path + ".bounds", SlotState::kAmbiguous, {}});
      }
    }
  }

  ValidationResult v = Validate(doc);
  // Bind-level findings take precedence over structural ones at the same
  // path.
  std::vector<SlotStatus> merged = bind_slots;
  for (auto& s : v.slots) {
    bool dup = std::any_of(merged.begin(), merged.end(),
                           [&](const SlotStatus& m) { return m.path == s.path; });
    if (!dup) merged.push_back(std::move(s));
  }
  std::stable_sort(merged.begin(), merged.end(), [](const SlotStatus& a, const SlotStatus& b) {
    return a.path < b.path;
  });
  out.slots = std::move(merged);
  if (out.slots.empty() && v.insight) out.bound = BoundInsight{*v.insight};
  return out;
}

BindResult Bind(const StructuredInsight& insight, const ExplanationTable& table) {
  return BindDocument(ToJson(insight), table);
}

}  // namespace xlint
