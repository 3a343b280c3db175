#include "xlint/extractor.h"

#include <cstdlib>
#include <fstream>
#include <sstream>

#include "xlint/error.h"
#include "xlint/grammar.h"
#include "xlint/text_util.h"

namespace xlint {

using nlohmann::json;

void ExtractorConfig::Check() const {
  if (mode == Mode::kFixture && fixture_dir.empty()) {
    throw Error(ErrorCode::kMalformedInput, "fixture mode requires fixture_dir");
  }
  if (!(temperature >= 0 && temperature <= 2)) {
    throw Error(ErrorCode::kMalformedInput, "temperature must be in [0, 2]");
  }
  if (max_repair_retries < 0) {
    throw Error(ErrorCode::kMalformedInput, "max_repair_retries must be non-negative");
  }
  if (timeout_seconds <= 0) throw Error(ErrorCode::kMalformedInput, "timeout must be positive");
}

ExtractorConfig ExtractorConfig::FromEnv() {
  ExtractorConfig c;
  auto env = [](const char* name) -> std::optional<std::string> {
    const char* v = std::getenv(name);
    if (!v || !*v) return std::nullopt;
    return std::string(v);
  };
  auto number = [](const std::string& s, const char* name) {
    auto v = ParseNumber(s);
    if (!v) throw Error(ErrorCode::kMalformedInput, std::string(name) + " is not a number");
    return *v;
  };
  if (auto v = env("XLINT_LLM_ENDPOINT")) c.provider_endpoint = *v;
  if (auto v = env("XLINT_LLM_MODEL")) c.model_name = *v;
  if (auto v = env("XLINT_LLM_API_KEY_ENV")) c.api_key_env = *v;
  if (auto v = env("XLINT_LLM_TEMPERATURE")) c.temperature = number(*v, "XLINT_LLM_TEMPERATURE");
  if (auto v = env("XLINT_LLM_MAX_REPAIRS")) {
    c.max_repair_retries = static_cast<int>(number(*v, "XLINT_LLM_MAX_REPAIRS"));
  }
  if (auto v = env("XLINT_LLM_MODE")) {
    if (*v != "live" && *v != "fixture") {
      throw Error(ErrorCode::kMalformedInput, "XLINT_LLM_MODE must be live or fixture");
    }
    c.mode = *v == "live" ? Mode::kLive : Mode::kFixture;
  }
  if (auto v = env("XLINT_LLM_FIXTURE_DIR")) c.fixture_dir = *v;
  if (auto v = env("XLINT_LLM_TIMEOUT")) {
    c.timeout_seconds = static_cast<int>(number(*v, "XLINT_LLM_TIMEOUT"));
  }
  return c;
}

// ---------------------------------------------------------------------------
// Trace JSON

json ToJson(const ExtractionTrace& t) {
  json repairs = json::array();
  for (const auto& r : t.repairs) {
    repairs.push_back({{"stage", r.stage},
                       {"reason", r.reason},
                       {"prompt", r.prompt},
                       {"raw_response", r.raw_response}});
  }
  return {{"stage1",
           {{"prompt", t.stage1.prompt},
            {"raw_response", t.stage1.raw_response},
            {"classified_type", t.stage1.classified_type
                                    ? json(ToString(*t.stage1.classified_type))
                                    : json(nullptr)},
            {"has_condition", t.stage1.has_condition}}},
          {"stage2",
           {{"prompt", t.stage2.prompt},
            {"raw_response", t.stage2.raw_response},
            {"document", t.stage2.document}}},
          {"repairs", std::move(repairs)},
          {"fallback", t.fallback ? json(*t.fallback) : json(nullptr)}};
}

ExtractionTrace TraceFromJson(const json& j) {
  ExtractionTrace t;
  const json& s1 = j.at("stage1");
  t.stage1.prompt = s1.value("prompt", "");
  t.stage1.raw_response = s1.value("raw_response", "");
  if (s1.contains("classified_type") && s1["classified_type"].is_string()) {
    t.stage1.classified_type = ParseInsightType(s1["classified_type"].get<std::string>());
  }
  t.stage1.has_condition = s1.value("has_condition", false);
  if (j.contains("stage2") && j["stage2"].is_object()) {
    const json& s2 = j["stage2"];
    t.stage2.prompt = s2.value("prompt", "");
    t.stage2.raw_response = s2.value("raw_response", "");
    if (s2.contains("document")) t.stage2.document = s2["document"];
  }
  if (j.contains("repairs")) {
    for (const json& r : j["repairs"]) {
      t.repairs.push_back({r.value("stage", ""), r.value("reason", ""), r.value("prompt", ""),
                           r.value("raw_response", "")});
    }
  }
  if (j.contains("fallback") && j["fallback"].is_string()) {
    t.fallback = j["fallback"].get<std::string>();
  }
  return t;
}

// ---------------------------------------------------------------------------
// Fixtures

std::string FixtureName(std::string_view text) { return Fnv1aHex(text) + ".json"; }

json FixtureJson(std::string_view text, const ExtractionTrace& trace) {
  return {{"text", std::string(text)}, {"trace", ToJson(trace)}};
}

std::shared_ptr<ScriptedChatClient> LoadFixture(const std::string& dir, std::string_view text) {
  const std::string path = dir + "/" + FixtureName(text);
  std::ifstream in(path);
  if (!in) {
    throw Error(ErrorCode::kProviderUnavailable, "no fixture for this text", path);
  }
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kProviderUnavailable, std::string("unreadable fixture: ") + e.what(),
                path);
  }
  const json& t = j.at("trace");
  auto client = std::make_shared<ScriptedChatClient>();
  if (t.contains("stage1") && !t["stage1"].value("raw_response", "").empty()) {
    client->Add("classify", t["stage1"]["raw_response"].get<std::string>());
  }
  // Repairs replay in their recorded order after each stage's first reply.
  if (t.contains("stage2") && !t["stage2"].value("raw_response", "").empty()) {
    client->Add("fill", t["stage2"]["raw_response"].get<std::string>());
  }
  for (const json& r : t.value("repairs", json::array())) {
    client->Add(r.at("stage").get<std::string>(), r.at("raw_response").get<std::string>());
  }
  return client;
}

// ---------------------------------------------------------------------------
// Prompts

namespace {

constexpr const char* kSystemPrompt =
    "You turn a user's observation about a machine-learning model's feature attributions "
    "into structured data. Respond with JSON only, no prose and no code fences.";

std::string FeatureList(const ExplanationTable& table) {
  std::string out;
  for (const auto& f : table.features()) {
    out += "- " + f.name + " (" + (f.kind == FeatureKind::kCategorical ? "categorical" : "numeric");
    if (f.unit) out += ", unit " + *f.unit;
    if (f.description) out += ", " + *f.description;
    out += ")\n";
  }
  return out;
}

constexpr const char* kTypeDefinitions =
    "Insight types:\n"
    "- read: extracts one statistic (mean, variance, min, max, count, fraction) of a feature's "
    "values or attributions and compares it with a constant. Example: \"For more than 65% of "
    "patients, bmi has a positive attribution.\"\n"
    "- correlation: relates two per-row variables (a feature's values or attributions) and "
    "claims a positive, negative or no correlation. Example: \"As age increases, the "
    "attribution of age tends to increase.\"\n"
    "- comparison: compares two aggregated variables with greater, less or approximately "
    "equal. Example: \"The number of patients with a positive attribution for bp is greater "
    "than the number with a negative attribution.\"\n"
    "A claim that a feature matters or contributes for many rows is a comparison of counts of "
    "positive and negative attributions.\n"
    "A condition is a restriction of the rows by a feature's value range, such as \"when age is "
    "above 65\".\n";

std::string TemplateFor(InsightType type) {
  const std::string variable =
      "{\"feature\": <feature name>, \"facet\": \"value\" | \"attribution\", \"aggregator\": "
      "\"mean\" | \"variance\" | \"min\" | \"max\" | \"count\" | \"fraction\", \"predicate\": "
      "{\"comparator\": \"<\" | \"<=\" | \">\" | \">=\" | \"=\", \"constant\": <number>} | null}";
  const std::string per_row =
      "{\"feature\": <feature name>, \"facet\": \"value\" | \"attribution\", \"aggregator\": "
      "\"identity\", \"predicate\": null}";
  const std::string conditions =
      "\"conditions\": [{\"feature\": <feature name>, \"facet\": \"value\", \"op\": \"<\" | "
      "\"<=\" | \">\" | \">=\" | \"=\" | \"in-range\", \"bounds\": [<number>] | [<low>, <high>] "
      "| [<category>]}] | null";
  switch (type) {
    case InsightType::kRead:
      return "{\"schema\": \"insight/v1\", \"type\": \"read\", \"variable\": " + variable +
             ", \"comparator\": \"<\" | \"<=\" | \">\" | \">=\" | \"~=\", \"threshold\": "
             "<number>, " + conditions + "}";
    case InsightType::kCorrelation:
      return "{\"schema\": \"insight/v1\", \"type\": \"correlation\", \"x\": " + per_row +
             ", \"y\": " + per_row +
             ", \"direction\": \"positive\" | \"negative\" | \"none\", " + conditions + "}";
    case InsightType::kComparison:
      return "{\"schema\": \"insight/v1\", \"type\": \"comparison\", \"left\": " + variable +
             ", \"right\": " + variable +
             ", \"relation\": \"greater\" | \"less\" | \"approx-equal\", " + conditions + "}";
  }
  return "";
}

}  // namespace

std::vector<ChatMessage> ClassifyPrompt(std::string_view text, const ExplanationTable& table) {
  std::string user = std::string(kTypeDefinitions) + "\nFeatures:\n" + FeatureList(table) +
                     "\nThink step by step about what the observation claims, then answer with "
                     "only {\"type\": \"read\" | \"correlation\" | \"comparison\", "
                     "\"has_condition\": true | false}.\n\nObservation: " +
                     std::string(text);
  return {{"system", kSystemPrompt}, {"user", std::move(user)}};
}

std::vector<ChatMessage> FillPrompt(std::string_view text, InsightType type,
                                    const ExplanationTable& table) {
  std::string user = "Fill this " + std::string(ToString(type)) +
                     " template from the observation.\n" + TemplateFor(type) +
                     "\n\nFeatures:\n" + FeatureList(table) +
                     "\nUse exact feature names from the list. Use null for any field the "
                     "observation does not state; do not guess numbers.\n\nObservation: " +
                     std::string(text);
  return {{"system", kSystemPrompt}, {"user", std::move(user)}};
}

std::optional<Classification> ParseClassification(std::string_view raw) {
  const auto open = raw.find('{');
  const auto close = raw.rfind('}');
  if (open != std::string_view::npos && close != std::string_view::npos && close > open) {
    try {
      const json j = json::parse(raw.substr(open, close - open + 1));
      if (j.is_object() && j.contains("type") && j["type"].is_string()) {
        if (auto t = ParseInsightType(ToLower(j["type"].get<std::string>()))) {
          Classification c{*t, false};
          if (j.contains("has_condition") && j["has_condition"].is_boolean()) {
            c.has_condition = j["has_condition"].get<bool>();
          }
          return c;
        }
      }
    } catch (const json::exception&) {
    }
  }
  std::optional<InsightType> found;
  std::string word;
  const std::string lower = ToLower(raw) + " ";
  for (char ch : lower) {
    if (ch >= 'a' && ch <= 'z') {
      word += ch;
      continue;
    }
    if (auto t = ParseInsightType(word)) {
      if (found && *found != *t) return std::nullopt;
      found = t;
    }
    word.clear();
  }
  if (!found) return std::nullopt;
  return Classification{*found, false};
}

// ---------------------------------------------------------------------------
// Pipeline

Extractor::Extractor(ExtractorConfig config) : config_(std::move(config)) {
  config_.Check();
  if (config_.mode == ExtractorConfig::Mode::kLive) {
    HttpChatConfig http;
    http.endpoint = config_.provider_endpoint;
    http.model = config_.model_name;
    if (const char* key = std::getenv(config_.api_key_env.c_str())) http.api_key = key;
    http.temperature = config_.temperature;
    http.timeout_seconds = config_.timeout_seconds;
    client_ = std::make_shared<HttpChatClient>(std::move(http));
  }
}

Extractor::Extractor(ExtractorConfig config, std::shared_ptr<ChatClient> client)
    : config_(std::move(config)), client_(std::move(client)) {
  if (!client_) config_.Check();
}

std::shared_ptr<ChatClient> Extractor::ClientFor(std::string_view text) const {
  if (client_) return client_;
  return LoadFixture(config_.fixture_dir, text);
}

namespace {

std::string RepairText(const std::string& reason) {
  return "Your answer was rejected: " + reason + ". Reply again with the corrected JSON only.";
}

std::optional<json> ExtractObject(const std::string& raw) {
  const auto open = raw.find('{');
  const auto close = raw.rfind('}');
  if (open == std::string::npos || close == std::string::npos || close < open) return std::nullopt;
  try {
    json j = json::parse(raw.substr(open, close - open + 1));
    if (j.is_object()) return j;
  } catch (const json::exception&) {
  }
  return std::nullopt;
}

}  // namespace

Classification Extractor::Classify(std::string_view text, const ExplanationTable& table,
                                   ExtractionTrace* trace) const {
  if (Trim(text).empty()) throw Error(ErrorCode::kMalformedInput, "empty text");
  ExtractionTrace local;
  ExtractionTrace& t = trace ? *trace : local;
  auto client = ClientFor(text);
  std::vector<ChatMessage> messages = ClassifyPrompt(text, table);
  t.stage1.prompt = messages.back().content;

  for (int attempt = 0;; ++attempt) {
    const std::string raw = client->Complete(messages, "classify");
    if (attempt == 0) {
      t.stage1.raw_response = raw;
    } else {
      t.repairs.back().raw_response = raw;
    }
    if (auto c = ParseClassification(raw)) {
      t.stage1.classified_type = c->type;
      t.stage1.has_condition = c->has_condition;
      return *c;
    }
    if (attempt >= config_.max_repair_retries) break;
    const std::string reason = "no insight type (read, correlation or comparison) found";
    messages.push_back({"assistant", raw});
    messages.push_back({"user", RepairText(reason)});
    t.repairs.push_back({"classify", reason, messages.back().content, ""});
  }
  throw Error(ErrorCode::kUnparseableClassification,
              "classification failed after " + std::to_string(config_.max_repair_retries + 1) +
                  " attempt(s)");
}

FillResult Extractor::FillTemplate(std::string_view text, InsightType type,
                                   const ExplanationTable& table, ExtractionTrace* trace) const {
  ExtractionTrace local;
  ExtractionTrace& t = trace ? *trace : local;
  auto client = ClientFor(text);
  std::vector<ChatMessage> messages = FillPrompt(text, type, table);
  t.stage2.prompt = messages.back().content;

  std::optional<FillResult> best;  // bound, but with invalid values left
  std::string reason;
  for (int attempt = 0;; ++attempt) {
    const std::string raw = client->Complete(messages, "fill");
    if (attempt == 0) {
      t.stage2.raw_response = raw;
    } else {
      t.repairs.back().raw_response = raw;
    }

    reason.clear();
    auto doc = ExtractObject(raw);
    if (!doc) {
      reason = "the reply is not a JSON object";
    } else {
      if (!doc->contains("schema") || (*doc)["schema"].is_null()) (*doc)["schema"] = kInsightSchema;
      if (!doc->contains("type") || (*doc)["type"] != ToString(type)) {
        reason = "\"type\" must be \"" + std::string(ToString(type)) + "\"";
      }
    }
    if (reason.empty()) {
      try {
        BindResult bound = BindDocument(*doc, table);
        std::vector<std::string> invalid;
        for (const auto& s : bound.slots) {
          if (s.state == SlotState::kAmbiguous) invalid.push_back(s.path);
        }
        FillResult result{bound.document, bound.slots, std::nullopt};
        if (bound.bound) result.insight = bound.bound->insight;
        t.stage2.document = result.document;
        if (invalid.empty()) return result;
        reason = "invalid values at";
        for (const auto& p : invalid) reason += " " + p;
        best = std::move(result);
      } catch (const Error& e) {
        reason = e.what();
      }
    }
    if (attempt >= config_.max_repair_retries) break;
    messages.push_back({"assistant", raw});
    messages.push_back({"user", RepairText(reason)});
    t.repairs.push_back({"fill", reason, messages.back().content, ""});
  }
  // Documents that validate with explicit slots are still usable: the slots
  // go to the user. Anything else is rejected.
  if (best) return *best;
  throw Error(ErrorCode::kSchemaViolation, "template filling failed: " + reason);
}

ExtractionResult Extractor::Extract(std::string_view text, const ExplanationTable& table) const {
  ExtractionResult out;
  try {
    const Classification c = Classify(text, table, &out.trace);
    out.fill = FillTemplate(text, c.type, table, &out.trace);
    return out;
  } catch (const Error& e) {
    if (e.code() != ErrorCode::kUnparseableClassification &&
        e.code() != ErrorCode::kSchemaViolation && e.code() != ErrorCode::kProviderUnavailable) {
      throw;
    }
    ParseOutcome parsed = ParseControlled(text, table);
    if (parsed.kind == ParseOutcome::Kind::kNoParse) throw;
    out.trace.fallback = std::string(ErrorCodeName(e.code()));
    out.fill.document = std::move(parsed.document);
    out.fill.slots = std::move(parsed.slots);
    out.fill.insight = std::move(parsed.insight);
    return out;
  }
}

}  // namespace xlint
