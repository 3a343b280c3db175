#pragma once

// Two-stage chat-model pipeline from free-form text to an insight document:
// classify the insight type, then fill the type's JSON template. Every
// document is validated and bound before it leaves this module; invalid ones
// are sent back for repair a bounded number of times.

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "xlint/attribution_data.h"
#include "xlint/chat_client.h"
#include "xlint/insight.h"

namespace xlint {

struct ExtractorConfig {
  enum class Mode { kLive, kFixture };

  std::string provider_endpoint = "https://api.openai.com/v1/chat/completions";
  std::string model_name = "gpt-4o";
  std::string api_key_env = "OPENAI_API_KEY";
  double temperature = 0;
  int max_repair_retries = 2;
  Mode mode = Mode::kFixture;
  std::string fixture_dir;
  int timeout_seconds = 30;

  // Throws Error(kMalformedInput).
  void Check() const;

  // XLINT_LLM_ENDPOINT, XLINT_LLM_MODEL, XLINT_LLM_API_KEY_ENV,
  // XLINT_LLM_TEMPERATURE, XLINT_LLM_MAX_REPAIRS, XLINT_LLM_MODE
  // (live|fixture), XLINT_LLM_FIXTURE_DIR, XLINT_LLM_TIMEOUT.
  static ExtractorConfig FromEnv();
};

struct Classification {
  InsightType type = InsightType::kRead;
  bool has_condition = false;

  bool operator==(const Classification&) const = default;
};

struct RepairRecord {
  std::string stage;   // "classify" | "fill"
  std::string reason;
  std::string prompt;
  std::string raw_response;
};

struct ExtractionTrace {
  struct {
    std::string prompt;
    std::string raw_response;
    std::optional<InsightType> classified_type;
    bool has_condition = false;
  } stage1;
  struct {
    std::string prompt;
    std::string raw_response;
    nlohmann::json document;
  } stage2;
  std::vector<RepairRecord> repairs;
  std::optional<std::string> fallback;  // why parse_controlled took over
};

nlohmann::json ToJson(const ExtractionTrace& trace);
ExtractionTrace TraceFromJson(const nlohmann::json& j);

struct FillResult {
  nlohmann::json document;  // bound document, possibly with open slots
  std::vector<SlotStatus> slots;
  std::optional<StructuredInsight> insight;  // set when no slots remain
};

struct ExtractionResult {
  FillResult fill;
  ExtractionTrace trace;
};

class Extractor {
 public:
  // Live mode talks to the configured endpoint; fixture mode replays
  // `{fixture_dir}/{FixtureName(text)}`.
  explicit Extractor(ExtractorConfig config);
  // Uses `client` for every call regardless of mode.
  Extractor(ExtractorConfig config, std::shared_ptr<ChatClient> client);

  const ExtractorConfig& config() const { return config_; }

  // Throws kProviderUnavailable, kUnparseableClassification.
  Classification Classify(std::string_view text, const ExplanationTable& table,
                          ExtractionTrace* trace = nullptr) const;

  // Throws kProviderUnavailable, kSchemaViolation.
  FillResult FillTemplate(std::string_view text, InsightType type, const ExplanationTable& table,
                          ExtractionTrace* trace = nullptr) const;

  // Classify + fill; on total failure falls back to the controlled-language
  // parser, and rethrows when that finds nothing either.
  ExtractionResult Extract(std::string_view text, const ExplanationTable& table) const;

 private:
  std::shared_ptr<ChatClient> ClientFor(std::string_view text) const;

  ExtractorConfig config_;
  std::shared_ptr<ChatClient> client_;
};

// Fixture file name for a text: 16 hex digits of its FNV-1a hash + ".json".
std::string FixtureName(std::string_view text);

// Fixture file body: {"text": ..., "trace": ...}.
nlohmann::json FixtureJson(std::string_view text, const ExtractionTrace& trace);

// Scripted client replaying a fixture trace. Throws kProviderUnavailable when
// the file is missing or unreadable.
std::shared_ptr<ScriptedChatClient> LoadFixture(const std::string& dir, std::string_view text);

// Prompts, exposed for fixture tooling and tests.
std::vector<ChatMessage> ClassifyPrompt(std::string_view text, const ExplanationTable& table);
std::vector<ChatMessage> FillPrompt(std::string_view text, InsightType type,
                                    const ExplanationTable& table);

// Parses a classification reply: a JSON object {"type", "has_condition"} or
// prose containing exactly one type word.
std::optional<Classification> ParseClassification(std::string_view raw);

}  // namespace xlint
