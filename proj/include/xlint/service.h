#pragma once

// HTTP JSON API over the pipeline. Handlers are plain methods returning
// (status, body) so they can be exercised without a socket; Mount() wires
// them onto an httplib server.

#include <memory>
#include <optional>
#include <string>

#include "json.hpp"
#include "xlint/chat_client.h"
#include "xlint/evaluator.h"
#include "xlint/extractor.h"
#include "xlint/reverse_mapper.h"
#include "xlint/session_store.h"

namespace httplib {
class Server;
}

namespace xlint {

struct ServiceConfig {
  std::string data_dir = "xlint-data";
  std::string host = "127.0.0.1";
  int port = 8080;
  std::size_t max_upload_bytes = 50u << 20;
  std::string cors_origin = "*";
  std::optional<ExtractorConfig> extractor;  // unset: use_llm requests get 502
  EvalOptions eval;
  MapperOptions mapper;

  // XLINT_DATA_DIR, XLINT_HOST, XLINT_PORT, XLINT_MAX_UPLOAD_BYTES,
  // XLINT_CORS_ORIGIN; the extractor is configured when XLINT_LLM_MODE is set.
  static ServiceConfig FromEnv();
};

struct ApiResponse {
  int status = 200;
  nlohmann::json body;
};

class Service {
 public:
  // `chat`, when given, backs the extractor instead of its configured mode.
  explicit Service(ServiceConfig config, std::shared_ptr<ChatClient> chat = nullptr);
  ~Service();

  ApiResponse UploadDataset(const std::string& body, const std::string& content_type);
  ApiResponse GetDataset(const std::string& dataset_id);
  ApiResponse CreateSession(const nlohmann::json& body);
  ApiResponse GetSession(const std::string& session_id);
  ApiResponse PutSpec(const std::string& session_id, const nlohmann::json& body);
  ApiResponse SubmitInsight(const std::string& session_id, const nlohmann::json& body);
  ApiResponse CompleteSlots(const std::string& session_id, std::size_t index,
                            const nlohmann::json& body);
  ApiResponse CheckInsight(const std::string& session_id, std::size_t index);

  void Mount(httplib::Server& server);

  // Blocks until Stop(). Returns false when the address cannot be bound.
  bool Listen();
  // Binds to an ephemeral port on config().host and serves on a background
  // thread; returns the port.
  int ListenInBackground();
  void Stop();

  const ServiceConfig& config() const { return config_; }

 private:
  struct Impl;
  ServiceConfig config_;
  std::unique_ptr<Impl> impl_;
};

// {n_rows, base_value, features[{name, kind, unit, description}],
//  prediction{mean, min, max}, warnings}
nlohmann::json ModelCard(const ExplanationTable& table);

// Writes `value` into `document` at a slot path such as
// "read.variable.feature" or "comparison.conditions[0].bounds".
void SetAtSlotPath(nlohmann::json& document, const std::string& slot_path,
                   const nlohmann::json& value);

}  // namespace xlint
