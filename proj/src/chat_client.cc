#include "xlint/chat_client.h"

#include "httplib.h"
#include "json.hpp"
#include "xlint/error.h"

namespace xlint {

using nlohmann::json;

HttpChatClient::HttpChatClient(HttpChatConfig config) : config_(std::move(config)) {
  const std::string& url = config_.endpoint;
  const auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos) {
    throw Error(ErrorCode::kProviderUnavailable, "endpoint is not a URL: " + url);
  }
  const auto path_start = url.find('/', scheme_end + 3);
  base_ = url.substr(0, path_start);
  path_ = path_start == std::string::npos ? "/" : url.substr(path_start);
}

std::string HttpChatClient::Complete(const std::vector<ChatMessage>& messages,
                                     std::string_view /*purpose*/) {
  json body = {{"model", config_.model}, {"temperature", config_.temperature}};
  json msgs = json::array();
  for (const auto& m : messages) msgs.push_back({{"role", m.role}, {"content", m.content}});
  body["messages"] = std::move(msgs);

  httplib::Client client(base_);
  client.set_connection_timeout(config_.timeout_seconds, 0);
  client.set_read_timeout(config_.timeout_seconds, 0);
  client.set_write_timeout(config_.timeout_seconds, 0);
  httplib::Headers headers;
  if (!config_.api_key.empty()) headers.emplace("Authorization", "Bearer " + config_.api_key);

  auto res = client.Post(path_, headers, body.dump(), "application/json");
  if (!res) {
    throw Error(ErrorCode::kProviderUnavailable,
                "request failed: " + httplib::to_string(res.error()));
  }
  if (res->status < 200 || res->status >= 300) {
    throw Error(ErrorCode::kProviderUnavailable, "provider returned HTTP " +
                                                     std::to_string(res->status));
  }
  try {
    const json reply = json::parse(res->body);
    return reply.at("choices").at(0).at("message").at("content").get<std::string>();
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kProviderUnavailable,
                std::string("unexpected provider response: ") + e.what());
  }
}

void ScriptedChatClient::Add(std::string purpose, std::string response) {
  std::lock_guard lock(mu_);
  queues_[std::move(purpose)].push_back(std::move(response));
}

std::string ScriptedChatClient::Complete(const std::vector<ChatMessage>& messages,
                                         std::string_view purpose) {
  std::lock_guard lock(mu_);
  requests_.push_back(messages);
  auto it = queues_.find(purpose);
  if (it == queues_.end() || it->second.empty()) {
    throw Error(ErrorCode::kProviderUnavailable,
                "no recorded response left for " + std::string(purpose));
  }
  std::string out = std::move(it->second.front());
  it->second.pop_front();
  return out;
}

std::vector<std::vector<ChatMessage>> ScriptedChatClient::requests() const {
  std::lock_guard lock(mu_);
  return requests_;
}

}  // namespace xlint
