#pragma once

// Chat-completion providers: an OpenAI-compatible HTTP client and a scripted
// client that replays recorded responses.

#include <deque>
#include <map>
#include <mutex>
#include <string>
#include <vector>

namespace xlint {

struct ChatMessage {
  std::string role;  // "system" | "user" | "assistant"
  std::string content;
};

class ChatClient {
 public:
  virtual ~ChatClient() = default;

  // Returns the text of a single completion. `purpose` names the pipeline
  // stage ("classify", "fill", "recommend"); live providers ignore it.
  // Throws Error(kProviderUnavailable).
  virtual std::string Complete(const std::vector<ChatMessage>& messages,
                               std::string_view purpose) = 0;
};

struct HttpChatConfig {
  std::string endpoint;  // e.g. https://api.openai.com/v1/chat/completions
  std::string model;
  std::string api_key;   // sent as a bearer token when non-empty
  double temperature = 0;
  int timeout_seconds = 30;
};

class HttpChatClient : public ChatClient {
 public:
  explicit HttpChatClient(HttpChatConfig config);
  std::string Complete(const std::vector<ChatMessage>& messages,
                       std::string_view purpose) override;

 private:
  HttpChatConfig config_;
  std::string base_;  // scheme://host[:port]
  std::string path_;
};

// Replays responses per purpose, in order. Running out is a provider failure.
class ScriptedChatClient : public ChatClient {
 public:
  void Add(std::string purpose, std::string response);
  std::string Complete(const std::vector<ChatMessage>& messages,
                       std::string_view purpose) override;

  // Every request seen so far, in order.
  std::vector<std::vector<ChatMessage>> requests() const;

 private:
  mutable std::mutex mu_;
  std::map<std::string, std::deque<std::string>, std::less<>> queues_;
  std::vector<std::vector<ChatMessage>> requests_;
};

}  // namespace xlint
