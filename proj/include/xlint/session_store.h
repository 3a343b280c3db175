#pragma once

// File-backed store: one JSON file per session and per dataset under a data
// directory, written via rename so a crash never leaves a torn file.

#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>

#include "json.hpp"
#include "xlint/attribution_data.h"

namespace xlint {

class SessionStore {
 public:
  explicit SessionStore(std::string dir);

  const std::string& dir() const { return dir_; }

  // Content-addressed: the same table body always yields the same id.
  std::string PutDataset(const ExplanationTable& table, const std::string& raw_body);
  // nullptr when unknown.
  std::shared_ptr<const ExplanationTable> GetDataset(const std::string& id);

  std::string NewSessionId();
  std::optional<nlohmann::json> LoadSession(const std::string& id) const;
  void SaveSession(const nlohmann::json& session);

  // Serializes all operations on one session.
  std::unique_lock<std::mutex> Lock(const std::string& session_id);

 private:
  std::string dir_;
  std::mutex mu_;  // guards the maps below and id generation
  std::map<std::string, std::shared_ptr<std::mutex>> session_locks_;
  std::map<std::string, std::shared_ptr<const ExplanationTable>> tables_;
  std::uint64_t id_state_;
};

// Writes `contents` to `path` through a temporary file and rename.
void WriteFileAtomic(const std::string& path, const std::string& contents);

// UTC, second resolution: 2024-05-01T12:00:00Z.
std::string NowIso8601();

// Accepts ids made of [A-Za-z0-9_-] only (they become file names).
bool ValidId(const std::string& id);

}  // namespace xlint
