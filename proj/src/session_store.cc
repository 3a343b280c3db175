#include "xlint/session_store.h"

#include <atomic>
#include <chrono>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include "xlint/error.h"
#include "xlint/text_util.h"

namespace xlint {

namespace fs = std::filesystem;
using nlohmann::json;

void WriteFileAtomic(const std::string& path, const std::string& contents) {
  static std::atomic<std::uint64_t> counter{0};
  const std::string tmp = path + ".tmp" + std::to_string(counter++);
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::kIo, "cannot write", tmp);
    out << contents;
    out.flush();
    if (!out) throw Error(ErrorCode::kIo, "write failed", tmp);
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) {
    fs::remove(tmp, ec);
    throw Error(ErrorCode::kIo, "rename failed", path);
  }
}

std::string NowIso8601() {
  const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

bool ValidId(const std::string& id) {
  if (id.empty() || id.size() > 64) return false;
  for (char c : id) {
    const bool ok = (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') ||
                    c == '-' || c == '_';
    if (!ok) return false;
  }
  return true;
}

SessionStore::SessionStore(std::string dir) : dir_(std::move(dir)) {
  fs::create_directories(fs::path(dir_) / "sessions");
  fs::create_directories(fs::path(dir_) / "datasets");
  std::random_device rd;
  id_state_ = (static_cast<std::uint64_t>(rd()) << 32) ^ rd() ^
              static_cast<std::uint64_t>(
                  std::chrono::steady_clock::now().time_since_epoch().count());
}

std::string SessionStore::PutDataset(const ExplanationTable& table, const std::string& raw_body) {
  const std::string id = "ds-" + Fnv1aHex(raw_body);
  std::lock_guard lock(mu_);
  const fs::path path = fs::path(dir_) / "datasets" / (id + ".json");
  if (!fs::exists(path)) WriteFileAtomic(path.string(), SerializeTable(table, TableFormat::kJson));
  tables_[id] = std::make_shared<const ExplanationTable>(table);
  return id;
}

std::shared_ptr<const ExplanationTable> SessionStore::GetDataset(const std::string& id) {
  if (!ValidId(id)) return nullptr;
  std::lock_guard lock(mu_);
  if (auto it = tables_.find(id); it != tables_.end()) return it->second;
  std::ifstream in(fs::path(dir_) / "datasets" / (id + ".json"), std::ios::binary);
  if (!in) return nullptr;
  std::ostringstream body;
  body << in.rdbuf();
  auto table = std::make_shared<const ExplanationTable>(
      LoadTableFromString(body.str(), TableFormat::kJson));
  tables_[id] = table;
  return table;
}

std::string SessionStore::NewSessionId() {
  std::lock_guard lock(mu_);
  for (;;) {
    // splitmix64 step over a randomly seeded state.
    std::uint64_t z = (id_state_ += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    z ^= z >> 31;
    char buf[20];
    std::snprintf(buf, sizeof buf, "s-%016llx", static_cast<unsigned long long>(z));
    if (!fs::exists(fs::path(dir_) / "sessions" / (std::string(buf) + ".json"))) return buf;
  }
}

std::optional<json> SessionStore::LoadSession(const std::string& id) const {
  if (!ValidId(id)) return std::nullopt;
  std::ifstream in(fs::path(dir_) / "sessions" / (id + ".json"), std::ios::binary);
  if (!in) return std::nullopt;
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kIo, std::string("corrupt session file: ") + e.what(), id);
  }
}

void SessionStore::SaveSession(const json& session) {
  const std::string id = session.at("id").get<std::string>();
  if (!ValidId(id)) throw Error(ErrorCode::kMalformedInput, "bad session id", id);
  WriteFileAtomic((fs::path(dir_) / "sessions" / (id + ".json")).string(), session.dump(2) + "\n");
}

std::unique_lock<std::mutex> SessionStore::Lock(const std::string& session_id) {
  std::shared_ptr<std::mutex> m;
  {
    std::lock_guard lock(mu_);
    auto& slot = session_locks_[session_id];
    if (!slot) slot = std::make_shared<std::mutex>();
    m = slot;
  }
  // The map keeps the mutex alive for the life of the store.
  return std::unique_lock<std::mutex>(*m);
}

}  // namespace xlint
