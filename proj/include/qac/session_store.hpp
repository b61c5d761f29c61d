#pragma once

#include <chrono>
#include <cstddef>
#include <functional>
#include <memory>
#include <mutex>
#include <shared_mutex>
#include <string>
#include <unordered_map>
#include <vector>

namespace qac {

/// Monotonic milliseconds; injectable for tests.
using MillisClock = std::function<std::int64_t()>;

MillisClock steady_millis_clock();

struct SessionStoreOptions {
  std::chrono::milliseconds idle_timeout{std::chrono::minutes(30)};
  std::size_t max_queries = 20;
};

/// In-memory recent queries per session id. Sessions idle for at least
/// idle_timeout are treated as absent and dropped on the next touch or sweep.
class SessionStore {
 public:
  explicit SessionStore(SessionStoreOptions options = {}, MillisClock clock = steady_millis_clock());

  /// Appends and refreshes activity; returns the session length afterwards.
  std::size_t append(const std::string& session_id, const std::string& query);

  /// Queries oldest first; empty for unknown or expired sessions.
  std::vector<std::string> queries(const std::string& session_id) const;

  /// Drops expired sessions; returns how many were removed.
  std::size_t evict_expired();

  std::size_t size() const;
  const SessionStoreOptions& options() const { return options_; }

 private:
  struct Entry {
    std::mutex mutex;
    std::vector<std::string> queries;
    std::int64_t last_activity = 0;
  };

  bool expired(std::int64_t last_activity, std::int64_t now) const;

  SessionStoreOptions options_;
  MillisClock clock_;
  mutable std::shared_mutex map_mutex_;
  std::unordered_map<std::string, std::shared_ptr<Entry>> sessions_;
};

}  // namespace qac
