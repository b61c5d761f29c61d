#include "qac/session_store.hpp"

#include "qac/errors.hpp"

namespace qac {

MillisClock steady_millis_clock() {
  return [] {
    return std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::steady_clock::now().time_since_epoch())
        .count();
  };
}

SessionStore::SessionStore(SessionStoreOptions options, MillisClock clock)
    : options_(options), clock_(std::move(clock)) {
  if (options_.max_queries == 0) throw ConfigError("session query cap must be positive");
  if (options_.idle_timeout.count() <= 0) throw ConfigError("session idle timeout must be positive");
  if (!clock_) throw ConfigError("session store needs a clock");
}

bool SessionStore::expired(std::int64_t last_activity, std::int64_t now) const {
  return now - last_activity >= options_.idle_timeout.count();
}

std::size_t SessionStore::append(const std::string& session_id, const std::string& query) {
  if (session_id.empty()) throw InputError("session id must not be empty");
  std::shared_ptr<Entry> entry;
  {
    std::shared_lock lock(map_mutex_);
    if (auto it = sessions_.find(session_id); it != sessions_.end()) entry = it->second;
  }
  if (!entry) {
    std::unique_lock lock(map_mutex_);
    auto& slot = sessions_[session_id];
    if (!slot) slot = std::make_shared<Entry>();
    entry = slot;
  }
  std::lock_guard guard(entry->mutex);
  const auto now = clock_();
  if (!entry->queries.empty() && expired(entry->last_activity, now)) entry->queries.clear();
  entry->queries.push_back(query);
  if (entry->queries.size() > options_.max_queries)
    entry->queries.erase(entry->queries.begin(),
                         entry->queries.begin() + static_cast<long>(entry->queries.size() - options_.max_queries));
  entry->last_activity = now;
  return entry->queries.size();
}

std::vector<std::string> SessionStore::queries(const std::string& session_id) const {
  std::shared_ptr<Entry> entry;
  {
    std::shared_lock lock(map_mutex_);
    auto it = sessions_.find(session_id);
    if (it == sessions_.end()) return {};
    entry = it->second;
  }
  std::lock_guard guard(entry->mutex);
  if (expired(entry->last_activity, clock_())) return {};
  return entry->queries;
}

std::size_t SessionStore::evict_expired() {
  const auto now = clock_();
  std::unique_lock lock(map_mutex_);
  std::size_t removed = 0;
  for (auto it = sessions_.begin(); it != sessions_.end();) {
    bool stale;
    {
      std::lock_guard guard(it->second->mutex);
      stale = expired(it->second->last_activity, now);
    }
    if (stale) {
      it = sessions_.erase(it);
      ++removed;
    } else {
      ++it;
    }
  }
  return removed;
}

std::size_t SessionStore::size() const {
  std::shared_lock lock(map_mutex_);
  return sessions_.size();
}

}  // namespace qac
