#pragma once

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <memory>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

#include <json.hpp>

#include "qac/beam_search.hpp"
#include "qac/evaluation.hpp"
#include "qac/model.hpp"
#include "qac/session_store.hpp"
#include "qac/trie.hpp"

namespace httplib {
class Server;
}

namespace qac {

/// Raised while the service has no artifacts loaded.
class ServiceUnavailable : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct ServiceArtifacts {
  PopularityTrie main;
  SuffixTrie synth;
  std::optional<Checkpoint> checkpoint;
  std::string main_path;
  std::string synth_path;
  std::string model_path;
};

struct ServiceOptions {
  BeamConfig beam;
  ContextOptions context;
  SessionStoreOptions sessions;
  double latency_budget_ms = 2000.0;
};

enum class ServedSource { Main, Synth, Model };
const char* to_string(ServedSource source);

struct ServedSuggestion {
  std::string text;
  ServedSource source = ServedSource::Model;
  double score = 0.0;
};

struct SuggestResponse {
  std::vector<ServedSuggestion> suggestions;
  std::vector<std::string> trie_candidates;
  SuggestionSource context_source = SuggestionSource::None;
  bool seen = false;
  double latency_ms = 0.0;
  std::size_t session_length = 0;
};

nlohmann::ordered_json to_json(const SuggestResponse& response);

/// Lowercases ASCII, drops leading whitespace and collapses runs of
/// whitespace to one space. A trailing space is kept.
std::string normalize_prefix(std::string_view raw);

/// Session-aware suggestion engine behind the HTTP and interactive front ends.
/// Tries and model are read-only once loaded; the session store is the only
/// mutable shared state.
class SuggestService {
 public:
  explicit SuggestService(ServiceOptions options = {}, MillisClock clock = steady_millis_clock());

  /// Installs artifacts; requires a checkpoint. Replaces earlier artifacts.
  void load(ServiceArtifacts artifacts);
  bool ready() const;

  /// Throws InputError for an empty prefix, ServiceUnavailable before load().
  /// An empty session id means no session context.
  SuggestResponse suggest(const std::string& session_id, std::string_view prefix) const;

  /// Normalizes and appends a query; returns the session length. Throws
  /// InputError when the id is empty or the query is rejected.
  std::size_t submit(const std::string& session_id, std::string_view query);

  nlohmann::ordered_json health() const;

  SessionStore& sessions() { return store_; }
  const ServiceOptions& options() const { return options_; }

 private:
  struct Loaded;
  std::shared_ptr<const Loaded> current() const;

  ServiceOptions options_;
  SessionStore store_;
  mutable std::mutex loaded_mutex_;
  std::shared_ptr<const Loaded> loaded_;
};

/// HTTP front end: POST /suggest, POST /submit, GET /healthz. A sweeper
/// thread evicts idle sessions every `sweep_interval`.
class HttpFrontend {
 public:
  explicit HttpFrontend(SuggestService& service,
                        std::chrono::milliseconds sweep_interval = std::chrono::seconds(1));
  ~HttpFrontend();
  HttpFrontend(const HttpFrontend&) = delete;
  HttpFrontend& operator=(const HttpFrontend&) = delete;

  /// Binds to `port` (0 picks a free one) and returns the bound port, or -1.
  int bind(const std::string& host, int port);
  /// Blocks serving requests until stop().
  bool listen_after_bind();
  void stop();
  /// Blocks until the server accepts connections.
  void wait_until_ready() const;

 private:
  void sweep_loop();

  SuggestService& service_;
  std::unique_ptr<httplib::Server> server_;
  std::chrono::milliseconds sweep_interval_;
  std::thread sweeper_;
  std::mutex sweep_mutex_;
  std::condition_variable sweep_cv_;
  bool stopping_ = false;
};

}  // namespace qac
